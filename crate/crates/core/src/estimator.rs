//! Fitting and using node harvest models.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{self, impute_rough, Dataset, ResponseScaler, Schema, Value};
use crate::error::{Error, Result};
use crate::matrices::build_design;
use crate::nodegen::{generate_node_set, NodeGenConfig, NodeRule, NodeSet};
use crate::qp::{self, HarvestQp, HarvestQpConfig, KktResiduals, SolveStatus};

pub const FORMAT_VERSION: u32 = 1;

/// Default weight threshold for counting a node as selected.
pub const SELECTED_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Regression,
    BinaryClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub q: usize,
    pub max_interaction: usize,
    pub min_node_size: usize,
    /// `None` picks `ceil(p/3)`.
    pub mtry: Option<usize>,
    /// ℓ1 budget on the weights; `None` means unbounded.
    pub lambda: Option<f64>,
    pub nu: f64,
    pub root_floor: f64,
    pub seed: u64,
    pub task: Task,
    /// Rows per tree; `None` picks `max(ceil(n/10), 2 * min_node_size)`.
    #[serde(default)]
    pub subsample_size: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    qp::DEFAULT_TOL
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            q: 1000,
            max_interaction: 2,
            min_node_size: 5,
            mtry: None,
            lambda: None,
            nu: qp::DEFAULT_NU,
            root_floor: qp::DEFAULT_ROOT_FLOOR,
            seed: 0,
            task: Task::Regression,
            subsample_size: None,
            tol: qp::DEFAULT_TOL,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Config("q must be at least 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(Error::Config("min_node_size must be at least 1".into()));
        }
        if self.max_interaction == 0 {
            return Err(Error::Config("max_interaction must be at least 1".into()));
        }
        if let Some(l) = self.lambda {
            if l.is_nan() || l < 1.0 {
                return Err(Error::Config(format!("lambda must be at least 1, got {l}")));
            }
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("nu must be positive, got {}", self.nu)));
        }
        if !(0.0..1.0).contains(&self.root_floor) {
            return Err(Error::Config(format!("root floor must lie in [0, 1), got {}", self.root_floor)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("solver tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn nodegen(&self) -> NodeGenConfig {
        NodeGenConfig {
            max_interaction: self.max_interaction,
            min_node_size: self.min_node_size,
            mtry: self.mtry,
            subsample_size: self.subsample_size,
            max_trees: None,
        }
    }

    fn qp(&self) -> HarvestQpConfig {
        HarvestQpConfig { nu: self.nu, lambda: self.lambda, root_floor: self.root_floor, tol: self.tol, max_iter: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub p: usize,
    pub trees_grown: usize,
    /// Dimension of the nullspace of the membership matrix.
    pub nullspace_dim: usize,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Penalized loss `‖y − Mŵ‖² + ν‖ŵ‖²` on the internal response scale.
    pub loss: f64,
    pub nonzero_nodes: usize,
    pub kkt: KktResiduals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// A fitted model. Node means are in the units of the response.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestModel {
    pub schema: Schema,
    pub response_name: Option<String>,
    pub config: FitConfig,
    pub scaler: ResponseScaler,
    pub nodes: NodeSet,
    pub weights: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Everything produced while fitting, for diagnostics and debugging.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: HarvestModel,
    pub qp: HarvestQp,
    /// In-sample fitted values `M ŵ` on the internal response scale.
    pub fitted_internal: Vec<f64>,
    /// The response on the internal scale.
    pub response_internal: Vec<f64>,
}

pub fn fit(ds: &Dataset, cfg: &FitConfig) -> Result<HarvestModel> {
    fit_detailed(ds, cfg).map(|out| out.model)
}

/// [`fit`] with an ℓ1 budget `lambda` on the weights.
pub fn fit_regularized(ds: &Dataset, cfg: &FitConfig, lambda: f64) -> Result<HarvestModel> {
    fit(ds, &FitConfig { lambda: Some(lambda), ..cfg.clone() })
}

pub fn fit_detailed(ds: &Dataset, cfg: &FitConfig) -> Result<FitOutput> {
    cfg.validate()?;
    let y = ds.response().ok_or_else(|| Error::Data("dataset has no response".into()))?;
    let imputed = impute_rough(ds);
    let (z, scaler) = match cfg.task {
        Task::Regression => data::standardize_response(y)?,
        Task::BinaryClassification => {
            if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!("classification response must be 0 or 1, found {bad}")));
            }
            (y.to_vec(), ResponseScaler::IDENTITY)
        }
    };
    let generation = generate_node_set(&imputed, &z, cfg.q, &cfg.nodegen(), cfg.seed)?;
    let mut nodes = generation.nodes;
    if cfg.task == Task::Regression {
        // exact zero so that the root maps back to exactly the training mean
        nodes.nodes_mut()[0].mean = 0.0;
    }
    let design = build_design(&nodes, &imputed)?;
    let solved = qp::solve_harvest(&design, &z, &cfg.qp())?;
    let fitted_internal = design.means_mul(&solved.weights);

    for rule in nodes.nodes_mut() {
        rule.mean = scaler.inverse(rule.mean);
    }
    let diagnostics = Diagnostics {
        n: ds.n(),
        p: ds.p(),
        trees_grown: generation.trees_grown,
        nullspace_dim: solved.nullspace_dim,
        status: solved.status(),
        iterations: solved.solution.as_ref().map_or(0, |s| s.iterations),
        loss: solved.loss,
        nonzero_nodes: solved.weights.iter().filter(|&&w| w > SELECTED_TOL).count(),
        kkt: solved.kkt(),
        warning: generation.warning,
    };
    let model = HarvestModel {
        schema: ds.schema(),
        response_name: ds.response_name().map(str::to_string),
        config: cfg.clone(),
        scaler,
        nodes,
        weights: solved.weights.clone(),
        diagnostics,
    };
    Ok(FitOutput { model, qp: solved, fitted_internal, response_internal: z })
}

/// `Σ (w_g / W) μ_g` with `W = Σ w_g`, summed in the order given.
///
/// Normalizing each weight first makes a single node return its mean exactly.
pub fn weighted_mean(pairs: &[(f64, f64)]) -> f64 {
    let total: f64 = pairs.iter().map(|(w, _)| w).sum();
    pairs.iter().map(|&(w, m)| (w / total) * m).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub probability: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainEntry {
    pub node: usize,
    pub rule: String,
    pub weight: f64,
    pub mean: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Nodes containing the observation, by decreasing weight.
    pub entries: Vec<ExplainEntry>,
    pub prediction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedNode<'a> {
    pub index: usize,
    pub rule: &'a NodeRule,
    pub weight: f64,
}

impl HarvestModel {
    pub fn q(&self) -> usize {
        self.nodes.q()
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    /// Indices of weighted nodes containing `obs`, in node order. The root is
    /// always among them.
    pub fn active_nodes(&self, obs: &[Value]) -> Result<Vec<usize>> {
        self.schema.check_observation(obs)?;
        Ok(self
            .nodes
            .nodes()
            .iter()
            .zip(&self.weights)
            .enumerate()
            .filter(|(_, (rule, &w))| w > 0.0 && rule.contains(obs))
            .map(|(g, _)| g)
            .collect())
    }

    fn mean_over(&self, active: &[usize]) -> f64 {
        let pairs: Vec<(f64, f64)> = active.iter().map(|&g| (self.weights[g], self.nodes.nodes()[g].mean)).collect();
        weighted_mean(&pairs)
    }

    /// Weighted mean of the node means over the nodes containing `obs`.
    /// Constraints on missing values are treated as not satisfied.
    pub fn predict(&self, obs: &[Value]) -> Result<f64> {
        let active = self.active_nodes(obs)?;
        Ok(self.mean_over(&active))
    }

    pub fn predict_class(&self, obs: &[Value], threshold: f64) -> Result<ClassPrediction> {
        if self.task() != Task::BinaryClassification {
            return Err(Error::Config("class predictions need a classification model".into()));
        }
        let probability = self.predict(obs)?.clamp(0.0, 1.0);
        Ok(ClassPrediction { probability, label: u8::from(probability >= threshold) })
    }

    /// Predictions for every row of a dataset with the model's schema.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        ds.check_schema(&self.schema)?;
        (0..ds.n()).map(|i| self.predict(&ds.row(i))).collect()
    }

    pub fn explain(&self, obs: &[Value]) -> Result<Explanation> {
        let active = self.active_nodes(obs)?;
        let prediction = self.mean_over(&active);
        let mut entries: Vec<ExplainEntry> = active
            .iter()
            .map(|&g| {
                let rule = &self.nodes.nodes()[g];
                ExplainEntry {
                    node: g,
                    rule: rule.describe(&self.schema),
                    weight: self.weights[g],
                    mean: rule.mean,
                    size: rule.size,
                }
            })
            .collect();
        entries.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.node.cmp(&b.node)));
        Ok(Explanation { entries, prediction })
    }

    /// Nodes with weight above `tol`, by decreasing weight.
    pub fn selected_nodes(&self, tol: f64) -> Vec<SelectedNode<'_>> {
        let mut out: Vec<SelectedNode<'_>> = self
            .nodes
            .nodes()
            .iter()
            .zip(&self.weights)
            .enumerate()
            .filter(|(_, (_, &w))| w > tol)
            .map(|(index, (rule, &weight))| SelectedNode { index, rule, weight })
            .collect();
        out.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.index.cmp(&b.index)));
        out
    }

    /// `1 / ‖ŵ‖₁`, which equals the weighted average fraction of samples per
    /// node `Σ ŵ_g (n_g / n) / Σ ŵ_g`.
    pub fn avg_sample_fraction(&self) -> f64 {
        1.0 / self.weights.iter().sum::<f64>()
    }

    /// Node set with member lists recomputed on the training data; fails if
    /// the node sizes do not match.
    pub fn training_nodes(&self, train: &Dataset) -> Result<NodeSet> {
        train.check_schema(&self.schema)?;
        if train.n() != self.diagnostics.n {
            return Err(Error::Data(format!(
                "model was fitted on {} rows, dataset has {}",
                self.diagnostics.n,
                train.n()
            )));
        }
        let imputed = impute_rough(train);
        let mut nodes = self.nodes.clone();
        nodes.recompute_members(&imputed);
        if let Some((g, rule)) = nodes.nodes().iter().enumerate().find(|(_, r)| r.members.len() != r.size) {
            return Err(Error::Data(format!(
                "node {g} holds {} rows of this dataset but {} training rows",
                rule.members.len(),
                rule.size
            )));
        }
        Ok(nodes)
    }

    /// In-sample fitted values `Σ_g ŵ_g μ_g 1{i ∈ Q_g}`.
    pub fn fitted_values(&self, train: &Dataset) -> Result<Vec<f64>> {
        let nodes = self.training_nodes(train)?;
        let mut out = vec![0.0; train.n()];
        for (rule, &w) in nodes.nodes().iter().zip(&self.weights) {
            if w > 0.0 {
                for &i in &rule.members {
                    out[i] += w * rule.mean;
                }
            }
        }
        Ok(out)
    }

    /// `S_ij = Σ_g ŵ_g / n_g · 1{i, j ∈ Q_g}`, so that the fitted values are
    /// `S y`.
    pub fn smoothing_matrix(&self, train: &Dataset) -> Result<DMatrix<f64>> {
        let nodes = self.training_nodes(train)?;
        let n = train.n();
        let mut s = DMatrix::zeros(n, n);
        for (rule, &w) in nodes.nodes().iter().zip(&self.weights) {
            if w <= 0.0 || rule.members.is_empty() {
                continue;
            }
            let v = w / rule.members.len() as f64;
            for &j in &rule.members {
                let mut col = s.column_mut(j);
                for &i in &rule.members {
                    col[i] += v;
                }
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFileRef {
            format_version: FORMAT_VERSION,
            schema: &self.schema,
            response_name: self.response_name.as_deref(),
            config: &self.config,
            scaler: &self.scaler,
            nodes: &self.nodes,
            weights: &self.weights,
            diagnostics: &self.diagnostics,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let model = HarvestModel {
            schema: file.schema,
            response_name: file.response_name,
            config: file.config,
            scaler: file.scaler,
            nodes: NodeSet::new(file.nodes).map_err(|e| Error::Model(e.to_string()))?,
            weights: file.weights,
            diagnostics: file.diagnostics,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        HarvestModel::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Model(msg));
        if self.weights.len() != self.nodes.q() {
            return bad(format!("{} weights for {} nodes", self.weights.len(), self.nodes.q()));
        }
        if let Some((g, w)) = self.weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return bad(format!("weight {g} is {w}"));
        }
        if self.weights[0] < self.config.root_floor - 1e-9 {
            return bad(format!("root weight {} is below the floor {}", self.weights[0], self.config.root_floor));
        }
        if !(self.scaler.scale > 0.0 && self.scaler.scale.is_finite() && self.scaler.center.is_finite()) {
            return bad("invalid response scaler".into());
        }
        let p = self.schema.len();
        for (g, rule) in self.nodes.nodes().iter().enumerate() {
            if !rule.mean.is_finite() {
                return bad(format!("node {g} has a non-finite mean"));
            }
            if let Some((&var, _)) = rule.constraints.iter().next_back() {
                if var >= p {
                    return bad(format!("node {g} constrains variable {var} but the schema has {p} features"));
                }
            }
            if self.task() == Task::BinaryClassification && !(0.0..=1.0).contains(&rule.mean) {
                return bad(format!("node {g} has class fraction {} outside [0, 1]", rule.mean));
            }
        }
        let n = self.diagnostics.n as f64;
        let total: f64 = self.nodes.nodes().iter().zip(&self.weights).map(|(r, w)| w * r.size as f64).sum();
        if (total - n).abs() > 1e-4 {
            return bad(format!("weighted node sizes sum to {total}, expected n = {n}"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format_version: u32,
    schema: &'a Schema,
    #[serde(skip_serializing_if = "Option::is_none")]
    response_name: Option<&'a str>,
    config: &'a FitConfig,
    scaler: &'a ResponseScaler,
    nodes: &'a NodeSet,
    weights: &'a [f64],
    diagnostics: &'a Diagnostics,
}

#[derive(Deserialize)]
struct ModelFile {
    format_version: u32,
    schema: Schema,
    #[serde(default)]
    response_name: Option<String>,
    config: FitConfig,
    scaler: ResponseScaler,
    nodes: Vec<NodeRule>,
    weights: Vec<f64>,
    diagnostics: Diagnostics,
}
