//! The node harvest weight problem.
//!
//! ```text
//!     minimize    ‖y − M w‖² + ν ‖w‖²
//!     subject to  I w = 1,  w ≥ 0,  w_root ≥ floor,  ‖w‖₁ ≤ λ
//! ```
//!
//! The equality constraint is removed by writing `w = w_root + B d` with `B`
//! an orthonormal basis of the nullspace of `I` and `w_root = (1, 0, …, 0)`.
//! What remains is a strictly convex QP in `d` with inequality constraints
//! only, solved by [`solver::dual_active_set`].

mod nullspace;
pub mod solver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use nullspace::{nullspace_basis, rank_tolerance, Nullspace};
pub use solver::{KktResiduals, SolveStatus};

use crate::error::{Error, Result};
use crate::matrices::DesignPair;
use solver::{dual_active_set, DualActiveSetOptions};

pub const DEFAULT_NU: f64 = 0.001;
pub const DEFAULT_ROOT_FLOOR: f64 = 0.001;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Weights below this magnitude are rounding noise from active constraints
/// and become exactly 0.
pub const CLAMP_BAND: f64 = 1e-12;
/// Weights below this value mean the solver failed.
pub const NEGATIVE_WEIGHT_LIMIT: f64 = -1e-6;

/// Constraint rows with a smaller normal are structurally zero (the weight is
/// pinned by `I w = 1`) and are left out.
const ZERO_ROW: f64 = 1e-12;

/// Reduced problem `min dᵀHd + 2gᵀd + constant` s.t. `Aᵀd ≥ b`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// Constraint normals, one per column.
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
    /// `‖y − μ_root‖² + ν`, the loss at `d = 0`.
    pub constant: f64,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.bounds.len()
    }

    /// `dᵀHd + 2gᵀd + constant`
    pub fn objective(&self, d: &DVector<f64>) -> f64 {
        (d.dot(&(&self.hessian * d)) + 2.0 * self.linear.dot(d)) + self.constant
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub d: DVector<f64>,
    /// Full penalized loss, including the constant.
    pub objective: f64,
    pub multipliers: DVector<f64>,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Build the reduced problem. `lambda = None` means no ℓ1 budget.
pub fn assemble_reduced(
    design: &DesignPair,
    basis: &DMatrix<f64>,
    y: &[f64],
    nu: f64,
    lambda: Option<f64>,
    root_floor: f64,
) -> Result<QpProblem> {
    let q = design.q();
    if y.len() != design.n() {
        return Err(Error::Data(format!("response has {} values but the design has {} rows", y.len(), design.n())));
    }
    if basis.nrows() != q {
        return Err(Error::Data(format!("basis has {} rows but there are {q} nodes", basis.nrows())));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Config(format!("ridge parameter must be positive, got {nu}")));
    }
    if !(0.0..1.0).contains(&root_floor) {
        return Err(Error::Config(format!("root floor must lie in [0, 1), got {root_floor}")));
    }
    if let Some(l) = lambda {
        if l.is_nan() || l < 1.0 {
            return Err(Error::Config(format!("lambda must be at least 1, got {l}")));
        }
    }
    let k = basis.ncols();
    let mb = design.means_mul_dense(basis);
    let root_mean = design.means()[0];
    let resid = DVector::from_iterator(y.len(), y.iter().map(|v| v - root_mean));
    let mut hessian = mb.tr_mul(&mb);
    for i in 0..k {
        hessian[(i, i)] += nu;
    }
    // symmetrize away rounding in the product
    let hessian = (&hessian + hessian.transpose()) * 0.5;
    let linear = -mb.tr_mul(&resid) + basis.row(0).transpose() * nu;
    let constant = resid.norm_squared() + nu;

    let mut normals: Vec<DVector<f64>> = Vec::with_capacity(q + 1);
    let mut bounds = Vec::with_capacity(q + 1);
    for g in 0..q {
        let row = basis.row(g).transpose();
        if row.amax() <= ZERO_ROW {
            continue;
        }
        normals.push(row);
        bounds.push(if g == 0 { root_floor - 1.0 } else { 0.0 });
    }
    if let Some(l) = lambda.filter(|l| l.is_finite()) {
        let row: DVector<f64> = -basis.row_sum().transpose();
        if row.amax() > ZERO_ROW {
            normals.push(row);
            bounds.push(1.0 - l);
        }
    }
    let constraints =
        if normals.is_empty() { DMatrix::zeros(k, 0) } else { DMatrix::from_columns(&normals) };
    Ok(QpProblem { hessian, linear, constraints, bounds: DVector::from_vec(bounds), constant })
}

/// Solve with the dual active-set method. `max_iter` defaults to 50 times the
/// number of constraints.
pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: Option<usize>) -> Result<QpSolution> {
    let g = &problem.hessian * 2.0;
    let c = &problem.linear * 2.0;
    let m = problem.num_constraints();
    let opts = DualActiveSetOptions {
        feasibility_tol: tol * 1e-2,
        max_iter: max_iter.unwrap_or(50 * m.max(1)),
    };
    let sol = dual_active_set(&g, &c, &problem.constraints, &problem.bounds, opts)?;
    let objective = problem.objective(&sol.x);
    Ok(QpSolution {
        d: sol.x,
        objective,
        multipliers: sol.multipliers,
        kkt: sol.kkt,
        iterations: sol.iterations,
        status: sol.status,
    })
}

/// `w = w_root + B d`, with rounding-level entries set to zero.
pub fn recover_weights(d: &DVector<f64>, basis: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = (basis * d).iter().copied().collect();
    w[0] += 1.0;
    for (g, v) in w.iter_mut().enumerate() {
        if *v < NEGATIVE_WEIGHT_LIMIT {
            return Err(Error::Numerical(format!("recovered weight {g} is {v:e}; the solver did not converge")));
        }
        if *v < CLAMP_BAND {
            *v = 0.0;
        }
    }
    Ok(w)
}

/// `‖y − M w‖² + ν ‖w‖²`
pub fn penalized_loss(design: &DesignPair, y: &[f64], nu: f64, w: &[f64]) -> f64 {
    let fit = design.means_mul(w);
    let rss: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum();
    rss + nu * w.iter().map(|v| v * v).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestQpConfig {
    pub nu: f64,
    /// ℓ1 budget; `None` for no budget.
    pub lambda: Option<f64>,
    pub root_floor: f64,
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for HarvestQpConfig {
    fn default() -> Self {
        HarvestQpConfig { nu: DEFAULT_NU, lambda: None, root_floor: DEFAULT_ROOT_FLOOR, tol: DEFAULT_TOL, max_iter: None }
    }
}

/// Weights for a design together with everything needed to audit them.
#[derive(Debug, Clone)]
pub struct HarvestQp {
    pub weights: Vec<f64>,
    /// Nullspace dimension `q̃` (0 when the root is the only feasible point).
    pub nullspace_dim: usize,
    pub problem: Option<QpProblem>,
    pub solution: Option<QpSolution>,
    /// `‖y − M ŵ‖² + ν ‖ŵ‖²`
    pub loss: f64,
}

impl HarvestQp {
    pub fn status(&self) -> SolveStatus {
        self.solution.as_ref().map_or(SolveStatus::Converged, |s| s.status)
    }

    pub fn kkt(&self) -> KktResiduals {
        self.solution.as_ref().map(|s| s.kkt).unwrap_or_default()
    }
}

/// Solve the full weight problem for a design and (standardized) response.
pub fn solve_harvest(design: &DesignPair, y: &[f64], cfg: &HarvestQpConfig) -> Result<HarvestQp> {
    let q = design.q();
    if q == 0 {
        return Err(Error::Data("empty node set".into()));
    }
    if let Some(l) = cfg.lambda {
        if l.is_nan() || l < 1.0 {
            return Err(Error::Config(format!("lambda must be at least 1, got {l}")));
        }
    }
    let root_solution = || {
        let mut w = vec![0.0; q];
        w[0] = 1.0;
        w
    };
    // With a budget of exactly 1 the root is the only feasible point: every
    // feasible w has Σ w_g n_g = n, so ‖w‖₁ = 1 forces all mass onto nodes of
    // size n.
    if cfg.lambda == Some(1.0) {
        let w = root_solution();
        let loss = penalized_loss(design, y, cfg.nu, &w);
        return Ok(HarvestQp { weights: w, nullspace_dim: 0, problem: None, solution: None, loss });
    }
    let ns = match nullspace_basis(&design.indicator_matrix()) {
        Ok(ns) => ns,
        Err(Error::TrivialNullspace) => {
            let w = root_solution();
            let loss = penalized_loss(design, y, cfg.nu, &w);
            return Ok(HarvestQp { weights: w, nullspace_dim: 0, problem: None, solution: None, loss });
        }
        Err(e) => return Err(e),
    };
    let problem = assemble_reduced(design, &ns.basis, y, cfg.nu, cfg.lambda, cfg.root_floor)?;
    let solution = solve_qp(&problem, cfg.tol, cfg.max_iter)?;
    let weights = recover_weights(&solution.d, &ns.basis)?;
    let loss = penalized_loss(design, y, cfg.nu, &weights);
    Ok(HarvestQp { weights, nullspace_dim: ns.dim(), problem: Some(problem), solution: Some(solution), loss })
}

/// JSON-friendly snapshot of a reduced problem and its solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpDump {
    pub format_version: u32,
    pub dim: usize,
    pub hessian: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    /// One row per constraint `aᵀd ≥ b`.
    pub constraints: Vec<Vec<f64>>,
    pub bounds: Vec<f64>,
    pub constant: f64,
    pub solution: Option<Vec<f64>>,
    pub multipliers: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub kkt: Option<KktResiduals>,
    pub iterations: Option<usize>,
    pub status: Option<SolveStatus>,
}

impl QpDump {
    pub fn new(problem: &QpProblem, solution: Option<&QpSolution>) -> Self {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        QpDump {
            format_version: 1,
            dim: problem.dim(),
            hessian: rows(&problem.hessian),
            linear: problem.linear.iter().copied().collect(),
            constraints: rows(&problem.constraints.transpose()),
            bounds: problem.bounds.iter().copied().collect(),
            constant: problem.constant,
            solution: solution.map(|s| s.d.iter().copied().collect()),
            multipliers: solution.map(|s| s.multipliers.iter().copied().collect()),
            objective: solution.map(|s| s.objective),
            kkt: solution.map(|s| s.kkt),
            iterations: solution.map(|s| s.iterations),
            status: solution.map(|s| s.status),
        }
    }
}
