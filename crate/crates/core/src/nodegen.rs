//! Node generation: randomized regression trees grown on small subsamples,
//! whose nodes become the candidate rules of the harvest.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind, Schema, Value};
use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};

/// Trees stop splitting at this depth.
pub const MAX_TREE_DEPTH: usize = 8;

/// Constraint on a single variable.
///
/// Numeric constraints are half-open intervals `[lo, hi)`; either end may be
/// infinite. Categorical constraints are sorted, nonempty level subsets.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Interval { lo: f64, hi: f64 },
    Levels(Vec<u32>),
}

impl Constraint {
    pub fn contains(&self, v: Value) -> bool {
        match (self, v) {
            (Constraint::Interval { lo, hi }, Value::Number(x)) => *lo <= x && x < *hi,
            (Constraint::Levels(levels), Value::Level(l)) => levels.binary_search(&l).is_ok(),
            _ => false,
        }
    }

    /// Intersection with another constraint on the same variable.
    fn intersect(&self, other: &Constraint) -> Constraint {
        match (self, other) {
            (Constraint::Interval { lo: a, hi: b }, Constraint::Interval { lo: c, hi: d }) => {
                Constraint::Interval { lo: a.max(*c), hi: b.min(*d) }
            }
            (Constraint::Levels(a), Constraint::Levels(b)) => {
                Constraint::Levels(a.iter().filter(|l| b.binary_search(l).is_ok()).copied().collect())
            }
            _ => unreachable!("a variable is either numeric or categorical"),
        }
    }

    fn is_trivial(&self, kind: &FeatureKind) -> bool {
        match (self, kind) {
            (Constraint::Interval { lo, hi }, _) => *lo == f64::NEG_INFINITY && *hi == f64::INFINITY,
            (Constraint::Levels(l), FeatureKind::Categorical { levels }) => l.len() >= levels.len(),
            _ => false,
        }
    }

    fn signature(&self) -> SigPart {
        match self {
            Constraint::Interval { lo, hi } => SigPart::Interval(lo.to_bits(), hi.to_bits()),
            Constraint::Levels(l) => SigPart::Levels(l.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum SigPart {
    Interval(u64, u64),
    Levels(Vec<u32>),
}

type Signature = Vec<(usize, SigPart)>;

/// Serialized form of one constraint: `{var, type, lo, hi}` or
/// `{var, type, levels}`; an unbounded interval end is `null`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstraintRecord {
    var: usize,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<u32>>,
}

/// A rectangular rule with its cached training membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RuleRecord", into = "RuleRecord")]
pub struct NodeRule {
    /// Nontrivial constraints keyed by variable index.
    pub constraints: BTreeMap<usize, Constraint>,
    /// Sorted training rows inside the node. Not serialized.
    pub members: Vec<usize>,
    /// Mean of the (internally scaled) training response over `members`.
    pub mean: f64,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleRecord {
    constraints: Vec<ConstraintRecord>,
    mean: f64,
    size: usize,
}

impl From<NodeRule> for RuleRecord {
    fn from(rule: NodeRule) -> Self {
        let constraints = rule
            .constraints
            .into_iter()
            .map(|(var, c)| match c {
                Constraint::Interval { lo, hi } => ConstraintRecord {
                    var,
                    kind: "interval".into(),
                    lo: lo.is_finite().then_some(lo),
                    hi: hi.is_finite().then_some(hi),
                    levels: None,
                },
                Constraint::Levels(levels) => {
                    ConstraintRecord { var, kind: "levels".into(), lo: None, hi: None, levels: Some(levels) }
                }
            })
            .collect();
        RuleRecord { constraints, mean: rule.mean, size: rule.size }
    }
}

impl TryFrom<RuleRecord> for NodeRule {
    type Error = String;

    fn try_from(rec: RuleRecord) -> std::result::Result<Self, String> {
        let mut constraints = BTreeMap::new();
        for c in rec.constraints {
            let constraint = match c.kind.as_str() {
                "interval" => Constraint::Interval {
                    lo: c.lo.unwrap_or(f64::NEG_INFINITY),
                    hi: c.hi.unwrap_or(f64::INFINITY),
                },
                "levels" => {
                    let mut levels = c.levels.ok_or("levels constraint without levels")?;
                    levels.sort_unstable();
                    levels.dedup();
                    if levels.is_empty() {
                        return Err("empty level subset".into());
                    }
                    Constraint::Levels(levels)
                }
                other => return Err(format!("unknown constraint type {other:?}")),
            };
            if constraints.insert(c.var, constraint).is_some() {
                return Err(format!("variable {} constrained twice", c.var));
            }
        }
        Ok(NodeRule { constraints, members: Vec::new(), mean: rec.mean, size: rec.size })
    }
}

impl NodeRule {
    pub fn root(n: usize, mean: f64) -> Self {
        NodeRule { constraints: BTreeMap::new(), members: (0..n).collect(), mean, size: n }
    }

    pub fn is_root(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn interaction_order(&self) -> usize {
        self.constraints.len()
    }

    /// Membership of an observation: every constrained variable must be
    /// observed and inside its constraint. The root contains everything.
    pub fn contains(&self, obs: &[Value]) -> bool {
        self.constraints.iter().all(|(&var, c)| obs.get(var).is_some_and(|&v| c.contains(v)))
    }

    pub fn contains_row(&self, ds: &Dataset, row: usize) -> bool {
        self.constraints.iter().all(|(&var, c)| c.contains(ds.value(row, var)))
    }

    fn signature(&self) -> Signature {
        self.constraints.iter().map(|(&v, c)| (v, c.signature())).collect()
    }

    /// Human-readable rule, e.g. `entcoef ≥ 2 & ct ≥ 7.5e-5`.
    pub fn describe(&self, schema: &Schema) -> String {
        if self.is_root() {
            return "root".to_string();
        }
        self.constraints
            .iter()
            .map(|(&var, c)| {
                let feature = schema.features.get(var);
                let name = feature.map_or_else(|| format!("x{var}"), |f| f.name.clone());
                match c {
                    Constraint::Interval { lo, hi } => match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => format!("{} ≤ {name} < {}", fmt_number(*lo), fmt_number(*hi)),
                        (true, false) => format!("{name} ≥ {}", fmt_number(*lo)),
                        (false, true) => format!("{name} < {}", fmt_number(*hi)),
                        (false, false) => format!("{name} any"),
                    },
                    Constraint::Levels(levels) => {
                        let names: Vec<String> = levels
                            .iter()
                            .map(|&l| match feature.map(|f| &f.kind) {
                                Some(FeatureKind::Categorical { levels: table }) => {
                                    table.get(l as usize).cloned().unwrap_or_else(|| l.to_string())
                                }
                                _ => l.to_string(),
                            })
                            .collect();
                        format!("{name} ∈ {{{}}}", names.join(", "))
                    }
                }
            })
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

/// Compact rendering with six significant digits.
pub fn fmt_number(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let a = x.abs();
    if (1e-4..1e6).contains(&a) {
        let digits = (5 - a.log10().floor() as i32).max(0) as usize;
        let s = format!("{x:.digits$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.5e}");
        let (mant, exp) = s.split_once('e').unwrap_or((&s, "0"));
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{exp}")
    }
}

/// Membership with a schema check on the observation.
pub fn node_membership(rule: &NodeRule, obs: &[Value], schema: &Schema) -> Result<bool> {
    schema.check_observation(obs)?;
    if let Some((&var, _)) = rule.constraints.iter().next_back() {
        if var >= schema.len() {
            return Err(Error::Schema(format!("rule constrains variable {var}, schema has {}", schema.len())));
        }
    }
    Ok(rule.contains(obs))
}

/// Ordered rule collection with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet {
    nodes: Vec<NodeRule>,
}

impl NodeSet {
    /// Validates the root-first layout.
    pub fn new(nodes: Vec<NodeRule>) -> Result<Self> {
        match nodes.first() {
            Some(root) if root.is_root() => {}
            _ => return Err(Error::Data("node set must start with the unconstrained root".into())),
        }
        if nodes[1..].iter().any(NodeRule::is_root) {
            return Err(Error::Data("only index 0 may be the root".into()));
        }
        Ok(NodeSet { nodes })
    }

    pub fn nodes(&self) -> &[NodeRule] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [NodeRule] {
        &mut self.nodes
    }

    pub fn q(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> &NodeRule {
        &self.nodes[0]
    }

    /// Recompute every member list by scanning `ds`.
    pub fn recompute_members(&mut self, ds: &Dataset) {
        for rule in &mut self.nodes {
            rule.members = (0..ds.n()).filter(|&i| rule.contains_row(ds, i)).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Split {
    /// Left child `x < threshold`, right child `x ≥ threshold`.
    Numeric { var: usize, threshold: f64 },
    /// Left child takes `left`, right child the remaining levels.
    Categorical { var: usize, left: Vec<u32> },
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub depth: usize,
    pub parent: Option<usize>,
    /// Subsample rows reaching this node.
    pub rows: Vec<usize>,
    /// Merged path constraints (nontrivial only).
    pub constraints: BTreeMap<usize, Constraint>,
    pub split: Option<Split>,
    pub children: Option<(usize, usize)>,
}

/// Nodes in creation (breadth-first) order; index 0 is the tree root.
#[derive(Debug, Clone)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

struct BestSplit {
    sse: f64,
    split: Split,
}

fn sse_of(rows: &[usize], y: &[f64]) -> f64 {
    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&i| (y[i] - m) * (y[i] - m)).sum()
}

/// Sum of squared errors of the left (`k` rows) and right part of an ordered
/// sequence given running sums.
fn split_sse(sum_l: f64, sq_l: f64, k: usize, sum: f64, sq: f64, n: usize) -> f64 {
    let kl = k as f64;
    let kr = (n - k) as f64;
    let sum_r = sum - sum_l;
    let sq_r = sq - sq_l;
    (sq_l - sum_l * sum_l / kl).max(0.0) + (sq_r - sum_r * sum_r / kr).max(0.0)
}

fn best_numeric_split(ds: &Dataset, y: &[f64], rows: &[usize], var: usize) -> Option<BestSplit> {
    let mut pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|&i| match ds.value(i, var) {
            Value::Number(x) => (x, y[i]),
            _ => (f64::NAN, y[i]),
        })
        .collect();
    if pairs.iter().any(|(x, _)| x.is_nan()) {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let sum: f64 = pairs.iter().map(|p| p.1).sum();
    let sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
    let (mut sum_l, mut sq_l) = (0.0, 0.0);
    let mut best: Option<(f64, usize)> = None;
    for k in 0..n - 1 {
        sum_l += pairs[k].1;
        sq_l += pairs[k].1 * pairs[k].1;
        if pairs[k].0 < pairs[k + 1].0 {
            let sse = split_sse(sum_l, sq_l, k + 1, sum, sq, n);
            if best.is_none_or(|(b, _)| sse < b) {
                best = Some((sse, k));
            }
        }
    }
    best.map(|(sse, k)| {
        let (a, b) = (pairs[k].0, pairs[k + 1].0);
        let mut threshold = 0.5 * (a + b);
        if !(a < threshold && threshold <= b) {
            threshold = b;
        }
        BestSplit { sse, split: Split::Numeric { var, threshold } }
    })
}

fn best_categorical_split(ds: &Dataset, y: &[f64], rows: &[usize], var: usize) -> Option<BestSplit> {
    // level -> (sum, sum of squares, count)
    let mut stats: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for &i in rows {
        let Value::Level(l) = ds.value(i, var) else { return None };
        let e = stats.entry(l).or_default();
        e.0 += y[i];
        e.1 += y[i] * y[i];
        e.2 += 1;
    }
    if stats.len() < 2 {
        return None;
    }
    let mut order: Vec<(u32, (f64, f64, usize))> = stats.into_iter().collect();
    // Stable sort keeps ties in level order.
    order.sort_by(|a, b| (a.1 .0 / a.1 .2 as f64).total_cmp(&(b.1 .0 / b.1 .2 as f64)));
    let n = rows.len();
    let sum: f64 = order.iter().map(|o| o.1 .0).sum();
    let sq: f64 = order.iter().map(|o| o.1 .1).sum();
    let (mut sum_l, mut sq_l, mut k) = (0.0, 0.0, 0usize);
    let mut best: Option<(f64, usize)> = None;
    for (j, (_, (s, s2, c))) in order.iter().enumerate().take(order.len() - 1) {
        sum_l += s;
        sq_l += s2;
        k += c;
        let sse = split_sse(sum_l, sq_l, k, sum, sq, n);
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, j));
        }
    }
    best.map(|(sse, j)| {
        let mut left: Vec<u32> = order[..=j].iter().map(|o| o.0).collect();
        left.sort_unstable();
        BestSplit { sse, split: Split::Categorical { var, left } }
    })
}

fn child_constraint(split: &Split, left: bool, schema: &Schema) -> (usize, Constraint) {
    match split {
        Split::Numeric { var, threshold } => {
            let c = if left {
                Constraint::Interval { lo: f64::NEG_INFINITY, hi: *threshold }
            } else {
                Constraint::Interval { lo: *threshold, hi: f64::INFINITY }
            };
            (*var, c)
        }
        Split::Categorical { var, left: left_levels } => {
            if left {
                (*var, Constraint::Levels(left_levels.clone()))
            } else {
                let total = match &schema.features[*var].kind {
                    FeatureKind::Categorical { levels } => levels.len() as u32,
                    FeatureKind::Numeric => 0,
                };
                let rest = (0..total).filter(|l| left_levels.binary_search(l).is_err()).collect();
                (*var, Constraint::Levels(rest))
            }
        }
    }
}

fn merge_constraint(
    parent: &BTreeMap<usize, Constraint>,
    (var, c): (usize, Constraint),
    schema: &Schema,
) -> BTreeMap<usize, Constraint> {
    let mut out = parent.clone();
    let merged = match parent.get(&var) {
        Some(existing) => existing.intersect(&c),
        None => c,
    };
    if merged.is_trivial(&schema.features[var].kind) {
        out.remove(&var);
    } else {
        out.insert(var, merged);
    }
    out
}

fn split_goes_left(split: &Split, v: Value) -> bool {
    match (split, v) {
        (Split::Numeric { threshold, .. }, Value::Number(x)) => x < *threshold,
        (Split::Categorical { left, .. }, Value::Level(l)) => left.binary_search(&l).is_ok(),
        _ => false,
    }
}

fn split_var(split: &Split) -> usize {
    match split {
        Split::Numeric { var, .. } | Split::Categorical { var, .. } => *var,
    }
}

/// Grow one randomized regression tree on the subsample `sub` of `ds`
/// (imputed) with response `y` indexed by dataset row.
///
/// Each node tries `mtry` variables drawn without replacement and takes the
/// split with the smallest residual sum of squares. A node stays a leaf if it
/// has fewer than 2 rows, sits at depth [`MAX_TREE_DEPTH`], or no candidate
/// split strictly lowers its residual sum of squares.
pub fn grow_randomized_tree(sub: &[usize], ds: &Dataset, y: &[f64], mtry: usize, rng: &mut ChaCha8Rng) -> Result<Tree> {
    if sub.is_empty() {
        return Err(Error::Data("cannot grow a tree on an empty subsample".into()));
    }
    let p = ds.p();
    if mtry == 0 || mtry > p {
        return Err(Error::Config(format!("mtry must be in 1..={p}, got {mtry}")));
    }
    let schema = ds.schema();
    let mut nodes = vec![TreeNode {
        depth: 0,
        parent: None,
        rows: sub.to_vec(),
        constraints: BTreeMap::new(),
        split: None,
        children: None,
    }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let (depth, rows) = (nodes[id].depth, &nodes[id].rows);
        if rows.len() < 2 || depth >= MAX_TREE_DEPTH {
            continue;
        }
        let parent_sse = sse_of(rows, y);
        if parent_sse <= 0.0 {
            continue;
        }
        let mut best: Option<BestSplit> = None;
        for var in index::sample(rng, p, mtry) {
            let cand = match ds.columns()[var].kind() {
                FeatureKind::Numeric => best_numeric_split(ds, y, rows, var),
                FeatureKind::Categorical { .. } => best_categorical_split(ds, y, rows, var),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best.filter(|b| b.sse < parent_sse * (1.0 - 1e-12)) else { continue };
        let var = split_var(&best.split);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| split_goes_left(&best.split, ds.value(i, var)));
        let left_c = merge_constraint(&nodes[id].constraints, child_constraint(&best.split, true, &schema), &schema);
        let right_c = merge_constraint(&nodes[id].constraints, child_constraint(&best.split, false, &schema), &schema);
        let base = nodes.len();
        for (rows, constraints) in [(left_rows, left_c), (right_rows, right_c)] {
            nodes.push(TreeNode { depth: depth + 1, parent: Some(id), rows, constraints, split: None, children: None });
        }
        nodes[id].split = Some(best.split);
        nodes[id].children = Some((base, base + 1));
        queue.push_back(base);
        queue.push_back(base + 1);
    }
    Ok(Tree { nodes })
}

/// Turn every non-root tree node into a rule evaluated on the full training
/// data, keeping rules with at most `max_interaction` constrained variables
/// and at least `min_node_size` members.
pub fn extract_rules(tree: &Tree, ds: &Dataset, y: &[f64], max_interaction: usize, min_node_size: usize) -> Vec<NodeRule> {
    let mut full_members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    full_members[0] = (0..ds.n()).collect();
    let mut rules = Vec::new();
    for (id, node) in tree.nodes.iter().enumerate() {
        if let (Some(split), Some((l, r))) = (&node.split, node.children) {
            let var = split_var(split);
            let (left, right): (Vec<usize>, Vec<usize>) =
                full_members[id].iter().partition(|&&i| split_goes_left(split, ds.value(i, var)));
            full_members[l] = left;
            full_members[r] = right;
        }
        if id == 0 {
            continue;
        }
        let members = &full_members[id];
        if node.constraints.len() > max_interaction || members.len() < min_node_size || node.constraints.is_empty() {
            continue;
        }
        let mean = members.iter().map(|&i| y[i]).sum::<f64>() / members.len() as f64;
        rules.push(NodeRule { constraints: node.constraints.clone(), members: members.clone(), mean, size: members.len() });
    }
    rules
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeGenConfig {
    pub max_interaction: usize,
    pub min_node_size: usize,
    /// Candidate variables per split; `None` means `ceil(p/3)`.
    pub mtry: Option<usize>,
    /// Rows per tree; `None` means `max(ceil(n/10), 2 * min_node_size)`.
    pub subsample_size: Option<usize>,
    /// Tree budget; `None` means `10 * q`.
    pub max_trees: Option<usize>,
}

impl Default for NodeGenConfig {
    fn default() -> Self {
        NodeGenConfig { max_interaction: 2, min_node_size: 5, mtry: None, subsample_size: None, max_trees: None }
    }
}

impl NodeGenConfig {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| p.div_ceil(3)).clamp(1, p.max(1))
    }

    pub fn subsample_for(&self, n: usize) -> usize {
        self.subsample_size.unwrap_or_else(|| n.div_ceil(10).max(2 * self.min_node_size)).clamp(1, n)
    }
}

#[derive(Debug, Clone)]
pub struct NodeGeneration {
    pub nodes: NodeSet,
    pub trees_grown: usize,
    pub warning: Option<String>,
}

const DEDUP_STREAM: u64 = u64::MAX;
const TREE_BATCH: usize = 8;

fn grow_and_extract(ds: &Dataset, y: &[f64], cfg: &NodeGenConfig, seed: u64, tree_index: usize) -> Result<Vec<NodeRule>> {
    let mut rng = rng::stream(seed, tree_index as u64);
    let size = cfg.subsample_for(ds.n());
    let mut sub = index::sample(&mut rng, ds.n(), size).into_vec();
    sub.sort_unstable();
    let tree = grow_randomized_tree(&sub, ds, y, cfg.mtry_for(ds.p()), &mut rng)?;
    Ok(extract_rules(&tree, ds, y, cfg.max_interaction, cfg.min_node_size))
}

fn grow_batch(ds: &Dataset, y: &[f64], cfg: &NodeGenConfig, seed: u64, range: std::ops::Range<usize>) -> Result<Vec<Vec<NodeRule>>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(|t| grow_and_extract(ds, y, cfg, seed, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(|t| grow_and_extract(ds, y, cfg, seed, t)).collect()
    }
}

/// Among rules with identical member lists keep one chosen uniformly at
/// random (the root always wins its group). Survivors keep their order.
fn dedup_by_members(nodes: Vec<NodeRule>, rng: &mut ChaCha8Rng) -> Vec<NodeRule> {
    let mut groups: HashMap<&[usize], Vec<usize>> = HashMap::new();
    let mut order: Vec<&[usize]> = Vec::new();
    for (i, r) in nodes.iter().enumerate() {
        let g = groups.entry(&r.members).or_default();
        if g.is_empty() {
            order.push(&r.members);
        }
        g.push(i);
    }
    let mut keep = vec![false; nodes.len()];
    for key in order {
        let g = &groups[key];
        let chosen = if g[0] == 0 { 0 } else { g[rng.random_range(0..g.len())] };
        keep[chosen] = true;
    }
    nodes.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect()
}

/// Build a node set of exactly `q` rules (root first) from randomized trees.
///
/// Trees are grown on subsamples drawn without replacement; each tree `t`
/// uses its own generator `rng::stream(seed, t)`, so the result does not
/// depend on how many threads grow trees. Rules whose constraints were seen
/// before are skipped; once `q` rules exist, rules with identical members are
/// collapsed to one, and generation continues if that drops below `q`.
pub fn generate_node_set(ds: &Dataset, y: &[f64], q: usize, cfg: &NodeGenConfig, seed: u64) -> Result<NodeGeneration> {
    let n = ds.n();
    if q == 0 {
        return Err(Error::Config("q must be at least 1".into()));
    }
    if y.len() != n {
        return Err(Error::Data(format!("response has {} rows, dataset {n}", y.len())));
    }
    if cfg.min_node_size == 0 || n < 2 * cfg.min_node_size {
        return Err(Error::Config(format!(
            "need n >= 2 * min_node_size (n = {n}, min_node_size = {})",
            cfg.min_node_size
        )));
    }
    if ds.p() == 0 {
        return Err(Error::Data("dataset has no features".into()));
    }
    let root_mean = y.iter().sum::<f64>() / n as f64;
    let mut nodes = vec![NodeRule::root(n, root_mean)];
    if q == 1 {
        return Ok(NodeGeneration { nodes: NodeSet::new(nodes)?, trees_grown: 0, warning: None });
    }
    let max_trees = cfg.max_trees.unwrap_or(10 * q);
    let mut seen: HashSet<Signature> = HashSet::from([Vec::new()]);
    let mut dedup_rng = rng::stream(seed, DEDUP_STREAM);
    let mut trees_grown = 0;
    'outer: while trees_grown < max_trees {
        let end = (trees_grown + TREE_BATCH).min(max_trees);
        for rules in grow_batch(ds, y, cfg, seed, trees_grown..end)? {
            trees_grown += 1;
            for r in rules {
                if seen.insert(r.signature()) {
                    nodes.push(r);
                }
            }
            if nodes.len() >= q {
                nodes = dedup_by_members(nodes, &mut dedup_rng);
                if nodes.len() >= q {
                    break 'outer;
                }
            }
        }
    }
    let warning = if nodes.len() < q {
        nodes = dedup_by_members(nodes, &mut dedup_rng);
        Some(format!("only {} distinct nodes found after {trees_grown} trees (requested {q})", nodes.len()))
    } else {
        None
    };
    nodes.truncate(q);
    Ok(NodeGeneration { nodes: NodeSet::new(nodes)?, trees_grown, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{impute_rough, Column};
    use proptest::prelude::*;
    use rand::Rng;

    fn line_data() -> (Dataset, Vec<f64>) {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]], None).unwrap();
        (ds, vec![0.0, 0.0, 1.0, 1.0])
    }

    /// Exhaustive RSS over every midpoint of a 1-D sample.
    fn brute_force_best_threshold(x: &[f64], y: &[f64]) -> f64 {
        let mut xs = x.to_vec();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let rss = |idx: &[usize]| {
            if idx.is_empty() {
                return 0.0;
            }
            let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
        };
        let mut best = (f64::INFINITY, f64::NAN);
        for w in xs.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&i| x[i] < t);
            let s = rss(&l) + rss(&r);
            if s < best.0 {
                best = (s, t);
            }
        }
        best.1
    }

    #[test]
    fn first_split_matches_enumeration() {
        let (ds, y) = line_data();
        assert_eq!(brute_force_best_threshold(&[1.0, 2.0, 3.0, 4.0], &y), 2.5);
        let tree = grow_randomized_tree(&[0, 1, 2, 3], &ds, &y, 1, &mut rng::rng_from_seed(0)).unwrap();
        assert_eq!(tree.nodes[0].split, Some(Split::Numeric { var: 0, threshold: 2.5 }));
        // children are pure, so the tree stops there
        assert_eq!(tree.nodes.len(), 3);
    }

    #[test]
    fn constant_response_gives_single_leaf() {
        let (ds, _) = line_data();
        let tree = grow_randomized_tree(&[0, 1, 2, 3], &ds, &[2.0; 4], 1, &mut rng::rng_from_seed(0)).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert!(tree.nodes[0].split.is_none());
    }

    #[test]
    fn empty_subsample_is_an_error() {
        let (ds, y) = line_data();
        assert!(grow_randomized_tree(&[], &ds, &y, 1, &mut rng::rng_from_seed(0)).is_err());
        assert!(grow_randomized_tree(&[0, 1], &ds, &y, 2, &mut rng::rng_from_seed(0)).is_err());
    }

    #[test]
    fn depth_is_capped() {
        let n = 600;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 7919) % 613) as f64).collect();
        let ds = Dataset::from_rows(&rows, None).unwrap();
        let sub: Vec<usize> = (0..n).collect();
        let tree = grow_randomized_tree(&sub, &ds, &y, 1, &mut rng::rng_from_seed(1)).unwrap();
        assert_eq!(tree.depth(), MAX_TREE_DEPTH);
    }

    #[test]
    fn categorical_split_orders_levels_by_mean() {
        let levels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let col = Column::categorical("c", vec![Some(0), Some(1), Some(2), Some(0), Some(1), Some(2)], levels);
        let ds = Dataset::new(vec![col], None).unwrap();
        let y = [5.0, 0.0, 5.1, 5.0, 0.0, 5.1];
        let tree = grow_randomized_tree(&[0, 1, 2, 3, 4, 5], &ds, &y, 1, &mut rng::rng_from_seed(0)).unwrap();
        assert_eq!(tree.nodes[0].split, Some(Split::Categorical { var: 0, left: vec![1] }));
        assert_eq!(tree.nodes[2].constraints[&0], Constraint::Levels(vec![0, 2]));
    }

    #[test]
    fn same_variable_constraints_merge() {
        let schema = Dataset::from_rows(&[vec![0.0, 0.0]], None).unwrap().schema();
        let c1 = merge_constraint(&BTreeMap::new(), (0, Constraint::Interval { lo: f64::NEG_INFINITY, hi: 5.0 }), &schema);
        let c2 = merge_constraint(&c1, (0, Constraint::Interval { lo: f64::NEG_INFINITY, hi: 3.0 }), &schema);
        assert_eq!(c2.len(), 1);
        assert_eq!(c2[&0], Constraint::Interval { lo: f64::NEG_INFINITY, hi: 3.0 });
        let c3 = merge_constraint(&c1, (1, Constraint::Interval { lo: 2.0, hi: f64::INFINITY }), &schema);
        assert_eq!(c3.len(), 2);
    }

    #[test]
    fn extraction_filters_order_and_size() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 5) as f64]).collect();
        let ds = Dataset::from_rows(&rows, None).unwrap();
        let y: Vec<f64> = (0..20).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let tree = grow_randomized_tree(&(0..20).collect::<Vec<_>>(), &ds, &y, 2, &mut rng::rng_from_seed(3)).unwrap();
        let rules = extract_rules(&tree, &ds, &y, 2, 5);
        assert!(rules.iter().all(|r| r.size >= 5 && r.interaction_order() <= 2));
        // the pure left child x0 < 3.5 has 4 members and is dropped at size 5
        assert!(rules.iter().all(|r| r.members != vec![0, 1, 2, 3]));
        let all = extract_rules(&tree, &ds, &y, 2, 1);
        assert!(all.iter().any(|r| r.members == vec![0, 1, 2, 3]));
        let main_only = extract_rules(&tree, &ds, &y, 1, 1);
        assert!(main_only.iter().all(|r| r.interaction_order() == 1));
    }

    #[test]
    fn membership_rules() {
        let schema = Dataset::from_rows(&[vec![0.0, 0.0]], None).unwrap().schema();
        let root = NodeRule::root(3, 0.0);
        assert!(node_membership(&root, &[Value::Missing, Value::Missing], &schema).unwrap());
        let mut c = BTreeMap::new();
        c.insert(0, Constraint::Interval { lo: 2.0, hi: f64::INFINITY });
        let rule = NodeRule { constraints: c, members: vec![], mean: 0.0, size: 0 };
        assert!(!node_membership(&rule, &[Value::Missing, Value::Number(1.0)], &schema).unwrap());
        assert!(node_membership(&rule, &[Value::Number(2.0), Value::Missing], &schema).unwrap());
        assert!(!node_membership(&rule, &[Value::Number(1.999), Value::Missing], &schema).unwrap());
        assert!(node_membership(&rule, &[Value::Number(2.0)], &schema).is_err());
    }

    #[test]
    fn describe_renders_rules() {
        let ds = Dataset::from_rows(&[vec![0.0, 0.0]], None).unwrap();
        let schema = ds.schema();
        let mut c = BTreeMap::new();
        c.insert(0, Constraint::Interval { lo: 2.0, hi: f64::INFINITY });
        c.insert(1, Constraint::Interval { lo: 7.5e-5, hi: 0.25 });
        let rule = NodeRule { constraints: c, members: vec![], mean: 0.0, size: 0 };
        assert_eq!(rule.describe(&schema), "x1 ≥ 2 & 7.5e-5 ≤ x2 < 0.25");
        assert_eq!(NodeRule::root(1, 0.0).describe(&schema), "root");
        assert_eq!(fmt_number(550000.0), "550000");
        assert_eq!(fmt_number(1.0 / 3.0), "0.333333");
    }

    #[test]
    fn rule_json_roundtrip() {
        let mut c = BTreeMap::new();
        c.insert(0, Constraint::Interval { lo: f64::NEG_INFINITY, hi: 0.1 + 0.2 });
        c.insert(3, Constraint::Levels(vec![0, 2]));
        let rule = NodeRule { constraints: c, members: vec![1, 2], mean: 1.0 / 3.0, size: 2 };
        let s = serde_json::to_string(&rule).unwrap();
        assert!(s.contains("\"type\":\"interval\""));
        assert!(!s.contains("members"));
        let back: NodeRule = serde_json::from_str(&s).unwrap();
        assert_eq!(back.constraints, rule.constraints);
        assert_eq!(back.mean.to_bits(), rule.mean.to_bits());
    }

    fn sine_like(n: usize, seed: u64) -> (Dataset, Vec<f64>) {
        let mut r = rng::rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>(), r.random::<f64>()]).collect();
        let y = rows.iter().map(|x| (6.0 * x[0]).sin() * (6.0 * x[1]).sin() + 0.3 * r.random::<f64>()).collect();
        (Dataset::from_rows(&rows, None).unwrap(), y)
    }

    #[test]
    fn q_one_is_root_only() {
        let (ds, y) = sine_like(50, 1);
        let g = generate_node_set(&ds, &y, 1, &NodeGenConfig::default(), 0).unwrap();
        assert_eq!(g.nodes.q(), 1);
        assert!(g.nodes.root().is_root());
        assert_eq!(g.nodes.root().size, 50);
    }

    #[test]
    fn node_set_invariants_and_determinism() {
        let (ds, y) = sine_like(300, 2);
        let ds = impute_rough(&ds);
        let cfg = NodeGenConfig::default();
        let g = generate_node_set(&ds, &y, 400, &cfg, 9).unwrap();
        assert_eq!(g.nodes.q(), 400);
        assert!(g.warning.is_none());
        let nodes = g.nodes.nodes();
        assert_eq!(nodes[0].members, (0..300).collect::<Vec<_>>());
        let mut seen = HashSet::new();
        for r in nodes {
            assert!(seen.insert(r.members.clone()), "duplicate member list");
            let scanned: Vec<usize> = (0..ds.n()).filter(|&i| r.contains_row(&ds, i)).collect();
            assert_eq!(scanned, r.members);
            assert_eq!(r.size, r.members.len());
            let m = r.members.iter().map(|&i| y[i]).sum::<f64>() / r.size as f64;
            assert!((m - r.mean).abs() < 1e-12);
            if !r.is_root() {
                assert!(r.interaction_order() <= 2 && r.size >= 5);
            }
        }
        let again = generate_node_set(&ds, &y, 400, &cfg, 9).unwrap();
        assert_eq!(again.nodes, g.nodes);
        let other = generate_node_set(&ds, &y, 400, &cfg, 10).unwrap();
        assert_ne!(other.nodes, g.nodes);
    }

    #[test]
    fn tree_cap_returns_partial_set_with_warning() {
        let (ds, y) = sine_like(40, 3);
        let cfg = NodeGenConfig { max_trees: Some(2), ..NodeGenConfig::default() };
        let g = generate_node_set(&ds, &y, 10_000, &cfg, 0).unwrap();
        assert!(g.nodes.q() < 10_000);
        assert!(g.warning.is_some());
        assert_eq!(g.trees_grown, 2);
    }

    #[test]
    fn generation_preconditions() {
        let (ds, y) = sine_like(8, 3);
        assert!(generate_node_set(&ds, &y, 10, &NodeGenConfig::default(), 0).is_err());
        assert!(generate_node_set(&ds, &y, 0, &NodeGenConfig { min_node_size: 2, ..Default::default() }, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rules_respect_limits(seed in any::<u64>(), max_interaction in 1usize..3, min_node_size in 2usize..8) {
            let (ds, y) = sine_like(120, seed);
            let cfg = NodeGenConfig { max_interaction, min_node_size, ..Default::default() };
            let g = generate_node_set(&ds, &y, 80, &cfg, seed).unwrap();
            for r in &g.nodes.nodes()[1..] {
                prop_assert!(r.interaction_order() <= max_interaction);
                prop_assert!(r.size >= min_node_size);
                prop_assert!(r.interaction_order() >= 1);
            }
        }
    }
}
