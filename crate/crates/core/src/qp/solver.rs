//! Dual active-set method for strictly convex quadratic programs
//! (Goldfarb & Idnani, 1983).
//!
//! ```text
//!     minimize    ½ xᵀ G x + cᵀ x
//!     subject to  a_iᵀ x ≥ b_i      i = 1..m
//! ```
//!
//! The method starts at the unconstrained minimizer and adds violated
//! constraints one at a time while keeping dual feasibility. The active set
//! is represented by `J = L⁻ᵀ Q` and an upper triangular `R` with
//! `Jᵀ N = [R; 0]`, where `G = L Lᵀ` and `N` holds the active normals.
//! Both are updated with Givens rotations when constraints enter or leave.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

/// First-order optimality residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖G x + c − Σ λ_i a_i‖_∞`
    pub stationarity: f64,
    /// `max_i max(0, b_i − a_iᵀ x)`
    pub primal_infeasibility: f64,
    /// `max_i |λ_i (a_iᵀ x − b_i)|`
    pub complementarity: f64,
    /// `min_i λ_i` (0 without constraints)
    pub min_multiplier: f64,
}

impl KktResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.stationarity <= tol
            && self.primal_infeasibility <= tol
            && self.complementarity <= tol
            && self.min_multiplier >= -tol
    }

    pub fn max_violation(&self) -> f64 {
        self.stationarity.max(self.primal_infeasibility).max(self.complementarity).max(-self.min_multiplier)
    }
}

#[derive(Debug, Clone)]
pub struct DualActiveSetSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint, zero for inactive ones.
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
    pub status: SolveStatus,
    pub kkt: KktResiduals,
}

#[derive(Debug, Clone, Copy)]
pub struct DualActiveSetOptions {
    /// A constraint counts as violated when `(a_iᵀx − b_i)/‖a_i‖` is below
    /// `-feasibility_tol`.
    pub feasibility_tol: f64,
    pub max_iter: usize,
}

/// Rotation `(c, s)` with `c·a + s·b = hypot(a, b)` and `−s·a + c·b = 0`.
fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

/// Rotate columns `j` and `k` of a column-major square buffer.
fn rotate_columns(buf: &mut [f64], dim: usize, j: usize, k: usize, c: f64, s: f64) {
    debug_assert!(j < k);
    let (head, tail) = buf.split_at_mut(k * dim);
    let cj = &mut head[j * dim..(j + 1) * dim];
    let ck = &mut tail[..dim];
    for (x, y) in cj.iter_mut().zip(ck.iter_mut()) {
        let (xv, yv) = (*x, *y);
        *x = c * xv + s * yv;
        *y = -s * xv + c * yv;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct ActiveSet {
    dim: usize,
    /// `J`, column-major `dim × dim`.
    j: Vec<f64>,
    /// `R`, column-major `dim × dim`, upper triangular in the leading block.
    r: Vec<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
}

impl ActiveSet {
    fn k(&self) -> usize {
        self.active.len()
    }

    fn r_at(&self, row: usize, col: usize) -> f64 {
        self.r[col * self.dim + row]
    }

    /// `d = Jᵀ a`
    fn project(&self, a: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|col| dot(&self.j[col * self.dim..(col + 1) * self.dim], a)).collect()
    }

    /// Primal step `z = J₂ d₂` over the inactive columns of `J`.
    fn primal_direction(&self, d: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut z = vec![0.0; n];
        for (col, &dc) in d.iter().enumerate().skip(self.k()) {
            if dc != 0.0 {
                for (zi, ji) in z.iter_mut().zip(&self.j[col * n..(col + 1) * n]) {
                    *zi += dc * ji;
                }
            }
        }
        z
    }

    /// Dual step `r = R⁻¹ d₁`.
    fn dual_direction(&self, d: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut r = d[..k].to_vec();
        for i in (0..k).rev() {
            let v = r[i] - (i + 1..k).map(|j| self.r_at(i, j) * r[j]).sum::<f64>();
            r[i] = v / self.r_at(i, i);
        }
        r
    }

    /// Append a constraint whose projection `d = Jᵀ a` is given.
    fn add(&mut self, mut d: Vec<f64>, index: usize, multiplier: f64) {
        let n = self.dim;
        let k = self.k();
        for col in (k + 1..n).rev() {
            if d[col] == 0.0 {
                continue;
            }
            let (c, s, h) = givens(d[col - 1], d[col]);
            d[col - 1] = h;
            d[col] = 0.0;
            rotate_columns(&mut self.j, n, col - 1, col, c, s);
        }
        self.r[k * n..k * n + k + 1].copy_from_slice(&d[..=k]);
        self.active.push(index);
        self.u.push(multiplier);
    }

    /// Remove the active constraint at position `pos`.
    fn drop(&mut self, pos: usize) {
        let n = self.dim;
        let k = self.k();
        for col in pos..k - 1 {
            let (dst, src) = self.r.split_at_mut((col + 1) * n);
            dst[col * n..col * n + k].copy_from_slice(&src[..k]);
        }
        self.r[(k - 1) * n..k * n].fill(0.0);
        for row in pos..k - 1 {
            let (a, b) = (self.r_at(row, row), self.r_at(row + 1, row));
            if b == 0.0 {
                continue;
            }
            let (c, s, h) = givens(a, b);
            self.r[row * n + row] = h;
            self.r[row * n + row + 1] = 0.0;
            for col in row + 1..k - 1 {
                let (x, y) = (self.r_at(row, col), self.r_at(row + 1, col));
                self.r[col * n + row] = c * x + s * y;
                self.r[col * n + row + 1] = -s * x + c * y;
            }
            rotate_columns(&mut self.j, n, row, row + 1, c, s);
        }
        self.active.remove(pos);
        self.u.remove(pos);
    }
}

fn slack(a: &DMatrix<f64>, b: &DVector<f64>, x: &[f64], i: usize) -> f64 {
    dot(a.column(i).as_slice(), x) - b[i]
}

/// Solve `min ½xᵀGx + cᵀx` s.t. `Aᵀx ≥ b` where column `i` of `a` is the
/// normal of constraint `i`.
pub fn dual_active_set(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    opts: DualActiveSetOptions,
) -> Result<DualActiveSetSolution> {
    let n = g.nrows();
    let m = a.ncols();
    if g.ncols() != n || c.len() != n || a.nrows() != n || b.len() != m {
        return Err(Error::Numerical("inconsistent QP dimensions".into()));
    }
    let chol = Cholesky::new(g.clone())
        .ok_or_else(|| Error::Numerical("Hessian is not positive definite (Cholesky failed)".into()))?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let j0 = l_inv.transpose();
    let mut x = chol.solve(&(-c)).as_slice().to_vec();
    let norms: Vec<f64> = (0..m).map(|i| a.column(i).norm()).collect();
    let mut set = ActiveSet { dim: n, j: j0.as_slice().to_vec(), r: vec![0.0; n * n], active: Vec::new(), u: Vec::new() };
    let mut is_active = vec![false; m];
    let mut iterations = 0;
    let mut status = SolveStatus::Converged;

    'outer: loop {
        // most violated constraint, scaled by its normal
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..m {
            if is_active[i] || norms[i] == 0.0 {
                continue;
            }
            let s = slack(a, b, &x, i) / norms[i];
            if s < -opts.feasibility_tol && pick.is_none_or(|(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        let Some((p, _)) = pick else { break };
        let ap = a.column(p);
        let ap = ap.as_slice();
        let mut u_plus = 0.0;
        loop {
            iterations += 1;
            if iterations > opts.max_iter {
                status = SolveStatus::MaxIterations;
                break 'outer;
            }
            let d = set.project(ap);
            let k = set.k();
            let z = set.primal_direction(&d);
            let r = set.dual_direction(&d);
            let d2_sq: f64 = d[k..].iter().map(|v| v * v).sum();
            let d_sq: f64 = d.iter().map(|v| v * v).sum();

            // largest dual step keeping active multipliers nonnegative
            let mut partial: Option<(f64, usize)> = None;
            for (pos, (&rj, &uj)) in r.iter().zip(&set.u).enumerate() {
                if rj > 0.0 {
                    let t = uj / rj;
                    if partial.is_none_or(|(best, _)| t < best) {
                        partial = Some((t, pos));
                    }
                }
            }
            let sp = slack(a, b, &x, p);
            let full = if d2_sq > 1e-20 * d_sq { Some(-sp / dot(&z, ap)) } else { None };

            match (full, partial) {
                (None, None) => {
                    return Err(Error::Numerical(format!("constraint {p} cannot be satisfied; the QP is infeasible")));
                }
                (None, Some((t, pos))) => {
                    for (uj, rj) in set.u.iter_mut().zip(&r) {
                        *uj -= t * rj;
                    }
                    u_plus += t;
                    is_active[set.active[pos]] = false;
                    set.drop(pos);
                }
                (Some(t2), partial) => {
                    let (t, drop_pos) = match partial {
                        Some((t1, pos)) if t1 < t2 => (t1, Some(pos)),
                        _ => (t2, None),
                    };
                    for (xi, zi) in x.iter_mut().zip(&z) {
                        *xi += t * zi;
                    }
                    for (uj, rj) in set.u.iter_mut().zip(&r) {
                        *uj -= t * rj;
                    }
                    u_plus += t;
                    match drop_pos {
                        None => {
                            set.add(d, p, u_plus);
                            is_active[p] = true;
                            break;
                        }
                        Some(pos) => {
                            is_active[set.active[pos]] = false;
                            set.drop(pos);
                        }
                    }
                }
            }
        }
    }

    // Multipliers consistent with the final iterate: λ = R⁻¹ J₁ᵀ (G x + c).
    let xv = DVector::from_vec(x);
    let grad = g * &xv + c;
    let proj = set.project(grad.as_slice());
    let lambda_active = set.dual_direction(&proj);
    let mut multipliers = DVector::zeros(m);
    for (&i, &l) in set.active.iter().zip(&lambda_active) {
        multipliers[i] = l;
    }
    let kkt = kkt_residuals(g, c, a, b, &xv, &multipliers);
    Ok(DualActiveSetSolution { x: xv, multipliers, active: set.active, iterations, status, kkt })
}

/// KKT residuals of `(x, λ)` for `min ½xᵀGx + cᵀx` s.t. `Aᵀx ≥ b`.
pub fn kkt_residuals(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> KktResiduals {
    let station = g * x + c - a * lambda;
    let slack = a.transpose() * x - b;
    KktResiduals {
        stationarity: station.amax(),
        primal_infeasibility: slack.iter().fold(0.0f64, |acc, &s| acc.max(-s)),
        complementarity: slack.iter().zip(lambda.iter()).fold(0.0f64, |acc, (s, l)| acc.max((s * l).abs())),
        min_multiplier: lambda.iter().copied().fold(0.0f64, f64::min),
    }
}
