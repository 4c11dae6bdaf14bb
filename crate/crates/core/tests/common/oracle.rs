//! Reference solver for small convex QPs, independent of the production
//! nullspace reduction and active-set code.
//!
//! Solves `min ½xᵀGx + cᵀx` s.t. `E x = e`, `A x ≥ b` by accelerated projected
//! gradient ascent on the dual (FISTA with adaptive restart). The primal
//! point is recovered as `x(μ, λ) = G⁻¹(Eᵀμ + Aᵀλ − c)`.

use nalgebra::{DMatrix, DVector};

pub struct OracleResult {
    pub x: DVector<f64>,
    /// Dual objective, a lower bound on the primal optimum.
    pub dual_value: f64,
    /// Primal objective at `x`.
    pub primal_value: f64,
    pub max_violation: f64,
}

/// Rows of `eq` / `ineq` are constraint normals.
pub fn dual_projected_gradient(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    eq: &DMatrix<f64>,
    e: &DVector<f64>,
    ineq: &DMatrix<f64>,
    b: &DVector<f64>,
    iterations: usize,
) -> OracleResult {
    let n = g.nrows();
    let (me, mi) = (eq.nrows(), ineq.nrows());
    let m = me + mi;
    let mut cons = DMatrix::zeros(m, n);
    cons.rows_mut(0, me).copy_from(eq);
    cons.rows_mut(me, mi).copy_from(ineq);
    let mut rhs = DVector::zeros(m);
    rhs.rows_mut(0, me).copy_from(e);
    rhs.rows_mut(me, mi).copy_from(b);

    let g_inv = g.clone().try_inverse().expect("G must be invertible");
    let g_inv = (&g_inv + g_inv.transpose()) * 0.5;
    // Dual: maximize  φ(y) = −½(Cᵀy − c)ᵀG⁻¹(Cᵀy − c) + rhsᵀy,  y_ineq ≥ 0
    let q = &cons * &g_inv * cons.transpose();
    let lin = &rhs + &cons * &g_inv * c;
    let lipschitz = q.symmetric_eigenvalues().max().max(1e-300);
    let step = 1.0 / lipschitz;
    let project = |y: &mut DVector<f64>| {
        for i in me..m {
            if y[i] < 0.0 {
                y[i] = 0.0;
            }
        }
    };
    let value = |y: &DVector<f64>| -> f64 { -0.5 * y.dot(&(&q * y)) + lin.dot(y) };

    let mut y = DVector::zeros(m);
    let mut z = y.clone();
    let mut t = 1.0f64;
    let mut last = value(&y);
    for _ in 0..iterations {
        let grad = &lin - &q * &z;
        let mut next = &z + grad * step;
        project(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let v = value(&next);
        if v < last {
            // restart momentum when the dual value decreases
            z = y.clone();
            t = 1.0;
            continue;
        }
        z = &next + (&next - &y) * ((t - 1.0) / t_next);
        y = next;
        t = t_next;
        last = v;
    }
    let const_term = -0.5 * c.dot(&(&g_inv * c));
    let dual_value = last + const_term;
    let x = &g_inv * (cons.transpose() * &y - c);
    let primal_value = 0.5 * x.dot(&(g * &x)) + c.dot(&x);
    let mut max_violation: f64 = 0.0;
    let r = &cons * &x - &rhs;
    for i in 0..m {
        let v = if i < me { r[i].abs() } else { (-r[i]).max(0.0) };
        max_violation = max_violation.max(v);
    }
    OracleResult { x, dual_value, primal_value, max_violation }
}
