#![allow(dead_code)]

pub mod oracle;

use nalgebra::{DMatrix, DVector};
use nodeharvest::data::{Column, Dataset};
use nodeharvest::matrices::DesignPair;
use nodeharvest::qp::HarvestQpConfig;
use rand::Rng;

use oracle::dual_projected_gradient;

/// Random design with `n ≤ 10` rows and `q ≤ 6` nodes; node means are
/// averages of `y` over members.
pub fn tiny_instance(rng: &mut impl Rng) -> (DesignPair, Vec<f64>) {
    let n = rng.random_range(3..=10);
    let q = rng.random_range(2..=6);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut cols: Vec<Vec<usize>> = vec![(0..n).collect()];
    while cols.len() < q {
        let members: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.45)).collect();
        if !members.is_empty() {
            cols.push(members);
        }
    }
    let means: Vec<f64> =
        cols.iter().map(|c| c.iter().map(|&i| y[i]).sum::<f64>() / c.len() as f64).collect();
    let design = DesignPair::from_columns(n, cols.iter().zip(&means).map(|(c, &m)| (c.as_slice(), m))).unwrap();
    (design, y)
}

/// Optimal penalized loss of the weight problem posed directly in `w`,
/// without the nullspace reduction, and the oracle's constraint violation.
pub fn oracle_loss(design: &DesignPair, y: &[f64], cfg: &HarvestQpConfig) -> (f64, f64) {
    let q = design.q();
    let m = design.dense_means().unwrap();
    let i = design.dense_indicator().unwrap();
    let yv = DVector::from_column_slice(y);
    let g = (m.transpose() * &m + DMatrix::identity(q, q) * cfg.nu) * 2.0;
    let c = -(m.transpose() * &yv) * 2.0;
    let extra = usize::from(cfg.lambda.is_some());
    let mut ineq = DMatrix::zeros(q + extra, q);
    let mut b = DVector::zeros(q + extra);
    for k in 0..q {
        ineq[(k, k)] = 1.0;
    }
    b[0] = cfg.root_floor;
    if let Some(l) = cfg.lambda {
        ineq.row_mut(q).fill(-1.0);
        b[q] = -l;
    }
    let res = dual_projected_gradient(&g, &c, &i, &DVector::from_element(design.n(), 1.0), &ineq, &b, 1_000_000);
    (res.dual_value + yv.norm_squared(), res.max_violation)
}

/// Mixed numeric/categorical data with an additive-plus-interaction signal.
pub fn random_dataset(rng: &mut impl Rng, n: usize, p: usize) -> Dataset {
    let mut columns = Vec::new();
    let mut y = vec![0.0; n];
    for k in 0..p {
        if k % 3 == 2 {
            let codes: Vec<Option<u32>> = (0..n).map(|_| Some(rng.random_range(0..3))).collect();
            for (yi, c) in y.iter_mut().zip(&codes) {
                *yi += [0.0, 1.0, -0.5][c.unwrap() as usize];
            }
            columns.push(Column::categorical(format!("c{k}"), codes, vec!["a".into(), "b".into(), "c".into()]));
        } else {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            for (yi, v) in y.iter_mut().zip(&x) {
                *yi += if k == 0 { 2.0 * v } else { (3.0 * v).sin() };
            }
            columns.push(Column::numeric(format!("x{k}"), x));
        }
    }
    for yi in &mut y {
        *yi += rng.random_range(-0.5..0.5);
    }
    Dataset::new(columns, Some(y)).unwrap()
}
