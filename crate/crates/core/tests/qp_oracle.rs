mod common;

use common::oracle::dual_projected_gradient;
use common::{oracle_loss, tiny_instance};
use nalgebra::{DMatrix, DVector};
use nodeharvest::matrices::DesignPair;
use nodeharvest::qp::{self, HarvestQpConfig, QpProblem, SolveStatus};
use nodeharvest::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn random_problem(rng: &mut impl Rng, dim: usize, m: usize) -> QpProblem {
    let r = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let hessian = r.transpose() * &r + DMatrix::identity(dim, dim) * 0.1;
    let linear = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
    let constraints = DMatrix::from_fn(dim, m, |_, _| rng.random_range(-1.0..1.0));
    // feasible by construction: x0 satisfies every row with some slack
    let x0 = DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5));
    let bounds = DVector::from_fn(m, |i, _| constraints.column(i).dot(&x0) - rng.random_range(0.0..0.3));
    QpProblem { hessian, linear, constraints, bounds, constant: 0.0 }
}

#[test]
fn random_five_dimensional_problems_match_oracle() {
    let mut rng = rng_from_seed(11);
    for case in 0..30 {
        let m = rng.random_range(2..12);
        let p = random_problem(&mut rng, 5, m);
        let sol = qp::solve_qp(&p, 1e-8, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!(sol.kkt.within(1e-8), "case {case}: {:?}", sol.kkt);
        let g = &p.hessian * 2.0;
        let c = &p.linear * 2.0;
        let oracle = dual_projected_gradient(
            &g,
            &c,
            &DMatrix::zeros(0, 5),
            &DVector::zeros(0),
            &p.constraints.transpose(),
            &p.bounds,
            1_000_000,
        );
        assert!(
            (sol.objective - oracle.dual_value).abs() < 1e-6,
            "case {case}: solver {} oracle {} (primal {}, viol {:e})",
            sol.objective,
            oracle.dual_value,
            oracle.primal_value,
            oracle.max_violation
        );
    }
}

#[test]
fn tiny_harvest_instances_match_oracle() {
    let mut rng = rng_from_seed(23);
    for case in 0..50 {
        let (design, y) = tiny_instance(&mut rng);
        let lambda = if case % 3 == 0 { Some(rng.random_range(1.0..3.0)) } else { None };
        let cfg = HarvestQpConfig { lambda, ..Default::default() };
        let out = qp::solve_harvest(&design, &y, &cfg).unwrap();
        assert!(out.kkt().within(1e-8), "case {case}: {:?}", out.kkt());
        let (oracle, viol) = oracle_loss(&design, &y, &cfg);
        assert!(
            (out.loss - oracle).abs() < 1e-6,
            "case {case}: solver {} oracle {} (violation {viol:e}, lambda {lambda:?})",
            out.loss,
            oracle
        );
    }
}

fn check_feasible(design: &DesignPair, w: &[f64], cfg: &HarvestQpConfig) -> Result<(), TestCaseError> {
    for v in design.indicator_mul(w) {
        prop_assert!((v - 1.0).abs() <= 1e-8, "I w = {v}");
    }
    prop_assert!(w.iter().all(|&v| v >= 0.0));
    prop_assert!(w[0] >= cfg.root_floor - 1e-9);
    if let Some(l) = cfg.lambda {
        prop_assert!(w.iter().sum::<f64>() <= l + 1e-8);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_feasible_and_beat_the_root(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let (design, y) = tiny_instance(&mut rng);
        let mut losses = Vec::new();
        for lambda in [Some(1.0), Some(1.5), Some(3.0), None] {
            let cfg = HarvestQpConfig { lambda, ..Default::default() };
            let out = qp::solve_harvest(&design, &y, &cfg).unwrap();
            check_feasible(&design, &out.weights, &cfg)?;
            let mut root = vec![0.0; design.q()];
            root[0] = 1.0;
            prop_assert!(out.loss <= qp::penalized_loss(&design, &y, cfg.nu, &root) + 1e-12);
            losses.push(out.loss);
        }
        // feasible sets nest as lambda grows
        for pair in losses.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-9, "{losses:?}");
        }
    }
}
