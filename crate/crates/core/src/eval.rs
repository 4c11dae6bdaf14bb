//! Repeated half-split evaluation.

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{fit, FitConfig, Task, SELECTED_TOL};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub splits: usize,
    pub seed: u64,
    /// Training responses get Gaussian noise with variance
    /// `noise_factor * Var(y)`; test responses stay clean.
    pub noise_factor: f64,
    /// The seed in here is ignored; every split derives its own.
    pub fit: FitConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { splits: 10, seed: 0, noise_factor: 0.0, fit: FitConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    UnexplainedVariance,
    Misclassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub seed: u64,
    pub error: f64,
    pub nonzero_nodes: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub metric: Metric,
    pub seed: u64,
    pub noise_factor: f64,
    pub lambda: Option<f64>,
    pub n: usize,
    pub splits: Vec<SplitResult>,
    pub mean_error: f64,
    pub mean_nonzero_nodes: f64,
    pub seconds: f64,
}

impl EvalReport {
    /// The report without wall-clock fields, which are the only part that
    /// varies between identical runs.
    pub fn without_timing(&self) -> EvalReport {
        let mut r = self.clone();
        r.seconds = 0.0;
        for s in &mut r.splits {
            s.seconds = 0.0;
        }
        r
    }
}

/// `Σ (y − ŷ)² / Σ (y − ȳ)²` with `ȳ` the mean of `y`.
pub fn unexplained_variance(y: &[f64], pred: &[f64]) -> Result<f64> {
    let m = data::mean(y);
    let tss: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if !(tss > 0.0) {
        return Err(Error::Data("test response is constant; unexplained variance is undefined".into()));
    }
    let rss: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(rss / tss)
}

pub fn misclassification_rate(y: &[f64], prob: &[f64], threshold: f64) -> f64 {
    let wrong = y.iter().zip(prob).filter(|(&t, &p)| (p >= threshold) != (t == 1.0)).count();
    wrong as f64 / y.len() as f64
}

/// Returns a closure reporting elapsed seconds (always 0 on wasm, which has
/// no monotonic clock in std).
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

/// Fit on a random half and score on the other half, `splits` times.
pub fn evaluate(ds: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.splits == 0 {
        return Err(Error::Config("need at least one split".into()));
    }
    if ds.n() < 4 {
        return Err(Error::Data(format!("need at least 4 rows to split, got {}", ds.n())));
    }
    if !(cfg.noise_factor >= 0.0) {
        return Err(Error::Config(format!("noise factor must be >= 0, got {}", cfg.noise_factor)));
    }
    let y = ds.response().ok_or_else(|| Error::Data("dataset has no response".into()))?;
    let total = stopwatch();
    let mut splits = Vec::with_capacity(cfg.splits);
    for k in 0..cfg.splits {
        let clock = stopwatch();
        let seed = derive_seed(cfg.seed, k as u64);
        let (train_idx, test_idx) = data::split_indices(ds.n(), seed);
        let mut train = ds.subset(&train_idx);
        let test = ds.subset(&test_idx);
        if cfg.noise_factor > 0.0 {
            let noisy = data::add_noise(train.response().unwrap_or_default(), cfg.noise_factor, derive_seed(seed, 1))?;
            train = train.with_response(noisy)?;
        }
        let fit_cfg = FitConfig { seed: derive_seed(seed, 2), ..cfg.fit.clone() };
        let model = fit(&train, &fit_cfg)?;
        let pred = model.predict_dataset(&test)?;
        let y_test: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();
        let error = match cfg.fit.task {
            Task::Regression => unexplained_variance(&y_test, &pred)?,
            Task::BinaryClassification => misclassification_rate(&y_test, &pred, 0.5),
        };
        splits.push(SplitResult {
            split: k,
            seed,
            error,
            nonzero_nodes: model.weights.iter().filter(|&&w| w > SELECTED_TOL).count(),
            seconds: clock(),
        });
    }
    let count = splits.len() as f64;
    Ok(EvalReport {
        format_version: 1,
        metric: match cfg.fit.task {
            Task::Regression => Metric::UnexplainedVariance,
            Task::BinaryClassification => Metric::Misclassification,
        },
        seed: cfg.seed,
        noise_factor: cfg.noise_factor,
        lambda: cfg.fit.lambda,
        n: ds.n(),
        mean_error: splits.iter().map(|s| s.error).sum::<f64>() / count,
        mean_nonzero_nodes: splits.iter().map(|s| s.nonzero_nodes as f64).sum::<f64>() / count,
        splits,
        seconds: total(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unexplained_variance_baselines() {
        let y = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(unexplained_variance(&y, &y).unwrap(), 0.0);
        assert!((unexplained_variance(&y, &[3.0; 4]).unwrap() - 1.0).abs() < 1e-15);
        // worse than the constant is reported as is
        assert!(unexplained_variance(&y, &[6.0, 3.0, 2.0, 1.0]).unwrap() > 1.0);
        assert!(unexplained_variance(&[2.0; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn misclassification_counts_threshold_side() {
        let y = [0.0, 1.0, 1.0, 0.0];
        let p = [0.2, 0.5, 0.4, 0.9];
        assert_eq!(misclassification_rate(&y, &p, 0.5), 0.5);
    }
}
