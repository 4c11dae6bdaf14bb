//! Synthetic sine-product data: `y = sin(2πx₁) sin(2πx₂) + ε` with
//! `x ~ U[0,1]²` and `ε ~ N(0, 1/4)`.

use std::f64::consts::TAU;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Column, Dataset};
use crate::error::{Error, Result};
use crate::rng;

pub const NOISE_SD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SineSample {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y: Vec<f64>,
    /// Noiseless `sin(2πx₁) sin(2πx₂)`.
    pub signal: Vec<f64>,
}

pub fn sine_signal(x1: f64, x2: f64) -> f64 {
    (TAU * x1).sin() * (TAU * x2).sin()
}

pub fn sine_sample(n: usize, seed: u64) -> Result<SineSample> {
    if n < 10 {
        return Err(Error::Config(format!("need at least 10 samples, got {n}")));
    }
    let mut rng = rng::rng_from_seed(seed);
    let noise = Normal::new(0.0, NOISE_SD).expect("valid normal");
    let mut s = SineSample { x1: Vec::with_capacity(n), x2: Vec::with_capacity(n), y: Vec::with_capacity(n), signal: Vec::with_capacity(n) };
    for _ in 0..n {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        let f = sine_signal(a, b);
        s.x1.push(a);
        s.x2.push(b);
        s.signal.push(f);
        s.y.push(f + noise.sample(&mut rng));
    }
    Ok(s)
}

impl SineSample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Features `x1`, `x2` with response `y`.
    pub fn dataset(&self) -> Dataset {
        Dataset::new(
            vec![Column::numeric("x1", self.x1.clone()), Column::numeric("x2", self.x2.clone())],
            Some(self.y.clone()),
        )
        .expect("generated data is valid")
        .with_response_name("y")
    }

    /// CSV with columns `x1,x2,y,signal`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "x2", "y", "signal"])?;
        for i in 0..self.len() {
            w.write_record(&[
                self.x1[i].to_string(),
                self.x2[i].to_string(),
                self.y[i].to_string(),
                self.signal[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
