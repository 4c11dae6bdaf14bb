//! wasm-bindgen wrapper behind `www/index.html`: fit on sine-product data,
//! draw the fitted surface, and inspect the nodes behind one prediction.

use nodeharvest::data::{Dataset, Value};
use nodeharvest::plot::{node_plot, render_svg};
use nodeharvest::synth::sine_sample;
use nodeharvest::{fit, FitConfig, HarvestModel};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    model: HarvestModel,
    train: Dataset,
    x1: Vec<f64>,
    x2: Vec<f64>,
}

#[wasm_bindgen]
impl Demo {
    /// Draw `n` sine samples and fit. `lambda <= 0` means no budget.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, seed: u64, q: usize, min_node_size: usize, lambda: f64) -> Result<Demo, JsError> {
        let sample = sine_sample(n, seed).map_err(js_err)?;
        let train = sample.dataset();
        let cfg = FitConfig {
            q,
            min_node_size,
            seed,
            lambda: (lambda > 0.0).then_some(lambda),
            ..FitConfig::default()
        };
        let model = fit(&train, &cfg).map_err(js_err)?;
        Ok(Demo { model, train, x1: sample.x1, x2: sample.x2 })
    }

    #[wasm_bindgen(getter)]
    pub fn selected(&self) -> usize {
        self.model.diagnostics.nonzero_nodes
    }

    #[wasm_bindgen(getter)]
    pub fn loss(&self) -> f64 {
        self.model.diagnostics.loss
    }

    #[wasm_bindgen(getter)]
    pub fn nullspace_dim(&self) -> usize {
        self.model.diagnostics.nullspace_dim
    }

    /// Training inputs interleaved as `x1, x2, x1, x2, ...`.
    pub fn points(&self) -> Vec<f64> {
        self.x1.iter().zip(&self.x2).flat_map(|(&a, &b)| [a, b]).collect()
    }

    /// Predictions on a `size × size` grid over the unit square, row-major
    /// with `x2` increasing downwards.
    pub fn surface(&self, size: usize) -> Result<Vec<f64>, JsError> {
        let mut out = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                let x1 = (c as f64 + 0.5) / size as f64;
                let x2 = (r as f64 + 0.5) / size as f64;
                out.push(self.model.predict(&[Value::Number(x1), Value::Number(x2)]).map_err(js_err)?);
            }
        }
        Ok(out)
    }

    /// Nodes containing `(x1, x2)` with weights and means, as JSON.
    pub fn explain(&self, x1: f64, x2: f64) -> Result<String, JsError> {
        let ex = self.model.explain(&[Value::Number(x1), Value::Number(x2)]).map_err(js_err)?;
        serde_json::to_string(&ex).map_err(js_err)
    }

    /// Node diagram with the nodes containing `(x1, x2)` highlighted.
    pub fn node_svg(&self, x1: f64, x2: f64) -> Result<String, JsError> {
        let query = [Value::Number(x1), Value::Number(x2)];
        let plot = node_plot(&self.model, Some(&self.train), Some(&query)).map_err(js_err)?;
        Ok(render_svg(&plot))
    }
}
