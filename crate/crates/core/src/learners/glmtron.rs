//! GLMtron: unit-step projected gradient descent on the empirical matching loss.

use super::predictor::{GlmPredictor, GlmTrace};
use super::LearnerError;
use crate::fenchel::Activation;
use crate::linalg::{dot, project_ball};
use crate::synth::Dataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmtronConfig {
    pub b: f64,
    pub iters: usize,
    /// Stop once an iterate fails to lower the best squared error by more than this.
    pub tol: f64,
}

impl GlmtronConfig {
    pub fn new(b: f64, iters: usize, tol: f64) -> Self {
        GlmtronConfig { b, iters, tol }
    }
}

/// Empirical squared error, matching loss, and the update direction
/// `(1/n) sum_i (y_i - g'(w . x_i)) x_i` at `w`.
pub fn glmtron_step(dataset: &Dataset, activation: &Activation, w: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = dataset.len() as f64;
    let mut err = 0.0;
    let mut loss = 0.0;
    let mut dir = vec![0.0; w.len()];
    for (x, &y) in dataset.features.rows().zip(&dataset.labels) {
        let s = dot(w, x);
        let r = y - activation.eval(s);
        err += r * r;
        loss += activation.integral(s) - y * s;
        for (dj, xj) in dir.iter_mut().zip(x) {
            *dj += r * xj;
        }
    }
    for dj in dir.iter_mut() {
        *dj /= n;
    }
    (err / n, loss / n, dir)
}

pub fn train_glmtron(dataset: &Dataset, activation: &Activation, config: &GlmtronConfig) -> Result<GlmPredictor, LearnerError> {
    if dataset.is_empty() {
        return Err(LearnerError::InvalidInput("empty dataset".into()));
    }
    let mut w = vec![0.0; dataset.dim()];
    let mut trace = GlmTrace::default();
    let mut best_w = w.clone();
    let mut best_err = f64::INFINITY;
    for it in 0..=config.iters {
        let (err, loss, dir) = glmtron_step(dataset, activation, &w);
        if !err.is_finite() || !loss.is_finite() || dir.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::Divergence { iteration: it, detail: "non-finite GLMtron update".into() });
        }
        trace.err2.push(err);
        trace.matching_loss.push(loss);
        let improved = err < best_err - config.tol;
        if err < best_err {
            best_err = err;
            best_w = w.clone();
            trace.best_iteration = it;
        }
        if !improved && it > 0 {
            trace.converged = true;
            break;
        }
        if it == config.iters {
            break;
        }
        for (wj, dj) in w.iter_mut().zip(&dir) {
            *wj += dj;
        }
        project_ball(&mut w, config.b);
    }
    let mut pred = GlmPredictor::new(best_w, activation.clone());
    pred.trace = trace;
    Ok(pred)
}
