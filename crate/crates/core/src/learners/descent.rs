//! Projected full-batch gradient descent on an empirical matching loss, with
//! step halving whenever a step would increase the loss.

use super::predictor::{GlmPredictor, GlmTrace};
use super::LearnerError;
use crate::fenchel::FenchelPair;
use crate::linalg::{dot, project_ball};
use crate::synth::Dataset;

/// Halvings allowed in a single step before the run is declared stalled.
pub const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub b: f64,
    pub step: f64,
    pub iters: usize,
    /// Stop once an accepted step lowers the loss by less than this.
    pub tol: f64,
}

impl DescentConfig {
    pub fn new(b: f64, step: f64, iters: usize, tol: f64) -> Self {
        DescentConfig { b, step, iters, tol }
    }
}

/// `(1/n) sum_i l_g(y_i, w . x_i)`.
pub fn empirical_matching_loss(dataset: &Dataset, pair: &FenchelPair, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, &y) in dataset.features.rows().zip(&dataset.labels) {
        s += pair.loss(y, dot(w, x));
    }
    s / dataset.len() as f64
}

/// Gradient `(1/n) sum_i (g'(w . x_i) - y_i) x_i` of the empirical matching loss.
pub fn matching_loss_gradient(dataset: &Dataset, pair: &FenchelPair, w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for (x, &y) in dataset.features.rows().zip(&dataset.labels) {
        let r = pair.loss_gradient(y, dot(w, x));
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += r * xj;
        }
    }
    let n = dataset.len() as f64;
    for gj in g.iter_mut() {
        *gj /= n;
    }
    g
}

fn squared_error(dataset: &Dataset, pair: &FenchelPair, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, &y) in dataset.features.rows().zip(&dataset.labels) {
        let r = y - pair.activation_value(dot(w, x)).clamp(0.0, 1.0);
        s += r * r;
    }
    s / dataset.len() as f64
}

pub fn minimize_matching_loss(dataset: &Dataset, pair: &FenchelPair, config: &DescentConfig) -> Result<GlmPredictor, LearnerError> {
    if dataset.is_empty() {
        return Err(LearnerError::InvalidInput("empty dataset".into()));
    }
    if !(config.step > 0.0) {
        return Err(LearnerError::InvalidInput(format!("step must be positive, got {}", config.step)));
    }
    let mut w = vec![0.0; dataset.dim()];
    let mut loss = empirical_matching_loss(dataset, pair, &w);
    let mut trace = GlmTrace::default();
    trace.matching_loss.push(loss);
    trace.err2.push(squared_error(dataset, pair, &w));
    let mut step = config.step;
    for it in 0..config.iters {
        let grad = matching_loss_gradient(dataset, pair, &w);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(LearnerError::Divergence { iteration: it, detail: "non-finite gradient".into() });
        }
        let mut halvings = 0;
        let (next_w, next_loss) = loop {
            let mut cand: Vec<f64> = w.iter().zip(&grad).map(|(wj, gj)| wj - step * gj).collect();
            project_ball(&mut cand, config.b);
            let l = empirical_matching_loss(dataset, pair, &cand);
            if l.is_finite() && l <= loss {
                break (cand, l);
            }
            halvings += 1;
            trace.step_halvings += 1;
            if halvings > MAX_HALVINGS {
                // No descent left at machine precision; keep the current iterate.
                break (w.clone(), loss);
            }
            step *= 0.5;
        };
        let gain = loss - next_loss;
        w = next_w;
        loss = next_loss;
        trace.matching_loss.push(loss);
        trace.err2.push(squared_error(dataset, pair, &w));
        trace.best_iteration = it + 1;
        if gain < config.tol {
            trace.converged = true;
            break;
        }
    }
    let mut pred = GlmPredictor::new(w, pair.activation().clone());
    pred.trace = trace;
    Ok(pred)
}

/// Logistic regression: matching-loss descent for the sigmoid pair.
pub fn train_logistic(dataset: &Dataset, config: &DescentConfig) -> Result<GlmPredictor, LearnerError> {
    minimize_matching_loss(dataset, &FenchelPair::sigmoid(), config)
}
