//! Isotron: alternate Lipschitz isotonic regression of the labels against the
//! current scores with GLMtron-style weight updates.

use super::predictor::{GlmTrace, IsotronPredictor, Predict};
use super::LearnerError;
use crate::linalg::{dot, project_ball};
use crate::synth::Dataset;

/// Non-decreasing piecewise-linear function through sorted knots, constant
/// outside them.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneFit {
    pub knots_t: Vec<f64>,
    pub knots_u: Vec<f64>,
}

impl MonotoneFit {
    pub fn new(knots_t: Vec<f64>, knots_u: Vec<f64>) -> Result<Self, LearnerError> {
        if knots_t.is_empty() || knots_t.len() != knots_u.len() {
            return Err(LearnerError::InvalidInput("monotone fit needs matching, non-empty knot lists".into()));
        }
        for w in knots_t.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(LearnerError::InvalidInput("knot positions must be sorted".into()));
            }
        }
        Ok(MonotoneFit { knots_t, knots_u })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let ts = &self.knots_t;
        let us = &self.knots_u;
        let last = ts.len() - 1;
        if t <= ts[0] {
            return us[0];
        }
        if t >= ts[last] {
            return us[last];
        }
        let idx = ts.partition_point(|&k| k <= t);
        let (t0, t1) = (ts[idx - 1], ts[idx]);
        let (u0, u1) = (us[idx - 1], us[idx]);
        if t1 == t0 {
            return u1;
        }
        u0 + (u1 - u0) * (t - t0) / (t1 - t0)
    }

    /// Largest difference quotient across consecutive distinct knots.
    pub fn max_slope(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 1..self.knots_t.len() {
            let dt = self.knots_t[i] - self.knots_t[i - 1];
            if dt > 0.0 {
                m = m.max((self.knots_u[i] - self.knots_u[i - 1]) / dt);
            }
        }
        m
    }
}

/// Continuous piecewise-linear derivative of the dynamic-programming cost,
/// stored as knot positions and values plus a shared slope beyond the ends.
struct PiecewiseDerivative {
    xs: Vec<f64>,
    vs: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseDerivative {
    /// Derivative `2 (v - y)` of `(v - y)^2`.
    fn quadratic(y: f64) -> Self {
        PiecewiseDerivative { xs: vec![y], vs: vec![0.0], left_slope: 2.0, right_slope: 2.0 }
    }

    /// Unique zero; the derivative is strictly increasing outside flat pieces
    /// and every flat piece sits at height zero, so the leftmost zero is taken.
    fn root(&self) -> f64 {
        let n = self.xs.len();
        if self.vs[0] >= 0.0 {
            return self.xs[0] - self.vs[0] / self.left_slope;
        }
        for k in 1..n {
            if self.vs[k] >= 0.0 {
                let (x0, x1) = (self.xs[k - 1], self.xs[k]);
                let (v0, v1) = (self.vs[k - 1], self.vs[k]);
                if v1 == v0 {
                    return x0;
                }
                return x0 + (x1 - x0) * (-v0) / (v1 - v0);
            }
        }
        self.xs[n - 1] - self.vs[n - 1] / self.right_slope
    }

    /// Derivative of `v -> min_{u in [v - b, v]} F(u)` where this is `F'`.
    fn window_min(&mut self, m: f64, b: f64) {
        if b <= 0.0 {
            return;
        }
        let split = self.xs.partition_point(|&x| x <= m);
        let mut xs = Vec::with_capacity(self.xs.len() + 2);
        let mut vs = Vec::with_capacity(self.xs.len() + 2);
        xs.extend_from_slice(&self.xs[..split]);
        vs.extend_from_slice(&self.vs[..split]);
        xs.push(m);
        vs.push(0.0);
        xs.push(m + b);
        vs.push(0.0);
        for k in split..self.xs.len() {
            xs.push(self.xs[k] + b);
            vs.push(self.vs[k]);
        }
        self.xs = xs;
        self.vs = vs;
    }

    /// Add `2 (v - y)`.
    fn add_quadratic(&mut self, y: f64) {
        for (x, v) in self.xs.iter().zip(self.vs.iter_mut()) {
            *v += 2.0 * (x - y);
        }
        self.left_slope += 2.0;
        self.right_slope += 2.0;
    }
}

/// Least-squares fit `u` to `y` at sorted positions `t` subject to
/// `0 <= u[i+1] - u[i] <= lipschitz (t[i+1] - t[i])`.
pub fn lipschitz_isotonic(t: &[f64], y: &[f64], lipschitz: f64) -> Result<Vec<f64>, LearnerError> {
    let n = t.len();
    if n == 0 || y.len() != n {
        return Err(LearnerError::InvalidInput("isotonic fit needs matching, non-empty inputs".into()));
    }
    if !(lipschitz >= 0.0) {
        return Err(LearnerError::InvalidInput(format!("Lipschitz bound must be >= 0, got {lipschitz}")));
    }
    let mut gaps = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let dt = t[i] - t[i - 1];
        if !(dt >= 0.0) {
            return Err(LearnerError::InvalidInput("isotonic positions must be sorted".into()));
        }
        gaps.push(lipschitz * dt);
    }
    let mut deriv = PiecewiseDerivative::quadratic(y[0]);
    let mut minimizers = Vec::with_capacity(n);
    for i in 1..n {
        let m = deriv.root();
        minimizers.push(m);
        deriv.window_min(m, gaps[i - 1]);
        deriv.add_quadratic(y[i]);
    }
    let mut u = vec![0.0; n];
    u[n - 1] = deriv.root();
    for i in (0..n - 1).rev() {
        let hi = u[i + 1];
        let lo = hi - gaps[i];
        u[i] = minimizers[i].clamp(lo, hi);
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotronConfig {
    pub b: f64,
    pub iters: usize,
    pub lipschitz: f64,
}

impl IsotronConfig {
    pub fn new(b: f64, iters: usize) -> Self {
        IsotronConfig { b, iters, lipschitz: 1.0 }
    }
}

fn fit_link(scores: &[f64], labels: &[f64], lipschitz: f64) -> Result<MonotoneFit, LearnerError> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps input order among tied scores.
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let t: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
    let u = lipschitz_isotonic(&t, &y, lipschitz)?;
    MonotoneFit::new(t, u)
}

pub fn train_isotron(dataset: &Dataset, config: &IsotronConfig) -> Result<IsotronPredictor, LearnerError> {
    if dataset.is_empty() {
        return Err(LearnerError::InvalidInput("empty dataset".into()));
    }
    let n = dataset.len();
    let d = dataset.dim();
    let feats = &dataset.features;
    let mut w = vec![0.0; d];
    let mut best: Option<(f64, Vec<f64>, MonotoneFit, usize)> = None;
    let mut trace = GlmTrace::default();
    for it in 0..=config.iters {
        let scores = feats.scores(&w);
        let fit = fit_link(&scores, &dataset.labels, config.lipschitz)?;
        let mut err = 0.0;
        let mut grad = vec![0.0; d];
        for (i, x) in feats.rows().enumerate() {
            let r = dataset.labels[i] - fit.eval(scores[i]);
            err += r * r;
            for (g, xj) in grad.iter_mut().zip(x) {
                *g += r * xj;
            }
        }
        err /= n as f64;
        trace.err2.push(err);
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, w.clone(), fit, it));
        }
        if it == config.iters {
            break;
        }
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj += g / n as f64;
        }
        project_ball(&mut w, config.b);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::Divergence { iteration: it, detail: "non-finite Isotron weight".into() });
        }
    }
    let (_, w, fit, it) = best.expect("at least one round runs");
    trace.best_iteration = it;
    trace.converged = true;
    let pred = IsotronPredictor { w, fit, trace };
    debug_assert!(pred.predict(feats.row(0)).is_finite());
    Ok(pred)
}

/// Mean squared error of the fitted link on the training sample.
pub fn isotron_err2(pred: &IsotronPredictor, dataset: &Dataset) -> f64 {
    let mut s = 0.0;
    for (x, y) in dataset.features.rows().zip(&dataset.labels) {
        let r = y - pred.fit.eval(dot(&pred.w, x));
        s += r * r;
    }
    s / dataset.len() as f64
}
