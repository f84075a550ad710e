//! Weak learner for linear functions.
//!
//! Given samples `(x, z)` with `z` in `[-1, 1]`, it computes `v = E_S[z x]`
//! and rejects when `||v||_2 <= 3 eps / (4 B)`. Otherwise it returns the
//! rescaled direction `B v / ||v||_2`, whose empirical correlation with `z`
//! is `B ||v||_2`.

use serde::Serialize;

use super::LearnerError;
use crate::linalg::norm;
use crate::synth::Features;

/// Default constant in the sample requirement `C d^2 lambda B^2 / eps^2 ln(1/delta)`.
pub const DEFAULT_SAMPLE_CONSTANT: f64 = 64.0;
/// Default failure probability.
pub const DEFAULT_FAILURE_PROBABILITY: f64 = 1.0 / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakLearnerConfig {
    pub b: f64,
    pub eps: f64,
    /// Second-moment bound of the marginal.
    pub lambda: f64,
    pub sample_constant: f64,
    pub failure_probability: f64,
    /// Refuse to run below the required sample size.
    pub enforce_sample_size: bool,
}

impl WeakLearnerConfig {
    pub fn new(b: f64, eps: f64, lambda: f64) -> Self {
        WeakLearnerConfig {
            b,
            eps,
            lambda,
            sample_constant: DEFAULT_SAMPLE_CONSTANT,
            failure_probability: DEFAULT_FAILURE_PROBABILITY,
            enforce_sample_size: true,
        }
    }

    pub fn unchecked(mut self) -> Self {
        self.enforce_sample_size = false;
        self
    }

    /// Rejection threshold `3 eps / (4 B)` on `||v||_2`.
    pub fn threshold(&self) -> f64 {
        3.0 * self.eps / (4.0 * self.b)
    }

    /// `ceil(C d^2 lambda B^2 / eps^2 ln(1/delta))`.
    pub fn required_samples(&self, d: usize) -> usize {
        let d = d as f64;
        let raw = self.sample_constant * d * d * self.lambda * self.b * self.b / (self.eps * self.eps)
            * (1.0 / self.failure_probability).ln();
        raw.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "w")]
pub enum Verdict {
    Accepted(Vec<f64>),
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearWeakLearnerResult {
    pub verdict: Verdict,
    /// `E_S[z (w . x)]` for the returned `w`, i.e. `B ||v||_2`; zero on rejection.
    pub correlation_estimate: f64,
    /// `||E_S[z x]||_2`.
    pub v_norm: f64,
}

impl LinearWeakLearnerResult {
    pub fn accepted(&self) -> Option<&[f64]> {
        match &self.verdict {
            Verdict::Accepted(w) => Some(w),
            Verdict::Rejected => None,
        }
    }
}

/// `E_S[z x]`, summed in row order.
pub fn correlation_vector(features: &Features, z: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; features.d];
    for (x, &zi) in features.rows().zip(z) {
        for (vj, xj) in v.iter_mut().zip(x) {
            *vj += zi * xj;
        }
    }
    let n = features.n as f64;
    for vj in v.iter_mut() {
        *vj /= n;
    }
    v
}

pub fn weak_learn(features: &Features, z: &[f64], config: &WeakLearnerConfig) -> Result<LinearWeakLearnerResult, LearnerError> {
    if z.len() != features.n {
        return Err(LearnerError::InvalidInput(format!("{} targets for {} samples", z.len(), features.n)));
    }
    if !(config.b > 0.0) || !(config.eps > 0.0) {
        return Err(LearnerError::InvalidInput("weak learner needs B > 0 and eps > 0".into()));
    }
    if let Some(bad) = z.iter().find(|zi| !(-1.0..=1.0).contains(*zi)) {
        return Err(LearnerError::InvalidInput(format!("targets must lie in [-1, 1], got {bad}")));
    }
    if config.enforce_sample_size {
        let required = config.required_samples(features.d);
        if features.n < required {
            return Err(LearnerError::InsufficientSamples { required, available: features.n });
        }
    }
    let v = correlation_vector(features, z);
    let v_norm = norm(&v);
    if v_norm <= config.threshold() {
        return Ok(LinearWeakLearnerResult { verdict: Verdict::Rejected, correlation_estimate: 0.0, v_norm });
    }
    let scale = config.b / v_norm;
    let w: Vec<f64> = v.iter().map(|vj| vj * scale).collect();
    Ok(LinearWeakLearnerResult { verdict: Verdict::Accepted(w), correlation_estimate: config.b * v_norm, v_norm })
}
