//! Calibrated multiaccuracy by boosting with the linear weak learner.
//!
//! Each round computes the residual `y - p(x)` of the current predictor and
//! asks the weak learner for a linear direction correlated with it. An
//! accepted direction `w` is added to the pre-calibration score with step
//! `sigma`, and the calibration table is refitted on the new scores. The
//! loop stops once the weak learner rejects and the calibration error is
//! below target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::predictor::{aggregate_updates, bucket_count, bucket_index, CalibrationTable, OmniPredictor, OmniRound, OmniTrace, Update};
use super::weak::{correlation_vector, weak_learn, WeakLearnerConfig};
use super::LearnerError;
use crate::fenchel::DEFAULT_CLAMP_MARGIN;
use crate::linalg::{dot, norm};
use crate::synth::{Dataset, Features};

pub const DEFAULT_BUCKET_WIDTH: f64 = 0.02;
pub const DEFAULT_ROUND_CAP: usize = 1000;
pub const INITIAL_SCORE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmniConfig {
    pub b: f64,
    pub eps_ma: f64,
    pub eps_cal: f64,
    /// Second-moment bound of the marginal, used in the step size.
    pub lambda: f64,
    /// Step-size accuracy; the step is `eps3 / (2 B^2 lambda)`.
    pub eps3: f64,
    pub bucket_width: f64,
    pub round_cap: usize,
    pub clamp_margin: f64,
    /// Train on a fresh `Bernoulli(y)` draw of each label instead of `y`.
    pub binarize: bool,
    pub seed: u64,
}

impl OmniConfig {
    pub fn new(b: f64, eps_ma: f64, eps_cal: f64, lambda: f64) -> Self {
        OmniConfig {
            b,
            eps_ma,
            eps_cal,
            lambda,
            eps3: eps_ma / 4.0,
            bucket_width: DEFAULT_BUCKET_WIDTH,
            round_cap: DEFAULT_ROUND_CAP,
            clamp_margin: DEFAULT_CLAMP_MARGIN,
            binarize: false,
            seed: 0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.eps3 / (2.0 * self.b * self.b * self.lambda)
    }

    /// Weak-learner accuracy whose rejection threshold `3 eps / (4 B)` equals `eps_ma`.
    pub fn weak_learner_eps(&self) -> f64 {
        4.0 * self.b * self.eps_ma / 3.0
    }
}

/// `sum_buckets |E_S[(y - p) 1{p in bucket}]|`.
pub fn calibration_error(predictions: &[f64], labels: &[f64], bucket_width: f64) -> f64 {
    let count = bucket_count(bucket_width);
    let mut sums = vec![0.0; count];
    for (&p, &y) in predictions.iter().zip(labels) {
        sums[bucket_index(p, bucket_width, count)] += y - p;
    }
    let n = predictions.len() as f64;
    sums.iter().map(|s| s.abs()).sum::<f64>() / n
}

/// `max_j |E_S[x_j (y - p)]|`.
pub fn multiaccuracy_violation(features: &Features, predictions: &[f64], labels: &[f64]) -> f64 {
    let resid: Vec<f64> = labels.iter().zip(predictions).map(|(y, p)| y - p).collect();
    correlation_vector(features, &resid).iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn raw_scores(features: &Features, p0: f64, weight: &[f64]) -> Vec<f64> {
    features.rows().map(|x| (p0 + dot(weight, x)).clamp(0.0, 1.0)).collect()
}

pub fn train_omnipredictor(dataset: &Dataset, config: &OmniConfig) -> Result<OmniPredictor, LearnerError> {
    if dataset.is_empty() {
        return Err(LearnerError::InvalidInput("empty dataset".into()));
    }
    for (name, v) in [("B", config.b), ("eps_ma", config.eps_ma), ("eps_cal", config.eps_cal), ("lambda", config.lambda)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(LearnerError::InvalidInput(format!("{name} must be positive, got {v}")));
        }
    }
    if config.round_cap == 0 {
        return Err(LearnerError::InvalidInput("round cap must be positive".into()));
    }
    if !(config.bucket_width > 0.0 && config.bucket_width <= 1.0) {
        return Err(LearnerError::InvalidInput(format!("bucket width must lie in (0, 1], got {}", config.bucket_width)));
    }
    let labels: Vec<f64> = if config.binarize {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        dataset
            .labels
            .iter()
            .map(|&y| if rng.random::<f64>() < y { 1.0 } else { 0.0 })
            .collect()
    } else {
        dataset.labels.clone()
    };
    let feats = &dataset.features;
    let d = dataset.dim();
    let sigma = config.step_size();
    let wl = WeakLearnerConfig::new(config.b, config.weak_learner_eps(), config.lambda).unchecked();

    let mut updates: Vec<Update> = Vec::new();
    let mut weight = vec![0.0; d];
    let mut raw = raw_scores(feats, INITIAL_SCORE, &weight);
    let mut table = CalibrationTable::fit(&raw, &labels, config.bucket_width, config.clamp_margin);
    let mut trace = OmniTrace::default();
    let mut best: Option<(f64, usize, CalibrationTable)> = None;
    let mut converged = false;

    for round in 0..config.round_cap {
        let preds: Vec<f64> = raw.iter().map(|&q| table.apply(q)).collect();
        let resid: Vec<f64> = labels.iter().zip(&preds).map(|(y, p)| y - p).collect();
        let cal = calibration_error(&preds, &labels, config.bucket_width);
        let res = weak_learn(feats, &resid, &wl)?;
        let v_norm = res.v_norm;
        let accepted = res.accepted().is_some();
        trace.rounds.push(OmniRound { correlation_norm: v_norm, calibration_error: cal, accepted });
        if best.as_ref().is_none_or(|b| v_norm < b.0) {
            best = Some((v_norm, updates.len(), table.clone()));
            trace.best_round = round;
        }
        match res.accepted() {
            None if cal <= config.eps_cal => {
                converged = true;
                break;
            }
            None => {}
            Some(w) => {
                updates.push(Update { w: w.to_vec(), sigma });
                weight = aggregate_updates(d, &updates);
                if weight.iter().any(|v| !v.is_finite()) || !norm(&weight).is_finite() {
                    return Err(LearnerError::Divergence { iteration: round, detail: "non-finite aggregate weight".into() });
                }
                raw = raw_scores(feats, INITIAL_SCORE, &weight);
            }
        }
        table = CalibrationTable::fit(&raw, &labels, config.bucket_width, config.clamp_margin);
    }

    if !converged {
        let (_, keep, best_table) = best.expect("round cap is positive");
        updates.truncate(keep);
        table = best_table;
    }
    Ok(OmniPredictor::new(d, INITIAL_SCORE, updates, table, converged, trace))
}
