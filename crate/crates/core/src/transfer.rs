//! Error metrics and executable checks of the error-transfer bounds.
//!
//! Each check evaluates a bound on a concrete sample. The premise gap `eps_hat`
//! is measured as the predictor's matching loss minus the best matching loss
//! over a finite comparator set that contains the planted weight, so every
//! chain of pointwise inequalities behind a bound also holds on the sample.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::fenchel::{sigmoid, FenchelError, FenchelPair, DEFAULT_CLAMP_MARGIN};
use crate::learners::{minimize_matching_loss, DescentConfig, LearnerError, Predict};
use crate::linalg::{dot, norm};
use crate::synth::{Dataset, LabelSpace};

/// Default tolerance on the arithmetic of a bound.
pub const DEFAULT_BOUND_TOLERANCE: f64 = 1e-6;
/// Floor substituted for a zero opt estimate in the logistic bounds.
pub const DEGENERATE_OPT_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("cannot evaluate on an empty dataset")]
    Empty,
    #[error("check is not applicable: {0}")]
    Inapplicable(String),
    #[error(transparent)]
    Fenchel(#[from] FenchelError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub err2: f64,
    pub err1: f64,
    pub matching_losses: BTreeMap<String, f64>,
    pub n_eval: usize,
    pub seed: u64,
}

impl ErrorReport {
    /// `err1^2 <= err2`, up to rounding.
    pub fn jensen_holds(&self) -> bool {
        self.err1 * self.err1 <= self.err2 * (1.0 + 1e-12) + 1e-300
    }
}

/// Mean matching loss `E_S[l_g(y, f'(p(x)))]` of the given predictions,
/// with predictions clamped away from divergent ends of the link.
pub fn predictor_matching_loss(predictions: &[f64], labels: &[f64], pair: &FenchelPair) -> Result<f64, TransferError> {
    if predictions.is_empty() {
        return Err(TransferError::Empty);
    }
    let mut s = 0.0;
    // Predictors that come out of calibration take few distinct values.
    let mut last: Option<(u64, f64)> = None;
    for (&p, &y) in predictions.iter().zip(labels) {
        let t = match last {
            Some((bits, t)) if bits == p.to_bits() => t,
            _ => {
                let t = pair.link_clamped(p, DEFAULT_CLAMP_MARGIN)?;
                last = Some((p.to_bits(), t));
                t
            }
        };
        s += pair.loss(y, t);
    }
    Ok(s / predictions.len() as f64)
}

pub fn evaluate(predictor: &dyn Predict, dataset: &Dataset, pairs: &[FenchelPair]) -> Result<ErrorReport, TransferError> {
    if dataset.is_empty() {
        return Err(TransferError::Empty);
    }
    let preds = predictor.predict_all(&dataset.features);
    evaluate_predictions(&preds, dataset, pairs)
}

pub fn evaluate_predictions(preds: &[f64], dataset: &Dataset, pairs: &[FenchelPair]) -> Result<ErrorReport, TransferError> {
    if dataset.is_empty() {
        return Err(TransferError::Empty);
    }
    let n = dataset.len() as f64;
    let mut e2 = 0.0;
    let mut e1 = 0.0;
    for (&p, &y) in preds.iter().zip(&dataset.labels) {
        e2 += (y - p) * (y - p);
        e1 += (y - p).abs();
    }
    let mut matching_losses = BTreeMap::new();
    for pair in pairs {
        matching_losses.insert(pair.tag(), predictor_matching_loss(preds, &dataset.labels, pair)?);
    }
    Ok(ErrorReport { err2: e2 / n, err1: e1 / n, matching_losses, n_eval: dataset.len(), seed: dataset.meta.seed })
}

/// Finite stand-in for the weight ball `{||w||_2 <= B}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorSet {
    pub b: f64,
    pub candidates: Vec<Vec<f64>>,
}

impl ComparatorSet {
    pub fn new(b: f64) -> Self {
        ComparatorSet { b, candidates: Vec::new() }
    }

    pub fn with_candidate(mut self, w: Vec<f64>) -> Self {
        self.candidates.push(w);
        self
    }

    /// `count` points drawn uniformly from the radius-`B` ball in `R^d`.
    pub fn with_random(mut self, d: usize, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            let mut w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = norm(&w);
            let u: f64 = rng.random();
            let radius = self.b * u.powf(1.0 / d as f64);
            for wi in w.iter_mut() {
                *wi *= radius / len;
            }
            self.candidates.push(w);
        }
        self
    }

    /// Add the projected matching-loss minimizer for `pair` on `dataset`.
    pub fn with_descent_optimum(self, dataset: &Dataset, pair: &FenchelPair) -> Result<Self, TransferError> {
        let fitted = minimize_matching_loss(dataset, pair, &DescentConfig::new(self.b, 1.0, 2000, 1e-13))?;
        Ok(self.with_candidate(fitted.w))
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Best empirical matching loss per pair as `(loss, candidate index)`.
    /// Scores of each candidate are computed once and shared across pairs.
    pub fn best_losses(&self, dataset: &Dataset, pairs: &[FenchelPair]) -> Result<Vec<(f64, usize)>, TransferError> {
        if self.candidates.is_empty() {
            return Err(TransferError::Inapplicable("comparator set is empty".into()));
        }
        if dataset.is_empty() {
            return Err(TransferError::Empty);
        }
        let n = dataset.len() as f64;
        let mut best = vec![(f64::INFINITY, 0usize); pairs.len()];
        let mut scores = vec![0.0; dataset.len()];
        for (ci, w) in self.candidates.iter().enumerate() {
            if w.len() != dataset.dim() {
                return Err(TransferError::Inapplicable(format!("candidate {ci} has the wrong dimension")));
            }
            for (s, x) in scores.iter_mut().zip(dataset.features.rows()) {
                *s = dot(w, x);
            }
            for (pi, pair) in pairs.iter().enumerate() {
                let mut total = 0.0;
                for (&s, &y) in scores.iter().zip(&dataset.labels) {
                    total += pair.loss(y, s);
                }
                let l = total / n;
                if l < best[pi].0 {
                    best[pi] = (l, ci);
                }
            }
        }
        Ok(best)
    }
}

/// Measured premise `L_g(f' o p) <= min_w L_g(w) + eps_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PremiseGap {
    pub predictor_loss: f64,
    pub best_comparator_loss: f64,
    pub best_index: usize,
    pub eps_hat: f64,
}

pub fn premise_gaps(preds: &[f64], dataset: &Dataset, pairs: &[FenchelPair], comparators: &ComparatorSet) -> Result<Vec<PremiseGap>, TransferError> {
    let best = comparators.best_losses(dataset, pairs)?;
    pairs
        .iter()
        .zip(best)
        .map(|(pair, (best_loss, idx))| {
            let pl = predictor_matching_loss(preds, &dataset.labels, pair)?;
            Ok(PremiseGap { predictor_loss: pl, best_comparator_loss: best_loss, best_index: idx, eps_hat: pl - best_loss })
        })
        .collect()
}

/// Outcome of one bound evaluation. For bounds with an unspecified constant,
/// `rhs = constant * scaled_term + additive_term` and `required_constant` is
/// the smallest constant under which the bound holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub theorem: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub constant: Option<f64>,
    pub required_constant: Option<f64>,
    pub scaled_term: f64,
    pub additive_term: f64,
    pub opt_hat: f64,
    pub eps_hat: f64,
    pub degenerate: bool,
    pub details: BTreeMap<String, f64>,
}

impl BoundCheck {
    fn fixed(theorem: &str, lhs: f64, rhs: f64, opt_hat: f64, eps_hat: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        BoundCheck {
            theorem: theorem.to_string(),
            lhs,
            rhs,
            slack,
            pass: slack >= -tolerance,
            tolerance,
            constant: None,
            required_constant: None,
            scaled_term: 0.0,
            additive_term: rhs,
            opt_hat,
            eps_hat,
            degenerate: false,
            details: BTreeMap::new(),
        }
    }

    fn scaled(theorem: &str, lhs: f64, scaled_term: f64, additive_term: f64, opt_hat: f64, eps_hat: f64, tolerance: f64) -> Self {
        let required = if lhs <= additive_term {
            0.0
        } else if scaled_term > 0.0 {
            (lhs - additive_term) / scaled_term
        } else {
            f64::INFINITY
        };
        let mut check = BoundCheck {
            theorem: theorem.to_string(),
            lhs,
            rhs: f64::NAN,
            slack: f64::NAN,
            pass: false,
            tolerance,
            constant: None,
            required_constant: Some(required),
            scaled_term,
            additive_term,
            opt_hat,
            eps_hat,
            degenerate: false,
            details: BTreeMap::new(),
        };
        check.apply_constant(required);
        check
    }

    /// Re-evaluate the bound with constant `c`.
    pub fn apply_constant(&mut self, c: f64) {
        self.constant = Some(c);
        self.rhs = if self.scaled_term == 0.0 { self.additive_term } else { c * self.scaled_term + self.additive_term };
        self.slack = self.rhs - self.lhs;
        self.pass = self.slack >= -self.tolerance;
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }
}

/// Smallest constant that makes every check pass, applied to all of them.
/// Checks without a free constant are left untouched.
pub fn calibrate_constant(checks: &mut [BoundCheck]) -> f64 {
    let c = checks.iter().filter_map(|c| c.required_constant).fold(0.0, f64::max);
    for check in checks.iter_mut() {
        if check.required_constant.is_some() {
            check.apply_constant(c);
        }
    }
    c
}

fn planted_weight(dataset: &Dataset) -> Result<&[f64], TransferError> {
    dataset
        .meta
        .model
        .as_ref()
        .map(|m| m.planted_w.as_slice())
        .ok_or_else(|| TransferError::Inapplicable("dataset has no planted model".into()))
}

fn mean_squared(dataset: &Dataset, preds_of: impl Fn(&[f64]) -> f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in dataset.features.rows().zip(&dataset.labels) {
        let r = y - preds_of(x);
        s += r * r;
    }
    s / dataset.len() as f64
}

fn err2_of(preds: &[f64], labels: &[f64]) -> f64 {
    preds.iter().zip(labels).map(|(p, y)| (y - p) * (y - p)).sum::<f64>() / preds.len() as f64
}

fn err1_of(preds: &[f64], labels: &[f64]) -> f64 {
    preds.iter().zip(labels).map(|(p, y)| (y - p).abs()).sum::<f64>() / preds.len() as f64
}

/// `err2(p) <= (beta/alpha) opt + 2 beta eps` for an `[alpha, beta]`
/// bi-Lipschitz pair, with `opt` the squared error of `x -> g'(w* . x)`.
pub fn check_bilipschitz_transfer(
    preds: &[f64],
    dataset: &Dataset,
    pair: &FenchelPair,
    comparators: &ComparatorSet,
    tolerance: f64,
) -> Result<BoundCheck, TransferError> {
    let act = pair.activation();
    if !act.is_bilipschitz() {
        return Err(TransferError::Fenchel(FenchelError::NotBiLipschitz(pair.tag())));
    }
    let (alpha, beta) = (act.lipschitz_lower(), act.lipschitz_upper());
    let w_star = planted_weight(dataset)?;
    let opt_hat = mean_squared(dataset, |x| act.eval(dot(w_star, x)));
    let gap = premise_gaps(preds, dataset, std::slice::from_ref(pair), comparators)?[0];
    let lhs = err2_of(preds, &dataset.labels);
    let rhs = beta / alpha * opt_hat + 2.0 * beta * gap.eps_hat;
    Ok(BoundCheck::fixed("bilipschitz_transfer", lhs, rhs, opt_hat, gap.eps_hat, tolerance)
        .detail("alpha", alpha)
        .detail("beta", beta)
        .detail("predictor_loss", gap.predictor_loss)
        .detail("best_comparator_loss", gap.best_comparator_loss))
}

/// `err2(p) <= (2 beta/alpha) opt_g + (2 beta/alpha) E[(g'(w*.x) - phi'(w*.x))^2] + 2 beta eps`
/// with `[alpha, beta]` the constants of `phi'` and `eps` its premise gap.
pub fn check_general_activation_transfer(
    preds: &[f64],
    dataset: &Dataset,
    g_pair: &FenchelPair,
    phi_pair: &FenchelPair,
    comparators: &ComparatorSet,
    tolerance: f64,
) -> Result<BoundCheck, TransferError> {
    let phi = phi_pair.activation();
    if !phi.is_bilipschitz() {
        return Err(TransferError::Fenchel(FenchelError::NotBiLipschitz(phi_pair.tag())));
    }
    let g = g_pair.activation();
    let (alpha, beta) = (phi.lipschitz_lower(), phi.lipschitz_upper());
    let w_star = planted_weight(dataset)?;
    let opt_hat = mean_squared(dataset, |x| g.eval(dot(w_star, x)));
    let mut approx = 0.0;
    for x in dataset.features.rows() {
        let s = dot(w_star, x);
        let diff = g.eval(s) - phi.eval(s);
        approx += diff * diff;
    }
    approx /= dataset.len() as f64;
    let gap = premise_gaps(preds, dataset, std::slice::from_ref(phi_pair), comparators)?[0];
    let lhs = err2_of(preds, &dataset.labels);
    let ratio = 2.0 * beta / alpha;
    let rhs = ratio * opt_hat + ratio * approx + 2.0 * beta * gap.eps_hat;
    Ok(BoundCheck::fixed("general_activation_transfer", lhs, rhs, opt_hat, gap.eps_hat, tolerance)
        .detail("alpha", alpha)
        .detail("beta", beta)
        .detail("approximation_term", approx))
}

/// `err2(p) <= C B sqrt(lambda) sqrt(opt) + eps` with the constant left free.
pub fn check_sim_bound(preds: &[f64], dataset: &Dataset, opt_hat: f64, b: f64, lambda: f64, eps: f64, tolerance: f64) -> BoundCheck {
    let lhs = err2_of(preds, &dataset.labels);
    let scaled = b * lambda.sqrt() * opt_hat.max(0.0).sqrt();
    BoundCheck::scaled("sim_bound", lhs, scaled, eps, opt_hat, eps, tolerance)
        .detail("B", b)
        .detail("lambda", lambda)
}

/// `exp(B^2 + sqrt(B^2 ln(1/opt)))`, the growth factor of the logistic squared-error bound.
pub fn logistic_squared_factor(opt: f64, b: f64) -> f64 {
    (b * b + (b * b * (1.0 / opt).ln()).sqrt()).exp()
}

/// Formula-level comparison of the two squared-error bounds at equal
/// constants: `opt exp(B^2 + sqrt(B^2 ln(1/opt))) < B sqrt(lambda) sqrt(opt)`.
pub fn logistic_bound_is_tighter(opt: f64, b: f64, lambda: f64) -> bool {
    opt * logistic_squared_factor(opt, b) < b * lambda.sqrt() * opt.sqrt()
}

fn sigmoid_opt_hat(dataset: &Dataset, w_star: &[f64], absolute: bool) -> f64 {
    let mut s = 0.0;
    for (x, y) in dataset.features.rows().zip(&dataset.labels) {
        let r = y - sigmoid(dot(w_star, x));
        s += if absolute { r.abs() } else { r * r };
    }
    s / dataset.len() as f64
}

/// Squared-error bound for logistic-loss minimizers on subgaussian data:
/// `err2(p) <= C opt exp(B^2 + sqrt(B^2 ln(1/opt))) + 2 eps`.
///
/// Also verifies the exact sample chain
/// `err2(p) <= 8 E_S[e^{|w*.x|} (y - g'(w*.x))^2] + 2 eps` and reports the
/// tail quantity against `e^r opt + C e^{B^2} e^r e^{-(r/B)^2}` at
/// `r = B sqrt(ln(1/opt))`.
pub fn check_logistic_squared(
    preds: &[f64],
    dataset: &Dataset,
    b: f64,
    comparators: &ComparatorSet,
    tolerance: f64,
) -> Result<BoundCheck, TransferError> {
    let w_star = planted_weight(dataset)?;
    let sig = FenchelPair::sigmoid();
    let raw_opt = sigmoid_opt_hat(dataset, w_star, false);
    let degenerate = !(raw_opt > 0.0);
    let opt = if degenerate { raw_opt.max(DEGENERATE_OPT_FLOOR) } else { raw_opt };
    let gap = premise_gaps(preds, dataset, std::slice::from_ref(&sig), comparators)?[0];
    let lhs = err2_of(preds, &dataset.labels);

    let mut tail = 0.0;
    for (x, y) in dataset.features.rows().zip(&dataset.labels) {
        let s = dot(w_star, x);
        let r = y - sigmoid(s);
        tail += s.abs().exp() * r * r;
    }
    tail /= dataset.len() as f64;
    let chain_rhs = 8.0 * tail + 2.0 * gap.eps_hat;
    let r = b * (1.0 / opt).ln().max(0.0).sqrt();
    let tail_scaled = (b * b).exp() * r.exp() * (-(r / b).powi(2)).exp();
    let tail_additive = r.exp() * opt;
    let tail_required = if tail <= tail_additive { 0.0 } else { (tail - tail_additive) / tail_scaled };

    let mut check = BoundCheck::scaled(
        "logistic_squared",
        lhs,
        opt * logistic_squared_factor(opt, b),
        2.0 * gap.eps_hat,
        raw_opt,
        gap.eps_hat,
        tolerance,
    )
    .detail("B", b)
    .detail("opt_used", opt)
    .detail("tail_quantity", tail)
    .detail("tail_r", r)
    .detail("tail_required_constant", tail_required)
    .detail("chain_rhs", chain_rhs)
    .detail("chain_slack", chain_rhs - lhs);
    check.degenerate = degenerate;
    Ok(check)
}

/// Absolute-error bound for logistic-loss minimizers on binary labels with
/// subexponential marginals: `err1(p) <= C B opt ln(1/opt) + eps`, with `opt`
/// the absolute error of `x -> g'(w* . x)`.
///
/// Also verifies the exact sample chain
/// `err1(p) <= 2 E_S[ln(1/(g'(1-g'))) |y - g'(w*.x)|] + eps`.
pub fn check_logistic_absolute(
    preds: &[f64],
    dataset: &Dataset,
    b: f64,
    comparators: &ComparatorSet,
    tolerance: f64,
) -> Result<BoundCheck, TransferError> {
    if dataset.meta.label_space != LabelSpace::Binary {
        return Err(TransferError::Inapplicable("absolute-error bound needs binary labels".into()));
    }
    let w_star = planted_weight(dataset)?;
    let sig = FenchelPair::sigmoid();
    let raw_opt = sigmoid_opt_hat(dataset, w_star, true);
    let degenerate = !(raw_opt > 0.0 && raw_opt < 1.0);
    let opt = if degenerate { raw_opt.clamp(DEGENERATE_OPT_FLOOR, 0.5) } else { raw_opt };
    let gap = premise_gaps(preds, dataset, std::slice::from_ref(&sig), comparators)?[0];
    let lhs = err1_of(preds, &dataset.labels);
    let mut weighted = 0.0;
    for (x, y) in dataset.features.rows().zip(&dataset.labels) {
        let s = dot(w_star, x);
        let q = sigmoid(s);
        // ln(1/(q(1-q))) = |s| + 2 ln(1 + e^{-|s|}) avoids cancellation at large |s|.
        let log_term = s.abs() + 2.0 * (-s.abs()).exp().ln_1p();
        weighted += log_term * (y - q).abs();
    }
    weighted /= dataset.len() as f64;
    let chain_rhs = 2.0 * weighted + gap.eps_hat;
    let mut check = BoundCheck::scaled(
        "logistic_absolute",
        lhs,
        b * opt * (1.0 / opt).ln(),
        gap.eps_hat,
        raw_opt,
        gap.eps_hat,
        tolerance,
    )
    .detail("B", b)
    .detail("opt_used", opt)
    .detail("chain_rhs", chain_rhs)
    .detail("chain_slack", chain_rhs - lhs);
    check.degenerate = degenerate;
    Ok(check)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Disagreement {
    pub estimate: f64,
    pub standard_error: f64,
    pub resamples: usize,
}

/// Monte-Carlo estimate of `Pr[y != y_p]` where each resample draws a
/// uniform example and `y_p ~ Bernoulli(p(x))` independently of `y`.
pub fn pconcept_disagreement(preds: &[f64], dataset: &Dataset, resamples: usize, seed: u64) -> Result<Disagreement, TransferError> {
    if dataset.meta.label_space != LabelSpace::Binary {
        return Err(TransferError::Inapplicable("disagreement needs binary labels".into()));
    }
    if dataset.is_empty() || resamples == 0 {
        return Err(TransferError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dataset.len();
    let mut count = 0usize;
    for _ in 0..resamples {
        let i = rng.random_range(0..n);
        let u: f64 = rng.random();
        let yp = if u < preds[i] { 1.0 } else { 0.0 };
        if yp != dataset.labels[i] {
            count += 1;
        }
    }
    let est = count as f64 / resamples as f64;
    Ok(Disagreement { estimate: est, standard_error: (est * (1.0 - est) / resamples as f64).sqrt(), resamples })
}

/// `E[e^{|Z|} 1{|Z| > r}]` for `Z ~ N(0, s^2)`, equal to `2 e^{s^2/2} Phi_bar((r - s^2)/s)`.
pub fn gaussian_exp_tail(s: f64, r: f64) -> f64 {
    let z = (r - s * s) / s;
    let phi_bar = 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
    2.0 * (0.5 * s * s).exp() * phi_bar
}

/// Sample mean and standard error of `e^{|s|} 1{|s| > r}`.
pub fn exp_tail_moment(scores: &[f64], r: f64) -> (f64, f64) {
    let n = scores.len() as f64;
    let vals: Vec<f64> = scores.iter().map(|s| if s.abs() > r { s.abs().exp() } else { 0.0 }).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}
