//! Trained predictors and their versioned text serialization.
//!
//! Every predictor maps `R^d` into `[0, 1]`. Floats are written with `{:?}`,
//! which is the shortest representation that parses back to the same bits.

use std::fmt::Write as _;

use serde::Serialize;

use super::isotron::MonotoneFit;
use super::LearnerError;
use crate::fenchel::Activation;
use crate::linalg::dot;
use crate::synth::Features;

pub const PREDICTOR_HEADER: &str = "#simlearn-predictor v1";

pub trait Predict {
    fn predict(&self, x: &[f64]) -> f64;

    fn predict_all(&self, features: &Features) -> Vec<f64> {
        features.rows().map(|x| self.predict(x)).collect()
    }
}

/// Per-iteration record of a gradient-style learner.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GlmTrace {
    pub err2: Vec<f64>,
    pub matching_loss: Vec<f64>,
    pub best_iteration: usize,
    pub step_halvings: usize,
    pub converged: bool,
}

/// `x -> clip(g'(w . x), 0, 1)`.
#[derive(Debug, Clone)]
pub struct GlmPredictor {
    pub w: Vec<f64>,
    pub activation: Activation,
    pub trace: GlmTrace,
}

impl GlmPredictor {
    pub fn new(w: Vec<f64>, activation: Activation) -> Self {
        GlmPredictor { w, activation, trace: GlmTrace::default() }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.w, x)
    }
}

impl Predict for GlmPredictor {
    fn predict(&self, x: &[f64]) -> f64 {
        self.activation.eval(dot(&self.w, x)).clamp(0.0, 1.0)
    }
}

/// Bucket-mean recalibration map on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationTable {
    pub bucket_width: f64,
    pub values: Vec<f64>,
}

/// Number of buckets of width `width` covering `[0, 1]`.
pub fn bucket_count(width: f64) -> usize {
    ((1.0 / width) - 1e-9).ceil().max(1.0) as usize
}

#[inline]
pub fn bucket_index(q: f64, width: f64, count: usize) -> usize {
    let idx = (q / width).floor();
    if idx <= 0.0 {
        0
    } else {
        (idx as usize).min(count - 1)
    }
}

impl CalibrationTable {
    /// Identity-like table mapping each bucket to its midpoint.
    pub fn midpoints(bucket_width: f64) -> Self {
        let count = bucket_count(bucket_width);
        let values = (0..count).map(|b| ((b as f64 + 0.5) * bucket_width).min(1.0)).collect();
        CalibrationTable { bucket_width, values }
    }

    /// Replace each bucket by the mean label of the raw scores falling in it;
    /// empty buckets keep their midpoint. Values are clamped to `[clamp, 1 - clamp]`.
    pub fn fit(raw: &[f64], labels: &[f64], bucket_width: f64, clamp: f64) -> Self {
        let count = bucket_count(bucket_width);
        let mut sums = vec![0.0; count];
        let mut counts = vec![0usize; count];
        for (&q, &y) in raw.iter().zip(labels) {
            let b = bucket_index(q, bucket_width, count);
            sums[b] += y;
            counts[b] += 1;
        }
        let values = (0..count)
            .map(|b| {
                let v = if counts[b] == 0 {
                    ((b as f64 + 0.5) * bucket_width).min(1.0)
                } else {
                    sums[b] / counts[b] as f64
                };
                v.clamp(clamp, 1.0 - clamp)
            })
            .collect();
        CalibrationTable { bucket_width, values }
    }

    #[inline]
    pub fn apply(&self, q: f64) -> f64 {
        self.values[bucket_index(q, self.bucket_width, self.values.len())]
    }
}

/// One multiaccuracy update `x -> sigma (w . x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Update {
    pub w: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmniRound {
    /// `||E_S[x (y - p)]||_2` before the round's update.
    pub correlation_norm: f64,
    pub calibration_error: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OmniTrace {
    pub rounds: Vec<OmniRound>,
    pub best_round: usize,
}

/// `x -> calibrate(clip(p0 + W . x, 0, 1))` with `W = sum_i sigma_i w_i`.
#[derive(Debug, Clone)]
pub struct OmniPredictor {
    pub p0: f64,
    pub updates: Vec<Update>,
    pub table: CalibrationTable,
    pub converged: bool,
    pub trace: OmniTrace,
    aggregate: Vec<f64>,
}

/// `sum_i sigma_i w_i`, accumulated in update order.
pub fn aggregate_updates(d: usize, updates: &[Update]) -> Vec<f64> {
    let mut agg = vec![0.0; d];
    for u in updates {
        for (a, w) in agg.iter_mut().zip(&u.w) {
            *a += u.sigma * w;
        }
    }
    agg
}

impl OmniPredictor {
    pub fn new(d: usize, p0: f64, updates: Vec<Update>, table: CalibrationTable, converged: bool, trace: OmniTrace) -> Self {
        let aggregate = aggregate_updates(d, &updates);
        OmniPredictor { p0, updates, table, converged, trace, aggregate }
    }

    pub fn dim(&self) -> usize {
        self.aggregate.len()
    }

    /// Aggregated weight `W`.
    pub fn weight(&self) -> &[f64] {
        &self.aggregate
    }

    /// Pre-calibration score `clip(p0 + W . x, 0, 1)`.
    #[inline]
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        (self.p0 + dot(&self.aggregate, x)).clamp(0.0, 1.0)
    }
}

impl Predict for OmniPredictor {
    fn predict(&self, x: &[f64]) -> f64 {
        self.table.apply(self.raw_score(x))
    }
}

/// `x -> u(w . x)` with a fitted monotone Lipschitz `u`.
#[derive(Debug, Clone)]
pub struct IsotronPredictor {
    pub w: Vec<f64>,
    pub fit: MonotoneFit,
    pub trace: GlmTrace,
}

impl Predict for IsotronPredictor {
    fn predict(&self, x: &[f64]) -> f64 {
        self.fit.eval(dot(&self.w, x)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPredictor {
    pub value: f64,
}

impl Predict for ConstantPredictor {
    fn predict(&self, _x: &[f64]) -> f64 {
        self.value
    }
}

#[derive(Debug, Clone)]
pub enum Predictor {
    Glm(GlmPredictor),
    Omni(OmniPredictor),
    Isotron(IsotronPredictor),
    Constant(ConstantPredictor),
}

impl Predict for Predictor {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Predictor::Glm(p) => p.predict(x),
            Predictor::Omni(p) => p.predict(x),
            Predictor::Isotron(p) => p.predict(x),
            Predictor::Constant(p) => p.predict(x),
        }
    }
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:?}").unwrap();
    }
    s
}

fn malformed(msg: impl Into<String>) -> LearnerError {
    LearnerError::MalformedPredictor(msg.into())
}

fn parse_floats(s: &str) -> Result<Vec<f64>, LearnerError> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| malformed(format!("bad number `{t}`"))))
        .collect()
}

/// Line-oriented reader that expects `key value...` records in order.
struct Records<'a> {
    lines: std::iter::Filter<std::str::Lines<'a>, fn(&&str) -> bool>,
}

impl<'a> Records<'a> {
    fn new(text: &'a str) -> Self {
        fn keep(l: &&str) -> bool {
            !l.trim().is_empty()
        }
        Records { lines: text.lines().filter(keep as fn(&&str) -> bool) }
    }

    fn expect(&mut self, key: &str) -> Result<&'a str, LearnerError> {
        let line = self.lines.next().ok_or_else(|| malformed(format!("missing `{key}` record")))?;
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(malformed(format!("expected `{key}`, found `{k}`")));
        }
        Ok(rest.trim())
    }

    fn finish(mut self) -> Result<(), LearnerError> {
        match self.lines.next() {
            None => Ok(()),
            Some(l) => Err(malformed(format!("trailing content `{l}`"))),
        }
    }
}

impl Predictor {
    pub fn kind(&self) -> &'static str {
        match self {
            Predictor::Glm(_) => "glm",
            Predictor::Omni(_) => "omni",
            Predictor::Isotron(_) => "isotron",
            Predictor::Constant(_) => "constant",
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{PREDICTOR_HEADER} kind={}\n", self.kind());
        match self {
            Predictor::Glm(p) => {
                writeln!(s, "activation {}", p.activation.tag()).unwrap();
                writeln!(s, "w {}", join(&p.w)).unwrap();
            }
            Predictor::Omni(p) => {
                writeln!(s, "dim {}", p.dim()).unwrap();
                writeln!(s, "p0 {:?}", p.p0).unwrap();
                writeln!(s, "converged {}", p.converged).unwrap();
                writeln!(s, "updates {}", p.updates.len()).unwrap();
                for u in &p.updates {
                    writeln!(s, "update {:?} {}", u.sigma, join(&u.w)).unwrap();
                }
                writeln!(s, "bucket_width {:?}", p.table.bucket_width).unwrap();
                writeln!(s, "calibration {}", join(&p.table.values)).unwrap();
            }
            Predictor::Isotron(p) => {
                writeln!(s, "w {}", join(&p.w)).unwrap();
                writeln!(s, "knots_t {}", join(&p.fit.knots_t)).unwrap();
                writeln!(s, "knots_u {}", join(&p.fit.knots_u)).unwrap();
            }
            Predictor::Constant(p) => {
                writeln!(s, "value {:?}", p.value).unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LearnerError> {
        let mut recs = Records::new(text);
        let header = recs.lines.next().ok_or_else(|| malformed("empty predictor file"))?;
        let kind = header
            .strip_prefix(PREDICTOR_HEADER)
            .and_then(|rest| rest.trim().strip_prefix("kind="))
            .ok_or_else(|| malformed(format!("bad header `{header}`")))?;
        let pred = match kind {
            "glm" => {
                let tag = recs.expect("activation")?;
                let activation = Activation::from_tag(tag)?;
                let w = parse_floats(recs.expect("w")?)?;
                Predictor::Glm(GlmPredictor::new(w, activation))
            }
            "omni" => {
                let dim: usize = recs.expect("dim")?.parse().map_err(|_| malformed("bad dim"))?;
                let p0: f64 = recs.expect("p0")?.parse().map_err(|_| malformed("bad p0"))?;
                let converged: bool = recs.expect("converged")?.parse().map_err(|_| malformed("bad converged flag"))?;
                let count: usize = recs.expect("updates")?.parse().map_err(|_| malformed("bad update count"))?;
                let mut updates = Vec::with_capacity(count);
                for _ in 0..count {
                    let vals = parse_floats(recs.expect("update")?)?;
                    if vals.len() != dim + 1 {
                        return Err(malformed(format!("update has {} values, expected {}", vals.len(), dim + 1)));
                    }
                    updates.push(Update { sigma: vals[0], w: vals[1..].to_vec() });
                }
                let bucket_width: f64 = recs.expect("bucket_width")?.parse().map_err(|_| malformed("bad bucket width"))?;
                let values = parse_floats(recs.expect("calibration")?)?;
                if !(bucket_width > 0.0) || values.len() != bucket_count(bucket_width) {
                    return Err(malformed("calibration table does not match its bucket width"));
                }
                let table = CalibrationTable { bucket_width, values };
                Predictor::Omni(OmniPredictor::new(dim, p0, updates, table, converged, OmniTrace::default()))
            }
            "isotron" => {
                let w = parse_floats(recs.expect("w")?)?;
                let knots_t = parse_floats(recs.expect("knots_t")?)?;
                let knots_u = parse_floats(recs.expect("knots_u")?)?;
                let fit = MonotoneFit::new(knots_t, knots_u).map_err(|e| malformed(e.to_string()))?;
                Predictor::Isotron(IsotronPredictor { w, fit, trace: GlmTrace::default() })
            }
            "constant" => {
                let value: f64 = recs.expect("value")?.parse().map_err(|_| malformed("bad value"))?;
                Predictor::Constant(ConstantPredictor { value })
            }
            other => return Err(malformed(format!("unknown predictor kind `{other}`"))),
        };
        recs.finish()?;
        Ok(pred)
    }
}
