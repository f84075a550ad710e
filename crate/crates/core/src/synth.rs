//! Synthetic marginals, planted label models and the dataset file format.
//!
//! Every generator is a pure function of its spec and a `u64` seed. Features,
//! clean labels, corruption and calibration draws use separate ChaCha streams
//! of the same seed, so changing the corruption never perturbs the features or
//! the clean labels.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::Serialize;
use thiserror::Error;

use crate::fenchel::Activation;
use crate::linalg::dot;

/// Number of draws used to place the flip region at a requested mass.
pub const FLIP_CALIBRATION_DRAWS: usize = 100_000;

const STREAM_FEATURES: u64 = 0;
const STREAM_LABELS: u64 = 1;
const STREAM_CALIBRATION: u64 = 2;
const STREAM_CORRUPTION: u64 = 3;
const STREAM_BINARIZE: u64 = 4;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed file: expected {expected} rows, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: non-finite or unparseable value `{token}`")]
    NonFinite { line: usize, token: String },
    #[error("line {line}: label {value} outside the {space} label space")]
    LabelRange { line: usize, value: f64, space: LabelSpace },
    #[error("planted mean {value} at row {row} is outside [0, 1] and clipping is disabled")]
    MeanRange { row: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Family of the feature marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    StandardGaussian,
    UniformBall,
    LaplaceProduct,
    StudentT { dof: f64 },
}

impl MarginalKind {
    pub fn from_name(name: &str, dof: Option<f64>) -> Result<Self, DatasetError> {
        match name {
            "standard_gaussian" | "gaussian" => Ok(MarginalKind::StandardGaussian),
            "uniform_ball" => Ok(MarginalKind::UniformBall),
            "laplace_product" | "laplace" => Ok(MarginalKind::LaplaceProduct),
            "student_t" => Ok(MarginalKind::StudentT {
                dof: dof.ok_or_else(|| DatasetError::Config("student_t needs a `dof` parameter".into()))?,
            }),
            other => Err(DatasetError::Config(format!("unknown marginal kind `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MarginalKind::StandardGaussian => "standard_gaussian",
            MarginalKind::UniformBall => "uniform_ball",
            MarginalKind::LaplaceProduct => "laplace_product",
            MarginalKind::StudentT { .. } => "student_t",
        }
    }
}

/// A feature marginal on `R^d`.
///
/// `scale` multiplies the base family: the Gaussian, Laplace and Student-t
/// marginals have per-coordinate standard deviation `scale`, and the ball has
/// radius `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalSpec {
    pub kind: MarginalKind,
    pub dim: usize,
    pub scale: f64,
}

impl MarginalSpec {
    pub fn new(kind: MarginalKind, dim: usize) -> Result<Self, DatasetError> {
        let spec = MarginalSpec { kind, dim, scale: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(dim: usize) -> Self {
        MarginalSpec { kind: MarginalKind::StandardGaussian, dim, scale: 1.0 }
    }

    pub fn uniform_ball(dim: usize) -> Self {
        MarginalSpec { kind: MarginalKind::UniformBall, dim, scale: 1.0 }
    }

    pub fn laplace(dim: usize) -> Self {
        MarginalSpec { kind: MarginalKind::LaplaceProduct, dim, scale: 1.0 }
    }

    pub fn student_t(dim: usize, dof: f64) -> Self {
        MarginalSpec { kind: MarginalKind::StudentT { dof }, dim, scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.dim == 0 {
            return Err(DatasetError::Config("marginal dimension must be positive".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(DatasetError::Config(format!("marginal scale must be positive, got {}", self.scale)));
        }
        if let MarginalKind::StudentT { dof } = self.kind {
            if !(dof > 2.0) {
                return Err(DatasetError::Config(format!(
                    "student_t needs dof > 2 for a finite second moment, got {dof}"
                )));
            }
        }
        Ok(())
    }

    /// Bound `lambda` on `E[(v.x)^2]` over unit `v`.
    pub fn lambda(&self) -> f64 {
        let s2 = self.scale * self.scale;
        match self.kind {
            MarginalKind::UniformBall => s2 / (self.dim as f64 + 2.0),
            _ => s2,
        }
    }

    /// Claimed `(lambda_c, gamma)` with `Pr[|v.x| >= r] <= lambda_c exp(-r^gamma)`,
    /// or `None` when no such class is claimed.
    pub fn concentration(&self) -> Option<(f64, f64)> {
        let s = self.scale;
        match self.kind {
            MarginalKind::StandardGaussian => {
                // 2 Phi_bar(r/s) <= exp(-r^2 / (2 s^2)).
                if s * s <= 0.5 {
                    Some((1.0, 2.0))
                } else if s <= 1.0 {
                    Some((2.0, 1.0))
                } else {
                    None
                }
            }
            // |v.x| <= s almost surely.
            MarginalKind::UniformBall => Some(((s * s).exp(), 2.0)),
            MarginalKind::LaplaceProduct => {
                // Chernoff at unit rate with per-coordinate scale b = s / sqrt 2.
                let b2 = 0.5 * s * s;
                if b2 < 1.0 {
                    Some((2.0 / (1.0 - b2), 1.0))
                } else {
                    None
                }
            }
            MarginalKind::StudentT { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            MarginalKind::StudentT { dof } => format!("student_t(dof={dof},d={},scale={})", self.dim, self.scale),
            k => format!("{}(d={},scale={})", k.name(), self.dim, self.scale),
        }
    }
}

/// Row-major `n x d` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * d, "feature buffer does not match n x d");
        Features { n, d, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// `w . x_i` for every row.
    pub fn scores(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.d, "weight dimension does not match features");
        self.rows().map(|x| dot(w, x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    Interval,
    Binary,
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSpace::Interval => "interval",
            LabelSpace::Binary => "binary",
        })
    }
}

impl LabelSpace {
    pub fn contains(&self, y: f64) -> bool {
        match self {
            LabelSpace::Interval => (0.0..=1.0).contains(&y),
            LabelSpace::Binary => y == 0.0 || y == 1.0,
        }
    }
}

/// Label corruption applied after the clean labels are drawn. Regions are
/// intervals of the planted score `w* . x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Corruption {
    None,
    /// `y -> 1 - y` on `{lo <= w*.x <= hi}`.
    FlipRegion { lo: f64, hi: f64 },
    /// Interval labels move by `± level` (then clip); binary labels flip with probability `level`.
    BoundedNoise { level: f64 },
    /// `y -> value` on `{lo <= w*.x <= hi}`.
    ConstantOverride { lo: f64, hi: f64, value: f64 },
}

impl Corruption {
    /// Flip region `{w*.x >= q}` where `q` is the empirical `1 - mass` quantile
    /// of the planted score on calibration draws from `marginal`.
    pub fn flip_upper_tail(marginal: &MarginalSpec, planted_w: &[f64], mass: f64, seed: u64) -> Result<Self, DatasetError> {
        if !(0.0..=1.0).contains(&mass) {
            return Err(DatasetError::Config(format!("flip mass must lie in [0, 1], got {mass}")));
        }
        if mass == 0.0 {
            return Ok(Corruption::FlipRegion { lo: f64::INFINITY, hi: f64::INFINITY });
        }
        let mut rng = stream_rng(seed, STREAM_CALIBRATION);
        let feats = sample_with(marginal, FLIP_CALIBRATION_DRAWS, &mut rng)?;
        let mut scores = feats.scores(planted_w);
        scores.sort_by(f64::total_cmp);
        let idx = ((1.0 - mass) * scores.len() as f64).floor() as usize;
        let lo = scores[idx.min(scores.len() - 1)];
        Ok(Corruption::FlipRegion { lo, hi: f64::INFINITY })
    }

    fn in_region(lo: f64, hi: f64, s: f64) -> bool {
        s >= lo && s <= hi
    }
}

/// Planted model `E[y | x] = g'(w* . x)` plus corruption.
#[derive(Debug, Clone)]
pub struct LabelModel {
    pub planted_w: Vec<f64>,
    pub activation: Activation,
    pub corruption: Corruption,
    pub label_space: LabelSpace,
    /// Clip planted means into `[0, 1]`; when off, an out-of-range mean is an error.
    pub clip: bool,
}

impl LabelModel {
    pub fn new(planted_w: Vec<f64>, activation: Activation, label_space: LabelSpace) -> Self {
        LabelModel { planted_w, activation, corruption: Corruption::None, label_space, clip: true }
    }

    pub fn with_corruption(mut self, corruption: Corruption) -> Self {
        self.corruption = corruption;
        self
    }

    pub fn with_clip(mut self, clip: bool) -> Self {
        self.clip = clip;
        self
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.planted_w)
    }
}

/// Provenance metadata of a dataset. Marginal and model are absent for
/// datasets loaded from disk.
#[derive(Debug, Clone)]
pub struct DatasetMeta {
    pub seed: u64,
    pub label_space: LabelSpace,
    pub marginal: Option<MarginalSpec>,
    pub model: Option<LabelModel>,
    /// Empirical squared error of the planted model on this sample.
    pub certified_opt_upper_bound: Option<f64>,
    /// Number of labels changed by the corruption.
    pub corrupted_count: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Features,
    pub labels: Vec<f64>,
    pub meta: DatasetMeta,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_with(spec: &MarginalSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Features, DatasetError> {
    spec.validate()?;
    if n == 0 {
        return Err(DatasetError::Config("sample size must be positive".into()));
    }
    let d = spec.dim;
    let s = spec.scale;
    let mut data = Vec::with_capacity(n * d);
    match spec.kind {
        MarginalKind::StandardGaussian => {
            for _ in 0..n * d {
                let z: f64 = StandardNormal.sample(rng);
                data.push(s * z);
            }
        }
        MarginalKind::UniformBall => {
            let mut row = vec![0.0f64; d];
            for _ in 0..n {
                let mut sq: f64 = 0.0;
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(rng);
                    sq += *v * *v;
                }
                let u: f64 = rng.random();
                let radius = s * u.powf(1.0 / d as f64) / sq.sqrt();
                data.extend(row.iter().map(|v| v * radius));
            }
        }
        MarginalKind::LaplaceProduct => {
            let b = s / std::f64::consts::SQRT_2;
            for _ in 0..n * d {
                let e: f64 = Exp1.sample(rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                data.push(sign * b * e);
            }
        }
        MarginalKind::StudentT { dof } => {
            let dist = StudentT::new(dof).map_err(|e| DatasetError::Config(e.to_string()))?;
            let standardize = s * ((dof - 2.0) / dof).sqrt();
            for _ in 0..n * d {
                let t: f64 = dist.sample(rng);
                data.push(standardize * t);
            }
        }
    }
    Ok(Features::new(n, d, data))
}

/// Draw `n` i.i.d. rows from `spec`.
pub fn sample_marginal(spec: &MarginalSpec, n: usize, seed: u64) -> Result<Features, DatasetError> {
    sample_with(spec, n, &mut stream_rng(seed, STREAM_FEATURES))
}

/// Labels for `features` under `model`, with the number of corrupted labels
/// and the planted model's squared error on the result.
pub fn generate_labels(features: &Features, model: &LabelModel, seed: u64) -> Result<(Vec<f64>, usize, f64), DatasetError> {
    if model.planted_w.len() != features.d {
        return Err(DatasetError::Config(format!(
            "planted weight has dimension {}, features have {}",
            model.planted_w.len(),
            features.d
        )));
    }
    let mut label_rng = stream_rng(seed, STREAM_LABELS);
    let mut noise_rng = stream_rng(seed, STREAM_CORRUPTION);
    let mut labels = Vec::with_capacity(features.n);
    let mut corrupted = 0usize;
    let mut sq = 0.0;
    for (i, x) in features.rows().enumerate() {
        let score = dot(&model.planted_w, x);
        let raw = model.activation.eval(score);
        if !raw.is_finite() {
            return Err(DatasetError::MeanRange { row: i, value: raw });
        }
        let mean = if model.clip {
            raw.clamp(0.0, 1.0)
        } else if (0.0..=1.0).contains(&raw) {
            raw
        } else {
            return Err(DatasetError::MeanRange { row: i, value: raw });
        };
        let clean = match model.label_space {
            LabelSpace::Interval => mean,
            LabelSpace::Binary => {
                let u: f64 = label_rng.random();
                if u < mean {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let noise_u: f64 = noise_rng.random();
        let y = match model.corruption {
            Corruption::None => clean,
            Corruption::FlipRegion { lo, hi } => {
                if Corruption::in_region(lo, hi, score) {
                    1.0 - clean
                } else {
                    clean
                }
            }
            Corruption::BoundedNoise { level } => match model.label_space {
                LabelSpace::Interval => {
                    let sign = if noise_u < 0.5 { -1.0 } else { 1.0 };
                    (clean + sign * level).clamp(0.0, 1.0)
                }
                LabelSpace::Binary => {
                    if noise_u < level {
                        1.0 - clean
                    } else {
                        clean
                    }
                }
            },
            Corruption::ConstantOverride { lo, hi, value } => {
                if Corruption::in_region(lo, hi, score) {
                    value
                } else {
                    clean
                }
            }
        };
        if !model.label_space.contains(y) {
            return Err(DatasetError::LabelRange { line: i, value: y, space: model.label_space });
        }
        if y != clean {
            corrupted += 1;
        }
        sq += (y - raw) * (y - raw);
        labels.push(y);
    }
    Ok((labels, corrupted, sq / features.n as f64))
}

/// Sample features and labels and record the certified opt bound.
pub fn generate_dataset(marginal: &MarginalSpec, model: &LabelModel, n: usize, seed: u64) -> Result<Dataset, DatasetError> {
    let features = sample_marginal(marginal, n, seed)?;
    let (labels, corrupted, opt) = generate_labels(&features, model, seed)?;
    Ok(Dataset {
        features,
        labels,
        meta: DatasetMeta {
            seed,
            label_space: model.label_space,
            marginal: Some(*marginal),
            model: Some(model.clone()),
            certified_opt_upper_bound: Some(opt),
            corrupted_count: corrupted,
        },
    })
}

/// Mean squared error of `x -> g'(w . x)` (unclipped) against the labels.
pub fn planted_squared_error(dataset: &Dataset, activation: &Activation, w: &[f64]) -> f64 {
    let mut sq = 0.0;
    for (x, y) in dataset.features.rows().zip(&dataset.labels) {
        let r = y - activation.eval(dot(w, x));
        sq += r * r;
    }
    sq / dataset.len() as f64
}

impl Dataset {
    /// A dataset without provenance, validated against `label_space`.
    pub fn from_parts(features: Features, labels: Vec<f64>, label_space: LabelSpace, seed: u64) -> Result<Self, DatasetError> {
        if features.n == 0 || features.d == 0 {
            return Err(DatasetError::Config("datasets need n > 0 and d > 0".into()));
        }
        if labels.len() != features.n {
            return Err(DatasetError::Truncated { expected: features.n, found: labels.len() });
        }
        for (i, &y) in labels.iter().enumerate() {
            if !label_space.contains(y) {
                return Err(DatasetError::LabelRange { line: i + 2, value: y, space: label_space });
            }
        }
        Ok(Dataset {
            features,
            labels,
            meta: DatasetMeta {
                seed,
                label_space,
                marginal: None,
                model: None,
                certified_opt_upper_bound: None,
                corrupted_count: 0,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.features.n
    }

    pub fn is_empty(&self) -> bool {
        self.features.n == 0
    }

    pub fn dim(&self) -> usize {
        self.features.d
    }

    pub fn mean_label(&self) -> f64 {
        self.labels.iter().sum::<f64>() / self.len() as f64
    }

    /// Canonical text serialization: header plus one `{:.16e}` row per example.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * (self.dim() + 1) * 24 + 64);
        out.push_str(&format!(
            "#simlearn v1 n={} d={} labels={} seed={}\n",
            self.len(),
            self.dim(),
            self.meta.label_space,
            self.meta.seed
        ));
        for (x, y) in self.features.rows().zip(&self.labels) {
            for v in x {
                out.push_str(&format!("{v:.16e} "));
            }
            out.push_str(&format!("{y:.16e}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| DatasetError::MalformedHeader("empty file".into()))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("#simlearn") || tokens.next() != Some("v1") {
            return Err(DatasetError::MalformedHeader(format!("expected `#simlearn v1`, got `{header}`")));
        }
        let (mut n, mut d, mut space, mut seed) = (None, None, None, None);
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| DatasetError::MalformedHeader(format!("bad field `{tok}`")))?;
            let bad = || DatasetError::MalformedHeader(format!("bad value in `{tok}`"));
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|_| bad())?),
                "d" => d = Some(v.parse::<usize>().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                "labels" => {
                    space = Some(match v {
                        "interval" => LabelSpace::Interval,
                        "binary" => LabelSpace::Binary,
                        _ => return Err(bad()),
                    })
                }
                _ => return Err(DatasetError::MalformedHeader(format!("unknown field `{k}`"))),
            }
        }
        let missing = |f: &str| DatasetError::MalformedHeader(format!("missing `{f}`"));
        let n = n.ok_or_else(|| missing("n"))?;
        let d = d.ok_or_else(|| missing("d"))?;
        let space = space.ok_or_else(|| missing("labels"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        if n == 0 || d == 0 {
            return Err(DatasetError::MalformedHeader("n and d must be positive".into()));
        }
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut rows = 0;
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            if rows == n {
                return Err(DatasetError::Truncated { expected: n, found: rows + 1 });
            }
            let mut count = 0;
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| DatasetError::NonFinite { line: line_no, token: tok.to_string() })?;
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite { line: line_no, token: tok.to_string() });
                }
                if count < d {
                    data.push(v);
                } else if count == d {
                    if !space.contains(v) {
                        return Err(DatasetError::LabelRange { line: line_no, value: v, space });
                    }
                    labels.push(v);
                }
                count += 1;
            }
            if count != d + 1 {
                return Err(DatasetError::DimensionMismatch { line: line_no, expected: d + 1, found: count });
            }
            rows += 1;
        }
        if rows != n {
            return Err(DatasetError::Truncated { expected: n, found: rows });
        }
        Dataset::from_parts(Features::new(n, d, data), labels, space, seed)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_canonical_string().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Replace each label by an independent `Bernoulli(y)` draw.
    pub fn binarize_labels(&self, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, STREAM_BINARIZE);
        let labels = self
            .labels
            .iter()
            .map(|&y| {
                let u: f64 = rng.random();
                if u < y {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let mut meta = self.meta.clone();
        meta.label_space = LabelSpace::Binary;
        meta.certified_opt_upper_bound = None;
        Dataset { features: self.features.clone(), labels, meta }
    }

    /// Multiply every feature by `factor`. A planted weight is divided by the
    /// same factor so the planted scores, and hence the labels, are unchanged.
    pub fn rescale_features(&self, factor: f64) -> Dataset {
        let data = self.features.data.iter().map(|v| v * factor).collect();
        let mut meta = self.meta.clone();
        if let Some(m) = meta.marginal.as_mut() {
            m.scale *= factor;
        }
        if let Some(model) = meta.model.as_mut() {
            for w in model.planted_w.iter_mut() {
                *w /= factor;
            }
        }
        Dataset { features: Features::new(self.features.n, self.features.d, data), labels: self.labels.clone(), meta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid_model(d: usize, space: LabelSpace) -> LabelModel {
        let mut w = vec![0.0; d];
        w[0] = 1.0;
        LabelModel::new(w, Activation::sigmoid(), space)
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let spec = MarginalSpec::laplace(3);
        let a = sample_marginal(&spec, 50, 9).unwrap();
        let b = sample_marginal(&spec, 50, 9).unwrap();
        let c = sample_marginal(&spec, 50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_ball_rows_lie_in_the_ball() {
        let spec = MarginalSpec::uniform_ball(3).with_scale(2.0);
        let f = sample_marginal(&spec, 2000, 1).unwrap();
        assert!(f.rows().all(|x| crate::linalg::norm(x) <= 2.0 + 1e-12));
    }

    #[test]
    fn invalid_marginals_are_config_errors() {
        assert!(MarginalSpec::new(MarginalKind::StandardGaussian, 0).is_err());
        assert!(sample_marginal(&MarginalSpec::student_t(2, 2.0), 10, 0).is_err());
        assert!(MarginalKind::from_name("cauchy", None).is_err());
        assert!(MarginalKind::from_name("student_t", None).is_err());
    }

    #[test]
    fn realizable_interval_labels_certify_zero() {
        let spec = MarginalSpec::gaussian(4);
        let ds = generate_dataset(&spec, &sigmoid_model(4, LabelSpace::Interval), 500, 3).unwrap();
        assert_eq!(ds.meta.certified_opt_upper_bound, Some(0.0));
        assert_eq!(ds.meta.corrupted_count, 0);
    }

    #[test]
    fn unclipped_out_of_range_mean_is_an_error() {
        let model = LabelModel::new(vec![1.0, 0.0], Activation::identity(), LabelSpace::Interval).with_clip(false);
        let err = generate_dataset(&MarginalSpec::gaussian(2), &model, 100, 0).unwrap_err();
        assert!(matches!(err, DatasetError::MeanRange { .. }));
        let clipped = LabelModel::new(vec![1.0, 0.0], Activation::identity(), LabelSpace::Interval);
        let ds = generate_dataset(&MarginalSpec::gaussian(2), &clipped, 100, 0).unwrap();
        assert!(ds.labels.iter().all(|y| (0.0..=1.0).contains(y)));
        assert!(ds.meta.certified_opt_upper_bound.unwrap() > 0.0);
    }

    #[test]
    fn corruption_leaves_features_and_clean_labels_alone() {
        let spec = MarginalSpec::gaussian(2);
        let clean = generate_dataset(&spec, &sigmoid_model(2, LabelSpace::Binary), 1000, 5).unwrap();
        let model = sigmoid_model(2, LabelSpace::Binary).with_corruption(Corruption::FlipRegion { lo: 0.5, hi: 1.0 });
        let dirty = generate_dataset(&spec, &model, 1000, 5).unwrap();
        assert_eq!(clean.features, dirty.features);
        let mut flipped = 0;
        for i in 0..1000 {
            let s = dirty.features.row(i)[0];
            if (0.5..=1.0).contains(&s) {
                assert_eq!(dirty.labels[i], 1.0 - clean.labels[i]);
                flipped += 1;
            } else {
                assert_eq!(dirty.labels[i], clean.labels[i]);
            }
        }
        assert_eq!(flipped, dirty.meta.corrupted_count);
    }

    #[test]
    fn canonical_round_trip_is_exact() {
        let ds = generate_dataset(&MarginalSpec::student_t(3, 5.0), &sigmoid_model(3, LabelSpace::Interval), 10, 77).unwrap();
        let text = ds.to_canonical_string();
        let back = Dataset::parse(&text).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.to_canonical_string(), text);
        assert_eq!(back.meta.seed, 77);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let good = "#simlearn v1 n=2 d=1 labels=interval seed=0\n0.5 0.25\n1.0 1.0\n";
        assert!(Dataset::parse(good).is_ok());
        let truncated = "#simlearn v1 n=3 d=1 labels=interval seed=0\n0.5 0.25\n1.0 1.0\n";
        assert!(matches!(Dataset::parse(truncated), Err(DatasetError::Truncated { .. })));
        let range = "#simlearn v1 n=1 d=1 labels=interval seed=0\n0.5 1.5\n";
        assert!(matches!(Dataset::parse(range), Err(DatasetError::LabelRange { .. })));
        let binary = "#simlearn v1 n=1 d=1 labels=binary seed=0\n0.5 0.5\n";
        assert!(matches!(Dataset::parse(binary), Err(DatasetError::LabelRange { .. })));
        let dims = "#simlearn v1 n=1 d=2 labels=interval seed=0\n0.5 0.5\n";
        assert!(matches!(Dataset::parse(dims), Err(DatasetError::DimensionMismatch { .. })));
        let nan = "#simlearn v1 n=1 d=1 labels=interval seed=0\nNaN 0.5\n";
        assert!(matches!(Dataset::parse(nan), Err(DatasetError::NonFinite { .. })));
        assert!(matches!(Dataset::parse("simlearn v1\n"), Err(DatasetError::MalformedHeader(_))));
        assert!(matches!(Dataset::parse(""), Err(DatasetError::MalformedHeader(_))));
    }

    #[test]
    fn rescaling_keeps_planted_scores() {
        let ds = generate_dataset(&MarginalSpec::gaussian(2), &sigmoid_model(2, LabelSpace::Interval), 20, 1).unwrap();
        let big = ds.rescale_features(2.0);
        let m = big.meta.model.as_ref().unwrap();
        assert!(planted_squared_error(&big, &m.activation, &m.planted_w) < 1e-28);
        assert_eq!(big.meta.marginal.unwrap().lambda(), 4.0);
    }
}
