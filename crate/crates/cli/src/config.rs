//! Experiment configuration files.
//!
//! Configurations are TOML documents with an explicit `schema_version`.
//! Unknown keys are rejected so that typos surface as configuration errors.

use crate::error::CliError;
use serde::Deserialize;
use simlearn::fenchel::{Activation, FenchelPair};
use simlearn::synth::{Corruption, LabelModel, LabelSpace, MarginalKind, MarginalSpec};
use std::path::Path;

/// The only schema version this build understands.
pub const SCHEMA_VERSION: u32 = 1;

/// Check names accepted in `evaluation.checks`.
pub const CHECK_NAMES: [&str; 6] = [
    "bilipschitz_transfer",
    "general_activation_transfer",
    "sim_bound",
    "logistic_squared",
    "logistic_absolute",
    "pconcept",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub data: DataConfig,
    pub marginal: Option<MarginalConfig>,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub learners: Vec<LearnerConfig>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "experiment".to_string()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_n")]
    pub n_train: usize,
    #[serde(default = "default_n")]
    pub n_eval: usize,
    /// `bundled:toy` or a path to a dataset file. When set, the file is used
    /// for both training and evaluation instead of generated data.
    pub dataset: Option<String>,
}

fn default_n() -> usize {
    10_000
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { n_train: default_n(), n_eval: default_n(), dataset: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalConfig {
    pub kind: String,
    pub dim: usize,
    #[serde(default = "one")]
    pub scale: f64,
    pub dof: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl MarginalConfig {
    pub fn to_spec(&self) -> Result<MarginalSpec, CliError> {
        let kind = MarginalKind::from_name(&self.kind, self.dof)?;
        let spec = MarginalSpec::new(kind, self.dim)?.with_scale(self.scale);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub activation: String,
    pub planted_w: Vec<f64>,
    #[serde(default = "default_label_space")]
    pub label_space: String,
    #[serde(default)]
    pub corruption: CorruptionConfig,
    #[serde(default = "yes")]
    pub clip: bool,
}

fn default_label_space() -> String {
    "interval".to_string()
}

fn yes() -> bool {
    true
}

pub fn parse_label_space(name: &str) -> Result<LabelSpace, CliError> {
    match name {
        "interval" => Ok(LabelSpace::Interval),
        "binary" => Ok(LabelSpace::Binary),
        other => Err(CliError::Config(format!("unknown label space `{other}`"))),
    }
}

impl ModelConfig {
    pub fn to_model(&self, marginal: &MarginalSpec, seed: u64) -> Result<LabelModel, CliError> {
        let activation = Activation::from_tag(&self.activation)?;
        if self.planted_w.len() != marginal.dim {
            return Err(CliError::Config(format!(
                "planted_w has {} entries but the marginal has dimension {}",
                self.planted_w.len(),
                marginal.dim
            )));
        }
        let label_space = parse_label_space(&self.label_space)?;
        let corruption = self.corruption.to_corruption(marginal, &self.planted_w, seed)?;
        Ok(LabelModel::new(self.planted_w.clone(), activation, label_space).with_corruption(corruption).with_clip(self.clip))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum CorruptionConfig {
    #[default]
    None,
    BoundedNoise {
        level: f64,
    },
    /// Flip the labels on the upper tail of the planted score holding `mass`.
    FlipTail {
        mass: f64,
    },
    FlipRegion {
        lo: f64,
        hi: f64,
    },
    ConstantOverride {
        lo: f64,
        hi: f64,
        value: f64,
    },
}

impl CorruptionConfig {
    pub fn to_corruption(&self, marginal: &MarginalSpec, planted_w: &[f64], seed: u64) -> Result<Corruption, CliError> {
        Ok(match *self {
            CorruptionConfig::None => Corruption::None,
            CorruptionConfig::BoundedNoise { level } => {
                if !(0.0..=1.0).contains(&level) {
                    return Err(CliError::Config(format!("noise level must lie in [0, 1], got {level}")));
                }
                Corruption::BoundedNoise { level }
            }
            CorruptionConfig::FlipTail { mass } => Corruption::flip_upper_tail(marginal, planted_w, mass, seed)?,
            CorruptionConfig::FlipRegion { lo, hi } => Corruption::FlipRegion { lo, hi },
            CorruptionConfig::ConstantOverride { lo, hi, value } => Corruption::ConstantOverride { lo, hi, value },
        })
    }

    /// Short label used in instance keys.
    pub fn label(&self) -> String {
        match self {
            CorruptionConfig::None => "clean".to_string(),
            CorruptionConfig::BoundedNoise { level } => format!("noise{level}"),
            CorruptionConfig::FlipTail { mass } => format!("flip{mass}"),
            CorruptionConfig::FlipRegion { lo, hi } => format!("region{lo}:{hi}"),
            CorruptionConfig::ConstantOverride { lo, hi, value } => format!("override{lo}:{hi}={value}"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    Omni {
        name: Option<String>,
        b: f64,
        eps_ma: f64,
        eps_cal: Option<f64>,
        bucket_width: Option<f64>,
        round_cap: Option<usize>,
        #[serde(default)]
        binarize: bool,
    },
    Glmtron {
        name: Option<String>,
        b: f64,
        #[serde(default = "default_glmtron_iters")]
        iters: usize,
        #[serde(default = "default_glmtron_tol")]
        tol: f64,
        /// Defaults to the model activation, or sigmoid without a model.
        activation: Option<String>,
    },
    Isotron {
        name: Option<String>,
        b: f64,
        #[serde(default = "default_isotron_iters")]
        iters: usize,
        #[serde(default = "one")]
        lipschitz: f64,
    },
    Logistic {
        name: Option<String>,
        b: f64,
        #[serde(default = "one")]
        step: f64,
        #[serde(default = "default_logistic_iters")]
        iters: usize,
        #[serde(default = "default_logistic_tol")]
        tol: f64,
    },
}

fn default_glmtron_iters() -> usize {
    500
}

fn default_glmtron_tol() -> f64 {
    1e-12
}

fn default_isotron_iters() -> usize {
    100
}

fn default_logistic_iters() -> usize {
    2000
}

fn default_logistic_tol() -> f64 {
    1e-13
}

impl LearnerConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            LearnerConfig::Omni { .. } => "omni",
            LearnerConfig::Glmtron { .. } => "glmtron",
            LearnerConfig::Isotron { .. } => "isotron",
            LearnerConfig::Logistic { .. } => "logistic",
        }
    }

    /// Label of the learner in tables and file names.
    pub fn label(&self) -> String {
        let name = match self {
            LearnerConfig::Omni { name, .. }
            | LearnerConfig::Glmtron { name, .. }
            | LearnerConfig::Isotron { name, .. }
            | LearnerConfig::Logistic { name, .. } => name.clone(),
        };
        name.unwrap_or_else(|| self.kind().to_string())
    }

    pub fn b(&self) -> f64 {
        match self {
            LearnerConfig::Omni { b, .. }
            | LearnerConfig::Glmtron { b, .. }
            | LearnerConfig::Isotron { b, .. }
            | LearnerConfig::Logistic { b, .. } => *b,
        }
    }

    /// The learner's own accuracy target, where it has one.
    pub fn eps(&self) -> Option<f64> {
        match self {
            LearnerConfig::Omni { eps_ma, .. } => Some(*eps_ma),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Pairs whose matching losses enter the error report.
    #[serde(default = "default_pairs")]
    pub pairs: Vec<String>,
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
    /// Random comparators drawn from the radius-`B` ball.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    /// Add the descent optimum of the check's pair to the comparators.
    #[serde(default)]
    pub descent_optimum: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Pair for `bilipschitz_transfer`; defaults to the model activation.
    pub transfer_pair: Option<String>,
    /// Slope of the bi-Lipschitz surrogate in `general_activation_transfer`.
    pub phi_slope: Option<f64>,
    /// `B` used by the bound checks; defaults to the learner's `b`.
    pub b: Option<f64>,
    /// `eps` used by `sim_bound`; defaults to the learner's target or 0.
    pub eps: Option<f64>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

fn default_pairs() -> Vec<String> {
    vec!["sigmoid".to_string()]
}

fn default_checks() -> Vec<String> {
    vec!["sim_bound".to_string()]
}

fn default_candidates() -> usize {
    1000
}

fn default_tolerance() -> f64 {
    simlearn::transfer::DEFAULT_BOUND_TOLERANCE
}

fn default_resamples() -> usize {
    100_000
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            pairs: default_pairs(),
            checks: default_checks(),
            candidates: default_candidates(),
            descent_optimum: false,
            tolerance: default_tolerance(),
            transfer_pair: None,
            phi_slope: None,
            b: None,
            eps: None,
            resamples: default_resamples(),
        }
    }
}

/// Replaces the model corruption by each listed setting in turn.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub noise_levels: Vec<f64>,
    #[serde(default)]
    pub flip_masses: Vec<f64>,
}

impl SweepConfig {
    pub fn corruptions(&self) -> Vec<CorruptionConfig> {
        let mut out: Vec<CorruptionConfig> =
            self.noise_levels.iter().map(|&level| CorruptionConfig::BoundedNoise { level }).collect();
        out.extend(self.flip_masses.iter().map(|&mass| CorruptionConfig::FlipTail { mass }));
        out
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub csv: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolve every tag and name so that errors surface before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        match (&self.data.dataset, &self.marginal, &self.model) {
            (Some(_), _, _) => {}
            (None, Some(m), Some(model)) => {
                let spec = m.to_spec()?;
                model.to_model(&spec, 0)?;
            }
            (None, _, _) => {
                return Err(CliError::Config("either data.dataset or both [marginal] and [model] are required".into()))
            }
        }
        if let Some(model) = &self.model {
            Activation::from_tag(&model.activation)?;
            parse_label_space(&model.label_space)?;
        }
        for tag in &self.evaluation.pairs {
            FenchelPair::from_tag(tag)?;
        }
        if let Some(tag) = &self.evaluation.transfer_pair {
            FenchelPair::from_tag(tag)?;
        }
        for check in &self.evaluation.checks {
            if !CHECK_NAMES.contains(&check.as_str()) {
                return Err(CliError::Config(format!("unknown check `{check}`; known checks: {}", CHECK_NAMES.join(", "))));
            }
        }
        for learner in &self.learners {
            if let LearnerConfig::Glmtron { activation: Some(tag), .. } = learner {
                Activation::from_tag(tag)?;
            }
            if !(learner.b() > 0.0 && learner.b().is_finite()) {
                return Err(CliError::Config(format!("learner `{}` needs a positive finite b", learner.label())));
            }
        }
        let mut labels: Vec<String> = self.learners.iter().map(|l| l.label()).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("learner labels must be distinct; set `name` to disambiguate".into()));
        }
        if self.data.n_train == 0 || self.data.n_eval == 0 {
            return Err(CliError::Config("n_train and n_eval must be positive".into()));
        }
        Ok(())
    }

    /// Corruption settings of the instances, in order.
    pub fn corruptions(&self) -> Vec<CorruptionConfig> {
        match &self.sweep {
            Some(s) if !s.corruptions().is_empty() => s.corruptions(),
            _ => vec![self.model.as_ref().map(|m| m.corruption).unwrap_or_default()],
        }
    }

    /// Activation of the planted model, or sigmoid when there is none.
    pub fn model_activation(&self) -> Result<Activation, CliError> {
        match &self.model {
            Some(m) => Ok(Activation::from_tag(&m.activation)?),
            None => Ok(Activation::sigmoid()),
        }
    }
}
