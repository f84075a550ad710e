//! Experiment orchestration: instances, training, bound checks and the CSV table.
//!
//! An instance is one corruption setting at one seed. Every instance trains
//! each configured learner and evaluates each configured check on held-out
//! data, producing one row per `(instance, learner, check)`. Rows are ordered
//! by instance, then learner, then check, whatever the number of workers.

use crate::config::{CorruptionConfig, ExperimentConfig, LearnerConfig};
use crate::error::CliError;
use crate::toy::resolve_dataset;
use serde::Serialize;
use simlearn::fenchel::{Activation, FenchelPair};
use simlearn::learners::{
    train_glmtron, train_isotron, train_logistic, train_omnipredictor, DescentConfig, GlmtronConfig, IsotronConfig,
    OmniConfig, Predict, Predictor,
};
use simlearn::linalg::norm;
use simlearn::synth::{generate_dataset, planted_squared_error, Dataset, Features, MarginalSpec};
use simlearn::transfer::{
    calibrate_constant, check_bilipschitz_transfer, check_general_activation_transfer, check_logistic_absolute,
    check_logistic_squared, check_sim_bound, evaluate_predictions, pconcept_disagreement, BoundCheck, ComparatorSet,
    ErrorReport,
};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

pub const CSV_HEADER: [&str; 10] =
    ["instance", "learner", "opt_hat", "err2", "err1", "theorem", "rhs", "slack", "c_report", "runtime_ms"];

/// Lower end of the default surrogate slope for `general_activation_transfer`.
pub const MIN_PHI_SLOPE: f64 = 1e-3;

const STREAM_EVAL: u64 = 0x65_76_61_6c;
const STREAM_COMPARATORS: u64 = 0x63_6f_6d_70;
const STREAM_CORRUPTION: u64 = 0x63_6f_72_72;
const STREAM_LEARNER: u64 = 0x6c_65_61_72;
const STREAM_RESAMPLE: u64 = 0x72_65_73_61;

/// Mix a seed with a stream tag so that derived seeds do not collide.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub key: String,
    pub seed: u64,
    pub corruption: CorruptionConfig,
}

/// Instances in table order: corruption settings, then seeds.
pub fn instances(cfg: &ExperimentConfig) -> Vec<Instance> {
    let mut out = Vec::new();
    for corruption in cfg.corruptions() {
        let setting = match &cfg.data.dataset {
            Some(d) => d.clone(),
            None => corruption.label(),
        };
        for &seed in &cfg.seeds {
            out.push(Instance { key: format!("{}/{}/seed{}", cfg.name, setting, seed), seed, corruption });
        }
    }
    out
}

/// Training and evaluation data of one instance.
#[derive(Debug, Clone)]
pub struct InstanceData {
    pub train: Dataset,
    pub eval: Dataset,
    pub lambda: f64,
}

/// Largest eigenvalue of the empirical second-moment matrix, by power iteration.
pub fn second_moment_bound(features: &Features) -> f64 {
    let d = features.d;
    let mut m = vec![0.0; d * d];
    for x in features.rows() {
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] += x[i] * x[j];
            }
        }
    }
    let n = features.n.max(1) as f64;
    m.iter_mut().for_each(|v| *v /= n);
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                next[i] += m[i * d + j] * v[j];
            }
        }
        let len = norm(&next);
        if len == 0.0 {
            return 0.0;
        }
        lambda = len;
        v = next.into_iter().map(|x| x / len).collect();
    }
    lambda
}

pub fn build_instance(cfg: &ExperimentConfig, inst: &Instance, base: Option<&Path>) -> Result<InstanceData, CliError> {
    if let Some(reference) = &cfg.data.dataset {
        let ds = resolve_dataset(reference, base)?;
        let lambda = second_moment_bound(&ds.features);
        return Ok(InstanceData { train: ds.clone(), eval: ds, lambda });
    }
    let (marginal, model) = planted_parts(cfg, inst)?;
    let train = generate_dataset(&marginal, &model, cfg.data.n_train, inst.seed)?;
    let eval = generate_dataset(&marginal, &model, cfg.data.n_eval, derive_seed(inst.seed, STREAM_EVAL))?;
    Ok(InstanceData { train, eval, lambda: marginal.lambda() })
}

fn planted_parts(cfg: &ExperimentConfig, inst: &Instance) -> Result<(MarginalSpec, simlearn::synth::LabelModel), CliError> {
    let (Some(m), Some(model_cfg)) = (&cfg.marginal, &cfg.model) else {
        return Err(CliError::Config("generated data needs [marginal] and [model]".into()));
    };
    let marginal = m.to_spec()?;
    let mut model_cfg = model_cfg.clone();
    model_cfg.corruption = inst.corruption;
    let model = model_cfg.to_model(&marginal, derive_seed(inst.seed, STREAM_CORRUPTION))?;
    Ok((marginal, model))
}

/// Generate the training set of the first instance.
pub fn generate_training_data(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Dataset, CliError> {
    let mut inst = instances(cfg).into_iter().next().expect("configs have at least one seed");
    if let Some(s) = seed {
        inst.seed = s;
    }
    let (marginal, model) = planted_parts(cfg, &inst)?;
    Ok(generate_dataset(&marginal, &model, cfg.data.n_train, inst.seed)?)
}

/// Train one configured learner on `ds`.
pub fn train(learner: &LearnerConfig, ds: &Dataset, lambda: f64, model_activation: &Activation, seed: u64) -> Result<Predictor, CliError> {
    let predictor = match learner {
        LearnerConfig::Omni { b, eps_ma, eps_cal, bucket_width, round_cap, binarize, .. } => {
            let mut c = OmniConfig::new(*b, *eps_ma, eps_cal.unwrap_or(*eps_ma), lambda);
            if let Some(w) = bucket_width {
                c.bucket_width = *w;
            }
            if let Some(r) = round_cap {
                c.round_cap = *r;
            }
            c.binarize = *binarize;
            c.seed = derive_seed(seed, STREAM_LEARNER);
            Predictor::Omni(train_omnipredictor(ds, &c)?)
        }
        LearnerConfig::Glmtron { b, iters, tol, activation, .. } => {
            let act = match activation {
                Some(tag) => Activation::from_tag(tag)?,
                None => model_activation.clone(),
            };
            Predictor::Glm(train_glmtron(ds, &act, &GlmtronConfig::new(*b, *iters, *tol))?)
        }
        LearnerConfig::Isotron { b, iters, lipschitz, .. } => {
            let mut c = IsotronConfig::new(*b, *iters);
            c.lipschitz = *lipschitz;
            Predictor::Isotron(train_isotron(ds, &c)?)
        }
        LearnerConfig::Logistic { b, step, iters, tol, .. } => Predictor::Glm(train_logistic(ds, &DescentConfig::new(*b, *step, *iters, *tol))?),
    };
    Ok(predictor)
}

/// Predictions of `predictor` on `features`, rejecting non-finite outputs.
pub fn finite_predictions(predictor: &Predictor, features: &Features) -> Result<Vec<f64>, CliError> {
    let preds = predictor.predict_all(features);
    if let Some(i) = preds.iter().position(|p| !p.is_finite()) {
        return Err(CliError::Numeric(format!("{} predictor returned {} on row {i}", predictor.kind(), preds[i])));
    }
    Ok(preds)
}

/// One CSV row. `check` keeps the full bound record for calibration.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub instance: String,
    pub learner: String,
    pub opt_hat: Option<f64>,
    pub err2: Option<f64>,
    pub err1: Option<f64>,
    pub theorem: String,
    pub rhs: Option<f64>,
    pub slack: Option<f64>,
    pub c_report: Option<f64>,
    pub runtime_ms: Option<f64>,
    #[serde(skip)]
    pub check: Option<BoundCheck>,
    #[serde(skip)]
    pub failed: bool,
}

impl Row {
    fn error(instance: &str, learner: &str, check: &str, report: Option<&ErrorReport>, message: &str) -> Row {
        Row {
            instance: instance.to_string(),
            learner: learner.to_string(),
            opt_hat: None,
            err2: report.map(|r| r.err2),
            err1: report.map(|r| r.err1),
            theorem: format!("{check} [error: {}]", message.replace(['\n', '\r'], " ")),
            rhs: None,
            slack: None,
            c_report: None,
            runtime_ms: None,
            check: None,
            failed: true,
        }
    }

    /// Name of the check, without any error annotation.
    pub fn check_name(&self) -> &str {
        self.theorem.split(' ').next().unwrap_or("")
    }

    pub fn key(&self) -> (String, String, String) {
        (self.instance.clone(), self.learner.clone(), self.check_name().to_string())
    }

    fn refresh_from_check(&mut self) {
        if let Some(c) = &self.check {
            self.rhs = Some(c.rhs);
            self.slack = Some(c.slack);
            self.c_report = c.constant;
        }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.instance.clone(),
            self.learner.clone(),
            fmt_opt(self.opt_hat),
            fmt_opt(self.err2),
            fmt_opt(self.err1),
            self.theorem.clone(),
            fmt_opt(self.rhs),
            fmt_opt(self.slack),
            fmt_opt(self.c_report),
            fmt_opt(self.runtime_ms),
        ]
    }
}

/// Shortest round-trip representation, or empty for missing values.
pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:?}"),
        None => String::new(),
    }
}

/// Settings that are not part of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: usize,
    /// Fill the `runtime_ms` column; the table is then no longer reproducible.
    pub timings: bool,
    /// Directory against which relative dataset paths resolve.
    pub base_dir: Option<PathBuf>,
    /// Instances whose keys are listed here are skipped.
    pub skip: BTreeSet<(String, String, String)>,
}

fn run_check(
    name: &str,
    cfg: &ExperimentConfig,
    learner: &LearnerConfig,
    data: &InstanceData,
    preds: &[f64],
    comparators: &ComparatorSet,
    seed: u64,
) -> Result<(BoundCheck, Option<f64>), String> {
    let ev = &cfg.evaluation;
    let b = ev.b.unwrap_or_else(|| learner.b());
    let eval = &data.eval;
    let tol = ev.tolerance;
    let planted = eval.meta.model.as_ref();
    let with_optimum = |pair: &FenchelPair| -> Result<ComparatorSet, String> {
        if ev.descent_optimum {
            comparators.clone().with_descent_optimum(eval, pair).map_err(|e| e.to_string())
        } else {
            Ok(comparators.clone())
        }
    };
    let e = |err: simlearn::transfer::TransferError| err.to_string();
    match name {
        "bilipschitz_transfer" => {
            let tag = match (&ev.transfer_pair, planted) {
                (Some(t), _) => t.clone(),
                (None, Some(m)) => m.activation.tag(),
                (None, None) => return Err("no transfer_pair and no planted model".into()),
            };
            let pair = FenchelPair::from_tag(&tag).map_err(|x| x.to_string())?;
            let c = check_bilipschitz_transfer(preds, eval, &pair, &with_optimum(&pair)?, tol).map_err(e)?;
            let opt = c.opt_hat;
            Ok((c, Some(opt)))
        }
        "general_activation_transfer" => {
            let m = planted.ok_or("dataset has no planted model")?;
            let g = FenchelPair::new(m.activation.clone());
            let slope = match ev.phi_slope {
                Some(s) => s,
                None => {
                    let opt = planted_squared_error(eval, &m.activation, &m.planted_w);
                    (opt.sqrt() / (b * data.lambda.sqrt())).clamp(MIN_PHI_SLOPE, 1.0)
                }
            };
            let phi = FenchelPair::new(m.activation.perturb_bilipschitz(slope).map_err(|x| x.to_string())?);
            let c = check_general_activation_transfer(preds, eval, &g, &phi, &with_optimum(&phi)?, tol).map_err(e)?;
            let opt = c.opt_hat;
            Ok((c, Some(opt)))
        }
        "sim_bound" => {
            let m = planted.ok_or("dataset has no planted model")?;
            let opt = planted_squared_error(eval, &m.activation, &m.planted_w);
            let eps = ev.eps.or(learner.eps()).unwrap_or(0.0);
            Ok((check_sim_bound(preds, eval, opt, b, data.lambda, eps, tol), Some(opt)))
        }
        "logistic_squared" => {
            let sig = FenchelPair::sigmoid();
            let c = check_logistic_squared(preds, eval, b, &with_optimum(&sig)?, tol).map_err(e)?;
            let opt = c.opt_hat;
            Ok((c, Some(opt)))
        }
        "logistic_absolute" => {
            let sig = FenchelPair::sigmoid();
            let c = check_logistic_absolute(preds, eval, b, &with_optimum(&sig)?, tol).map_err(e)?;
            let opt = c.opt_hat;
            Ok((c, Some(opt)))
        }
        "pconcept" => {
            let d = pconcept_disagreement(preds, eval, ev.resamples, derive_seed(seed, STREAM_RESAMPLE)).map_err(e)?;
            let err1 = preds.iter().zip(&eval.labels).map(|(p, y)| (y - p).abs()).sum::<f64>() / preds.len() as f64;
            let rhs = 3.0 * d.standard_error;
            let lhs = (d.estimate - err1).abs();
            let mut details = std::collections::BTreeMap::new();
            details.insert("disagreement".to_string(), d.estimate);
            details.insert("standard_error".to_string(), d.standard_error);
            let check = BoundCheck {
                theorem: "pconcept".into(),
                lhs,
                rhs,
                slack: rhs - lhs,
                pass: lhs <= rhs,
                tolerance: 0.0,
                constant: None,
                required_constant: None,
                scaled_term: 0.0,
                additive_term: rhs,
                opt_hat: f64::NAN,
                eps_hat: f64::NAN,
                degenerate: false,
                details,
            };
            Ok((check, None))
        }
        other => Err(format!("unknown check `{other}`")),
    }
}

/// Comparators for an instance: the planted weight when it lies in the
/// radius-`b` ball, plus the configured number of random points.
pub fn comparators_for(eval: &Dataset, b: f64, count: usize, seed: u64) -> ComparatorSet {
    let mut set = ComparatorSet::new(b);
    if let Some(m) = &eval.meta.model {
        if norm(&m.planted_w) <= b * (1.0 + 1e-12) {
            set = set.with_candidate(m.planted_w.clone());
        }
    }
    set.with_random(eval.dim(), count, derive_seed(seed, STREAM_COMPARATORS))
}

/// Rows of one instance, in learner-then-check order.
pub fn run_instance(cfg: &ExperimentConfig, inst: &Instance, opts: &RunOptions) -> Vec<Row> {
    let wanted: Vec<(&LearnerConfig, &String)> = cfg
        .learners
        .iter()
        .flat_map(|l| cfg.evaluation.checks.iter().map(move |c| (l, c)))
        .filter(|(l, c)| !opts.skip.contains(&(inst.key.clone(), l.label(), (*c).clone())))
        .collect();
    if wanted.is_empty() {
        return Vec::new();
    }
    let data = match build_instance(cfg, inst, opts.base_dir.as_deref()) {
        Ok(d) => d,
        Err(err) => {
            return wanted.iter().map(|(l, c)| Row::error(&inst.key, &l.label(), c, None, &err.to_string())).collect();
        }
    };
    let model_activation = cfg.model_activation().unwrap_or_else(|_| Activation::sigmoid());
    let pairs: Vec<FenchelPair> = cfg.evaluation.pairs.iter().filter_map(|t| FenchelPair::from_tag(t).ok()).collect();
    let mut rows = Vec::new();
    for learner in &cfg.learners {
        let label = learner.label();
        let checks: Vec<&String> = wanted.iter().filter(|(l, _)| l.label() == label).map(|(_, c)| *c).collect();
        if checks.is_empty() {
            continue;
        }
        let start = Instant::now();
        let trained = train(learner, &data.train, data.lambda, &model_activation, inst.seed)
            .and_then(|p| finite_predictions(&p, &data.eval.features))
            .and_then(|preds| {
                evaluate_predictions(&preds, &data.eval, &pairs).map(|r| (preds, r)).map_err(|e| CliError::Numeric(e.to_string()))
            });
        let (preds, report) = match trained {
            Ok(v) => v,
            Err(err) => {
                rows.extend(checks.iter().map(|c| Row::error(&inst.key, &label, c, None, &err.to_string())));
                continue;
            }
        };
        let train_ms = start.elapsed().as_secs_f64() * 1e3;
        let b = cfg.evaluation.b.unwrap_or_else(|| learner.b());
        let comparators = comparators_for(&data.eval, b, cfg.evaluation.candidates, inst.seed);
        for name in checks {
            let check_start = Instant::now();
            match run_check(name, cfg, learner, &data, &preds, &comparators, inst.seed) {
                Ok((check, opt)) => {
                    let mut row = Row {
                        instance: inst.key.clone(),
                        learner: label.clone(),
                        opt_hat: opt,
                        err2: Some(report.err2),
                        err1: Some(report.err1),
                        theorem: name.clone(),
                        rhs: None,
                        slack: None,
                        c_report: None,
                        runtime_ms: opts.timings.then(|| train_ms + check_start.elapsed().as_secs_f64() * 1e3),
                        check: Some(check),
                        failed: false,
                    };
                    row.refresh_from_check();
                    rows.push(row);
                }
                Err(msg) => rows.push(Row::error(&inst.key, &label, name, Some(&report), &msg)),
            }
        }
    }
    rows
}

/// Calibrate the free constant of each theorem across `rows`, so that
/// `c_report` is the smallest constant under which every row of that theorem passes.
pub fn calibrate(rows: &mut [Row]) {
    let theorems: BTreeSet<String> =
        rows.iter().filter(|r| r.check.as_ref().is_some_and(|c| c.required_constant.is_some())).map(|r| r.theorem.clone()).collect();
    for theorem in theorems {
        let mut checks: Vec<BoundCheck> =
            rows.iter().filter(|r| r.theorem == theorem).filter_map(|r| r.check.clone()).collect();
        calibrate_constant(&mut checks);
        let mut it = checks.into_iter();
        for row in rows.iter_mut().filter(|r| r.theorem == theorem && r.check.is_some()) {
            row.check = it.next();
            row.refresh_from_check();
        }
    }
}

/// Run every instance, fanned out over `workers` threads, in table order.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<Row>, CliError> {
    if cfg.learners.is_empty() {
        return Err(CliError::Config("the learner list is empty".into()));
    }
    let insts = instances(cfg);
    let workers = opts.workers.max(1).min(insts.len().max(1));
    let results: Vec<Mutex<Option<Vec<Row>>>> = insts.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= insts.len() {
                    break;
                }
                let rows = run_instance(cfg, &insts[i], opts);
                *results[i].lock().expect("result slot") = Some(rows);
            });
        }
    });
    let mut rows: Vec<Row> = results.into_iter().flat_map(|m| m.into_inner().expect("result slot").unwrap_or_default()).collect();
    calibrate(&mut rows);
    Ok(rows)
}

fn write_records<W: std::io::Write>(out: W, rows: &[Row], header: bool) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// The table with its header, as written by [`write_csv`].
pub fn csv_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_records(&mut buf, rows, true).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("records are UTF-8")
}

pub fn write_csv(path: &Path, rows: &[Row], append: bool) -> Result<(), CliError> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    write_records(file, rows, !append).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Keys `(instance, learner, check)` already present in an existing table.
pub fn existing_keys(path: &Path) -> Result<BTreeSet<(String, String, String)>, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let header = reader.headers().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(CliError::Config(format!("{}: unexpected header; cannot resume", path.display())));
    }
    let mut keys = BTreeSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let theorem = rec.get(5).unwrap_or("");
        let check = theorem.split(' ').next().unwrap_or("").to_string();
        keys.insert((rec.get(0).unwrap_or("").to_string(), rec.get(1).unwrap_or("").to_string(), check));
    }
    Ok(keys)
}

/// Outcome of the `experiment` command.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub csv: PathBuf,
    pub rows: Vec<Row>,
    pub skipped: usize,
}

impl ExperimentOutcome {
    pub fn all_failed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.failed)
    }
}

/// Run the experiment and write (or, with `resume`, extend) its table.
pub fn run_to_csv(cfg: &ExperimentConfig, csv_path: &Path, resume: bool, mut opts: RunOptions) -> Result<ExperimentOutcome, CliError> {
    let resuming = resume && csv_path.exists();
    if resuming {
        opts.skip = existing_keys(csv_path)?;
    }
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    let skipped = opts.skip.len();
    let rows = run(cfg, &opts)?;
    write_csv(csv_path, &rows, resuming)?;
    Ok(ExperimentOutcome { csv: csv_path.to_path_buf(), rows, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, STREAM_EVAL), derive_seed(1, STREAM_COMPARATORS));
        assert_ne!(derive_seed(1, STREAM_EVAL), derive_seed(2, STREAM_EVAL));
        assert_eq!(derive_seed(5, STREAM_EVAL), derive_seed(5, STREAM_EVAL));
    }

    #[test]
    fn second_moment_bound_of_scaled_axes() {
        let feats = Features::new(2, 2, vec![2.0, 0.0, -2.0, 0.0]);
        assert!((second_moment_bound(&feats) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1e-300, -2.5, 1.0 / 3.0] {
            assert_eq!(fmt_opt(Some(v)).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn error_rows_keep_the_check_name() {
        let r = Row::error("i", "l", "sim_bound", None, "no model\nhere");
        assert_eq!(r.check_name(), "sim_bound");
        assert!(!r.theorem.contains('\n'));
    }
}
