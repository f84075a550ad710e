//! Subcommand implementations. Each returns the process exit code.

use crate::config::ExperimentConfig;
use crate::distortion;
use crate::error::{CliError, EXIT_CHECK_FAILED, EXIT_NUMERIC, EXIT_OK};
use crate::experiment::{self, RunOptions};
use crate::registry;
use crate::toy;
use crate::verify::{self, VerifyOptions};
use serde::Serialize;
use simlearn::transfer::{evaluate_predictions, ErrorReport};
use std::path::{Path, PathBuf};

pub const PREDICTOR_EXTENSION: &str = "predictor";
pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const VERIFY_CSV: &str = "verify.csv";
pub const VERIFY_SUMMARY: &str = "summary.json";

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn config_dir(config: &Path) -> Option<PathBuf> {
    config.parent().map(|p| p.to_path_buf())
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    source: String,
    n_train: usize,
    n_eval: usize,
    dim: usize,
    label_space: String,
    lambda: f64,
}

#[derive(Debug, Serialize)]
struct LearnerReport {
    learner: String,
    kind: String,
    predictor_file: String,
    report: ErrorReport,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    config: String,
    seed: u64,
    dataset: DatasetSummary,
    learners: Vec<LearnerReport>,
}

/// Train every configured learner, writing one predictor file per learner
/// and a JSON report of held-out errors.
pub fn train(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<i32, CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if cfg.learners.is_empty() {
        return Err(CliError::Config("the learner list is empty".into()));
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    let out_dir = out.map(Path::to_path_buf).or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    let inst = experiment::instances(&cfg).remove(0);
    let data = experiment::build_instance(&cfg, &inst, config_dir(config).as_deref())?;
    let pairs = registry::parse_pairs(&cfg.evaluation.pairs)?;
    let activation = cfg.model_activation()?;
    let mut learners = Vec::new();
    for learner in &cfg.learners {
        let predictor = experiment::train(learner, &data.train, data.lambda, &activation, inst.seed)?;
        let preds = experiment::finite_predictions(&predictor, &data.eval.features)?;
        let report = evaluate_predictions(&preds, &data.eval, &pairs).map_err(|e| CliError::Numeric(e.to_string()))?;
        let file = format!("{}.{PREDICTOR_EXTENSION}", learner.label());
        write_file(&out_dir.join(&file), &predictor.to_text())?;
        println!("{}: err2={:.6e} err1={:.6e} -> {}", learner.label(), report.err2, report.err1, out_dir.join(&file).display());
        learners.push(LearnerReport { learner: learner.label(), kind: learner.kind().to_string(), predictor_file: file, report });
    }
    let summary = TrainReport {
        config: cfg.name.clone(),
        seed: inst.seed,
        dataset: DatasetSummary {
            source: cfg.data.dataset.clone().unwrap_or_else(|| "generated".to_string()),
            n_train: data.train.len(),
            n_eval: data.eval.len(),
            dim: data.train.dim(),
            label_space: data.train.meta.label_space.to_string(),
            lambda: data.lambda,
        },
        learners,
    };
    let json = serde_json::to_string_pretty(&summary).expect("report serializes");
    write_file(&out_dir.join(REPORT_FILE), &(json + "\n"))?;
    Ok(EXIT_OK)
}

/// Run the sandwich suites and print the table; `out` receives the JSON report.
pub fn distortion_check(grid_density: usize, pair_tags: &[String], out: Option<&Path>) -> Result<i32, CliError> {
    let pairs = if pair_tags.is_empty() {
        registry::parse_pairs(&registry::SANDWICH_TAGS)?
    } else {
        registry::parse_pairs(pair_tags)?
    };
    let report = distortion::run(grid_density, &pairs);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", report.render());
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(path, &(json + "\n"))?;
    }
    Ok(if report.pass() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Where the experiment table goes: `--out` naming a `.csv` file, a
/// directory given by `--out` or `output.dir`, or the working directory.
pub fn results_path(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    let name = cfg.output.csv.clone().unwrap_or_else(|| RESULTS_FILE.to_string());
    match out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => p.to_path_buf(),
        Some(p) => p.join(name),
        None => cfg.output.dir.as_ref().map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")).join(name),
    }
}

pub struct ExperimentArgs<'a> {
    pub config: &'a Path,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub resume: bool,
    pub workers: usize,
    pub timings: bool,
}

pub fn experiment(args: ExperimentArgs<'_>) -> Result<i32, CliError> {
    let mut cfg = ExperimentConfig::load(args.config)?;
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    let path = results_path(&cfg, args.out);
    let opts = RunOptions { workers: args.workers, timings: args.timings, base_dir: config_dir(args.config), ..Default::default() };
    let outcome = experiment::run_to_csv(&cfg, &path, args.resume, opts)?;
    let failed = outcome.rows.iter().filter(|r| r.failed).count();
    println!(
        "{} rows written to {} ({} failed, {} already present)",
        outcome.rows.len(),
        outcome.csv.display(),
        failed,
        outcome.skipped
    );
    for r in outcome.rows.iter().filter(|r| r.failed) {
        eprintln!("row failed: {} {} {}", r.instance, r.learner, r.theorem);
    }
    Ok(if outcome.all_failed() { EXIT_NUMERIC } else { EXIT_OK })
}

pub struct VerifyArgs<'a> {
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub only: Option<Vec<u32>>,
    pub toy_path: Option<&'a Path>,
    pub json: bool,
}

pub fn verify(args: VerifyArgs<'_>) -> Result<i32, CliError> {
    if let Some(only) = &args.only {
        let known = verify::criterion_ids();
        if let Some(bad) = only.iter().find(|id| !known.contains(id)) {
            return Err(CliError::Config(format!("unknown criterion {bad}; known: {known:?}")));
        }
    }
    let opts = VerifyOptions {
        seed: args.seed.unwrap_or(verify::DEFAULT_SEED),
        only: args.only.clone(),
        toy_override: args.toy_path.map(|p| p.display().to_string()),
    };
    let json = args.json;
    let summary = verify::run(&opts, |c| {
        if !json {
            println!("{}", c.line());
            for note in &c.notes {
                println!("    {note}");
            }
        }
    });
    if json {
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    } else {
        println!("verify {}", if summary.pass { "PASS" } else { "FAIL" });
    }
    if let Some(dir) = args.out {
        write_file(&dir.join(VERIFY_CSV), &summary.csv())?;
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_file(&dir.join(VERIFY_SUMMARY), &(text + "\n"))?;
    }
    Ok(if summary.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Write the training set of a configuration, or the toy dataset.
pub fn gen_data(config: Option<&Path>, toy_dataset: bool, seed: Option<u64>, out: &Path) -> Result<i32, CliError> {
    let text = match (config, toy_dataset) {
        (_, true) => toy::generate_toy().to_canonical_string(),
        (Some(path), false) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.data.dataset.is_some() {
                return Err(CliError::Config("gen-data needs a generated [marginal]/[model] configuration".into()));
            }
            experiment::generate_training_data(&cfg, seed)?.to_canonical_string()
        }
        (None, false) => return Err(CliError::Config("gen-data needs --config or --toy".into())),
    };
    write_file(out, &text)?;
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}
