use clap::{Parser, Subcommand};
use simlearn_cli::commands::{self, ExperimentArgs, VerifyArgs};
use simlearn_cli::distortion::DEFAULT_GRID_DENSITY;
use std::path::PathBuf;
use std::process::ExitCode;

/// Agnostic learning of single-index models: training, experiments and verification.
///
/// Exit codes: 0 success, 1 a check or suite failed, 2 configuration or I/O
/// error, 3 numeric failure.
#[derive(Parser)]
#[command(name = "simlearn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured learners and write predictor files and a report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replace the configured seeds by this one.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the pointwise sandwich inequalities on an interior grid.
    DistortionCheck {
        #[arg(long, default_value_t = DEFAULT_GRID_DENSITY)]
        grid_density: usize,
        /// Activation tag for the bi-Lipschitz sandwich; repeatable.
        #[arg(long = "pair")]
        pairs: Vec<String>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment configuration into a CSV table.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// A `.csv` file or an output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep existing rows and append only the missing ones.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Fill the runtime_ms column, which makes the table non-reproducible.
        #[arg(long)]
        timings: bool,
    },
    /// Run the acceptance suite.
    Verify {
        /// Base seed of all Monte-Carlo draws.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for verify.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated criterion ids; 0 is the dataset integrity check.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u32>>,
        /// Dataset file checked instead of the bundled toy dataset.
        #[arg(long)]
        toy_path: Option<PathBuf>,
        /// Print the summary as JSON instead of one line per criterion.
        #[arg(long)]
        json: bool,
    },
    /// Generate a dataset from a configuration, or the bundled toy dataset.
    GenData {
        #[arg(long, conflicts_with = "toy")]
        config: Option<PathBuf>,
        #[arg(long)]
        toy: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { simlearn_cli::error::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Train { config, seed, out } => commands::train(&config, seed, out.as_deref()),
        Command::DistortionCheck { grid_density, pairs, out } => commands::distortion_check(grid_density, &pairs, out.as_deref()),
        Command::Experiment { config, seed, out, resume, workers, timings } => commands::experiment(ExperimentArgs {
            config: &config,
            seed,
            out: out.as_deref(),
            resume,
            workers,
            timings,
        }),
        Command::Verify { seed, out, only, toy_path, json } => commands::verify(VerifyArgs {
            seed,
            out: out.as_deref(),
            only,
            toy_path: toy_path.as_deref(),
            json,
        }),
        Command::GenData { config, toy, seed, out } => commands::gen_data(config.as_deref(), toy, seed, &out),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
