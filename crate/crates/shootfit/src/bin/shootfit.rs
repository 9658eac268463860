//! Thin command-line front end over the library's experiment pipeline.
//!
//! Exit codes: 0 on success, 2 when training finished without meeting
//! the constraint tolerance, 1 on hard errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shootfit::cli::{cmd_eval, cmd_gen_spiral, cmd_sweep, cmd_train, ExperimentConfig, SweepGrid};
use shootfit::Result;

#[derive(Parser)]
#[command(name = "shootfit", about = "Fit neural ODEs to time series by shooting methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset CSV (spiral samples or the tanks benchmark).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the noisy spiral dataset.
    GenSpiral {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model per the experiment config.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint by forward integration.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Override the integration span: --span T0 T1.
        #[arg(long, num_args = 2, value_names = ["T0", "T1"])]
        span: Option<Vec<f64>>,
    },
    /// Grid sweep over regularization weight and the two input lags.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        reg_weight: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "79")]
        tau_d: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "164")]
        tau_i: Vec<f64>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(dataset) = &common.dataset {
        config.dataset = Some(dataset.clone());
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenSpiral { common } => {
            let path = cmd_gen_spiral(&load_config(&common)?)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { common } => {
            let summary = cmd_train(&load_config(&common)?)?;
            println!(
                "cost {:.6e}  sse {:.6e}  max|h| {:.3e}  outer {}  {:.1}s  -> {}",
                summary.cost,
                summary.data_sse,
                summary.max_defect,
                summary.outer_iters,
                summary.wall_seconds,
                summary.checkpoint.display()
            );
            if summary.converged {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("training did not reach the constraint tolerance");
                Ok(ExitCode::from(2))
            }
        }
        Command::Eval {
            common,
            checkpoint,
            span,
        } => {
            let config = load_config(&common)?;
            let span = span.map(|s| (s[0], s[1]));
            cmd_eval(&config, &checkpoint, span)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            common,
            reg_weight,
            tau_d,
            tau_i,
        } => {
            let config = load_config(&common)?;
            let grid = SweepGrid {
                reg_weight,
                tau_d,
                tau_i,
            };
            let (rows, best) = cmd_sweep(&config, &grid)?;
            let b = &rows[best];
            println!(
                "best: reg_weight {}  tau_d {}  tau_i {}  validation rmse {:?}",
                b.reg_weight, b.tau_d, b.tau_i, b.validation_rmse
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("SHOOTFIT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
