use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use biamat::harness::config::ExperimentConfig;
use biamat::harness::metrics::emit_plots;
use biamat::harness::run::{
    run_evaluate, run_robust_dataset, run_train, verify_theory, write_reports,
};
use biamat::Error;

#[derive(Parser)]
#[command(
    name = "biamat",
    version,
    about = "BiaMAT training, evaluation and theory checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo checks of the Gaussian-model results; one JSON report per check.
    VerifyTheory {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train per the config; writes metrics.jsonl, best.ckpt, last.ckpt and config.cfg.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides both the training and the initialization seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean, PGD and CW accuracy of a checkpoint on the config's test split, as one JSON line.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a robust dataset from the config's primary split.
    RobustDataset {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        step_size: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-series CSV files from a metrics stream.
    EmitPlots {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(Error),
    Runtime(Error),
    Unverified,
}

fn config(path: Option<&PathBuf>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(Failure::Usage),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    use Failure::Runtime;
    match cmd {
        Command::VerifyTheory { config: c, out } => {
            let cfg = config(c.as_ref())?;
            let reports = verify_theory(&cfg.theory).map_err(Runtime)?;
            write_reports(&reports, &out).map_err(Runtime)?;
            for (stem, r) in &reports {
                print!("{stem}: {}", r.summary());
            }
            if reports.iter().any(|(_, r)| !r.pass) {
                return Err(Failure::Unverified);
            }
        }
        Command::Train {
            config: c,
            seed,
            out,
        } => {
            let mut cfg = config(c.as_ref())?;
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.model.seed = s;
            }
            let a = run_train(&cfg, &out).map_err(Runtime)?;
            let best = a.outcome.best.meta;
            println!(
                "best epoch {} (held-out PGD {:.4}) -> {}",
                best.epoch,
                best.robust_accuracy,
                a.best.display()
            );
        }
        Command::Evaluate { ckpt, config: c } => {
            let cfg = config(c.as_ref())?;
            let s = run_evaluate(&ckpt, &cfg).map_err(Runtime)?;
            println!(
                "{}",
                serde_json::to_string(&s).map_err(|e| Runtime(e.into()))?
            );
        }
        Command::RobustDataset {
            ckpt,
            config: c,
            out,
            steps,
            step_size,
            seed,
        } => {
            let cfg = config(c.as_ref())?;
            let (d, x, y) =
                run_robust_dataset(&ckpt, &cfg, steps, step_size, seed, &out).map_err(Runtime)?;
            println!("{} samples -> {}, {}", d.len(), x.display(), y.display());
        }
        Command::EmitPlots { metrics, out } => {
            for p in emit_plots(&metrics, &out).map_err(Runtime)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Unverified) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
    }
}
