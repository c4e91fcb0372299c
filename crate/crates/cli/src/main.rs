//! `unlearn`: train a target model, fit membership-inference attacks, redact
//! records from the target and report on the results. Commands share state
//! only through files in the output directory.

mod commands;
mod config;
mod points;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use unlearn::jobs::default_workers;

use commands::{Session, Status};
use config::ExperimentConfig;
use points::PointSpec;

#[derive(Parser)]
#[command(name = "unlearn", version, about = "Membership-inference-guided record redaction")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Parallel job limit; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory, overriding `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target model.
    Train,
    /// Train the shadow model and its attack.
    Attack {
        /// Also train the evaluation ensemble.
        #[arg(long)]
        ensemble: bool,
    },
    /// Redact points from the target, one after another.
    Redact {
        /// Comma-separated record ids, or `top:N`.
        #[arg(long, allow_hyphen_values = true)]
        points: PointSpec,
        /// Recovery epochs after the queue.
        #[arg(long, default_value_t = 0)]
        recover_epochs: usize,
    },
    /// Compare target, redacted and retrained models under the ensemble.
    Evaluate {
        #[arg(long, default_value = "top:10")]
        points: PointSpec,
    },
    /// Sweep the number of correctly labelled records per poison batch.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0,1,5,10")]
        k: Vec<usize>,
        /// Initially-positive points drawn per class.
        #[arg(long, default_value_t = 10)]
        per_class: usize,
    },
    /// Time full retraining against redaction.
    Timing {
        #[arg(long, default_value = "top:3")]
        points: PointSpec,
    },
    /// Print the default config as TOML.
    DefaultConfig,
}

fn run(cli: Cli) -> Result<Status> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", ExperimentConfig::default().to_toml()?);
        return Ok(Status::Ok);
    }
    let Some(path) = cli.config else {
        anyhow::bail!("--config <file> is required");
    };
    let (cfg, base) = ExperimentConfig::load(&path)?;
    let session = Session::new(cfg, base, cli.out, cli.workers.unwrap_or_else(default_workers));
    match cli.command {
        Command::Train => commands::cmd_train(&session),
        Command::Attack { ensemble } => commands::cmd_attack(&session, ensemble),
        Command::Redact { points, recover_epochs } => commands::cmd_redact(&session, &points, recover_epochs),
        Command::Evaluate { points } => commands::cmd_evaluate(&session, &points),
        Command::Sweep { k, per_class } => commands::cmd_sweep(&session, &k, per_class),
        Command::Timing { points } => commands::cmd_timing(&session, &points),
        Command::DefaultConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::RedactionFailures(n)) => {
            eprintln!("{n} redaction(s) did not reach the threshold");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
