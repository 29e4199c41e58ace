//! Command-line front end: each subcommand is one experiment pipeline.
//!
//! All subcommands share the same surface: `--config <path>` points at a
//! TOML experiment file, `--seed` optionally overrides the seed it declares,
//! and artifacts (report.json plus pipeline CSVs / model.bin) land in
//! `--out`. The subcommand must agree with the `pipeline` key in the config;
//! this catches a config file pasted into the wrong invocation.

use clap::{Args, Parser, Subcommand};
use fedadv::config::{ExperimentConfig, Pipeline};
use fedadv::report::run_experiment;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fedadv", version, about = "Adversarial training and federated simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed declared in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and per-pipeline artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model centrally with adversarial augmentation, then
    /// evaluate it.
    TrainCentral(Common),
    /// Run federated rounds over partitioned clients; sweeps sharing
    /// levels when the config lists them.
    TrainFed(Common),
    /// Evaluate a stored (or freshly trained) model under the configured
    /// attacks.
    AttackEval(Common),
    /// Build a client partition and report its size and label histograms
    /// without training.
    PartitionInspect(Common),
    /// Fit y = a ln(x) + b to the points listed in the config.
    FitRegression(Common),
}

impl Command {
    fn pipeline(&self) -> Pipeline {
        match self {
            Command::TrainCentral(_) => Pipeline::TrainCentral,
            Command::TrainFed(_) => Pipeline::TrainFed,
            Command::AttackEval(_) => Pipeline::AttackEval,
            Command::PartitionInspect(_) => Pipeline::PartitionInspect,
            Command::FitRegression(_) => Pipeline::FitRegression,
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::TrainCentral(c)
            | Command::TrainFed(c)
            | Command::AttackEval(c)
            | Command::PartitionInspect(c)
            | Command::FitRegression(c) => c,
        }
    }
}

fn run(cli: &Cli) -> fedadv::Result<()> {
    let common = cli.command.common();
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    let expected = cli.command.pipeline();
    if cfg.pipeline != expected {
        return Err(fedadv::Error::config(
            "pipeline",
            format!(
                "config declares `{}` but the `{}` subcommand was invoked",
                cfg.pipeline.name(),
                expected.name()
            ),
        ));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let report = run_experiment(&cfg, &common.out)?;
    println!(
        "{}: seed {} -> {}",
        report.pipeline,
        report.seed,
        common.out.join("report.json").display()
    );
    if let Some(acc) = report.natural_acc {
        println!("  natural accuracy {acc:.4}");
    }
    for (attack, acc) in &report.robust_acc {
        println!("  robust accuracy under {attack} {acc:.4}");
    }
    for fit in &report.regression {
        println!(
            "  fit[{}] y = {:.4} ln(x) + {:.4}  (R^2 {:.4}, {} excluded)",
            fit.x_domain, fit.a, fit.b, fit.r_squared, fit.excluded
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
