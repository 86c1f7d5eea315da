use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cascade_pipeline::commands::*;
use cascade_pipeline::{exit_code, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cascade", version, about = "Causal models of line-failure cascades")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one observational dataset per initiating line.
    GenData,
    /// Learn causal models and train the influence-graph baseline.
    Learn,
    /// Enumerate ground-truth cascades at every configured load scale.
    GroundTruth,
    /// Predict the next failures after a given failure sequence.
    Predict {
        /// Failed lines so far, as 1-based branch numbers in failure order.
        #[arg(long, value_delimiter = ',', required = true)]
        failed: Vec<usize>,
        /// Prediction budget in percent of lines.
        #[arg(long, default_value_t = 25.0)]
        kappa: f64,
    },
    /// Identify critical cascades with both predictors.
    Cci,
    /// Precision, regret and candidate counts against ground truth.
    Evaluate,
    /// Enumerate every failure order up to the horizon.
    WorstCase,
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::GenData => {
            let index = cmd_gen_data(&cfg)?;
            println!(
                "wrote {} datasets to {}",
                index.lines.len() - index.failed.len(),
                cfg.out_dir.join("datasets").display()
            );
            for (label, reason) in &index.failed {
                eprintln!("line {label}: {reason}");
            }
        }
        Command::Learn => {
            let s = cmd_learn(&cfg)?;
            println!(
                "learned {} causal models; influence graph from {} cascades",
                s.models, s.ig_sequences
            );
        }
        Command::GroundTruth => {
            for s in cmd_ground_truth(&cfg)? {
                println!("load {}: {} sequences", s.load_scale, s.sequences);
            }
        }
        Command::Predict { failed, kappa } => {
            let out = cmd_predict(&cfg, failed, *kappa)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Cci => {
            for o in cmd_cci(&cfg)? {
                let best = o.top.first().map(|s| s.cost).unwrap_or(0.0);
                println!(
                    "{} kappa {}: {} candidates, costliest {best:.4}",
                    o.predictor, o.kappa, o.candidates
                );
            }
        }
        Command::Evaluate => {
            let report = cmd_evaluate(&cfg)?;
            print!("{}", report.precision_csv());
            print!("{}", report.regret_csv());
        }
        Command::WorstCase => {
            let out = cmd_worst_case(&cfg)?;
            println!("{} sequences up to {} stages", out.count, out.horizon);
        }
    }
    Ok(())
}

/// Help and version requests exit 0; real usage errors are validation errors.
fn usage_exit_code(e: &clap::Error) -> u8 {
    if e.use_stderr() {
        1
    } else {
        0
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(usage_exit_code(&e));
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
