//! The `epiplan` command line: configuration, artifacts and subcommands.

pub mod commands;
pub mod config;
pub mod files;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Result;
pub use commands::{run_command, OpenLoopEntry, Outputs, SimulationSummary, SweepFile, VoiFile};
pub use config::{RunConfig, SolveMode};

#[derive(Debug, Parser)]
#[command(
    name = "epiplan",
    version,
    about = "Vaccination and surveillance planning on a stochastic TSIR model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `solver.mode`.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<SolveMode>,
    /// Overrides the solver horizon (and the rollout horizon).
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Overrides `simulate.reps`.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// No progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit TSIR parameters to a case series; writes params.json.
    Calibrate,
    /// Build and check the planning model; writes model.json.
    Build,
    /// Solve the model; writes policy.json.
    Solve,
    /// Roll out the policy and open-loop baselines; writes rollouts.csv and summary files.
    Simulate,
    /// Evaluate every single-campaign timing; writes sweep.csv and sweep.json.
    Sweep,
    /// Value of surveys; writes voi.json.
    Voi,
    /// Summarize the artifacts in the output directory; writes report.txt.
    Report,
}

/// Loads the config and applies flag overrides.
pub fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let path = args
        .config
        .clone()
        .ok_or_else(|| crate::Error::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(mode) = args.mode {
        cfg.solver.mode = mode;
    }
    if let Some(h) = args.horizon {
        cfg.solver.horizon = h;
        cfg.simulate.horizon = Some(h);
    }
    if let Some(r) = args.reps {
        cfg.simulate.reps = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line and returns the process exit code. Failures
/// are reported on stderr as `{"category": ..., "message": ...}`.
pub fn main_with(cli: Cli) -> i32 {
    let result =
        load_config(&cli.common).and_then(|cfg| run_command(cli.command, &cfg, cli.common.quiet));
    match result {
        Ok(outputs) => {
            if !cli.common.quiet {
                for p in &outputs.written {
                    println!("{}", p.display());
                }
            }
            0
        }
        Err(e) => {
            let category = e.category();
            let report =
                serde_json::json!({ "category": category.as_str(), "message": e.to_string() });
            eprintln!("{report}");
            category.exit_code()
        }
    }
}
