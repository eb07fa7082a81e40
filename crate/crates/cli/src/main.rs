//! Command-line harness for the graded-scale toolkit. Every subcommand is
//! deterministic given its configuration and seed: rerunning with the same
//! resolved config reproduces the output files byte for byte.

mod commands;
mod config;
mod report;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use config::{apply_config_file, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "scalc",
    about = "Graded-scale experiments: smoothing verifier, Fredholm catalog, smoothed Newton solver, tame probes and reporters",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// JSON config file; its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fourier truncation N.
    #[arg(long)]
    bandwidth: Option<usize>,
    /// Highest level of the norm scale.
    #[arg(long)]
    max_level: Option<usize>,
    /// Levels exercised by the experiment.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Nonlinearity strength of the quasilinear test map.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Decay parameter of the smoothed iteration.
    #[arg(long)]
    mu: Option<f64>,
    /// Schedule base in t_r = base^r.
    #[arg(long)]
    base: Option<f64>,
    /// Level-0 residual target.
    #[arg(long)]
    tol: Option<f64>,
    /// Uniform points of the smoothing-verifier t grid.
    #[arg(long)]
    t_count: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Sampled pairs for the injectivity probe.
    #[arg(long)]
    pairs: Option<usize>,
    /// Rotation shift (radians) of the reparametrisation demo.
    #[arg(long)]
    shift: Option<f64>,
    /// Largest bump concentration.
    #[arg(long)]
    n_max: Option<usize>,
    /// Coefficient decay exponent of the solve target.
    #[arg(long)]
    target_decay: Option<f64>,
    /// Level-0 norm of the solve target.
    #[arg(long)]
    target_norm0: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Divergence bound on the level-0 iterate norm.
    #[arg(long)]
    guard: Option<f64>,
    /// Singular-value cut relative to the largest one.
    #[arg(long)]
    rank_tol: Option<f64>,
}

impl CommonArgs {
    fn resolve(&self, command: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::defaults(command);
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { cfg.$field = v; })*
            };
        }
        take!(
            bandwidth,
            max_level,
            levels,
            seed,
            epsilon,
            mu,
            base,
            tol,
            t_count,
            trials,
            pairs,
            shift,
            n_max,
            target_decay,
            target_norm0,
            max_iter,
            guard,
            rank_tol
        );
        if let Some(path) = &self.config {
            apply_config_file(&mut cfg, path)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check both smoothing inequalities on random vectors.
    VerifySmoothing(CommonArgs),
    /// Kernel/cokernel/index of the operator catalog plus the index laws.
    Fredholm(CommonArgs),
    /// Run the smoothed Newton iteration on a seeded quasilinear instance.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Replace the smoothing step by the identity (plain Newton).
        #[arg(long)]
        plain: bool,
    },
    /// Estimate tame constants, inverse consistency and injectivity.
    TameProbe(CommonArgs),
    /// Non-uniform continuity and derivative-loss demos for the action.
    ReparamDemo(CommonArgs),
    /// Finite-dimensional reduction at a rank-deficient base point.
    Reduce(CommonArgs),
    /// Aggregate prior artifacts into summary.txt / summary.json.
    Report(CommonArgs),
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match &cli.command {
        Command::VerifySmoothing(common) => {
            let cfg = common.resolve("verify-smoothing")?;
            crate::write_config_sidecar(&cfg, &common.out_dir)?;
            commands::cmd_verify_smoothing(&cfg, &common.out_dir)
        }
        Command::Fredholm(common) => {
            let mut cfg = common.resolve("fredholm")?;
            if common.bandwidth.is_none() && common.config.is_none() {
                cfg.bandwidth = 32;
            }
            crate::write_config_sidecar(&cfg, &common.out_dir)?;
            commands::cmd_fredholm(&cfg, &common.out_dir)
        }
        Command::Solve { common, plain } => {
            let cfg = common.resolve(if *plain { "solve-plain" } else { "solve" })?;
            crate::write_config_sidecar(&cfg, &common.out_dir)?;
            commands::cmd_solve(&cfg, &common.out_dir, *plain)
        }
        Command::TameProbe(common) => {
            let mut cfg = common.resolve("tame-probe")?;
            if common.bandwidth.is_none() && common.config.is_none() {
                cfg.bandwidth = 32;
            }
            if common.trials.is_none() && common.config.is_none() {
                cfg.trials = 64;
            }
            if common.pairs.is_none() && common.config.is_none() {
                cfg.pairs = 64;
            }
            crate::write_config_sidecar(&cfg, &common.out_dir)?;
            commands::cmd_tame_probe(&cfg, &common.out_dir)
        }
        Command::ReparamDemo(common) => {
            let mut cfg = common.resolve("reparam-demo")?;
            if common.bandwidth.is_none() && common.config.is_none() {
                cfg.bandwidth = 512;
            }
            crate::write_config_sidecar(&cfg, &common.out_dir)?;
            commands::cmd_reparam_demo(&cfg, &common.out_dir)
        }
        Command::Reduce(common) => {
            let mut cfg = common.resolve("reduce")?;
            if common.bandwidth.is_none() && common.config.is_none() {
                cfg.bandwidth = 32;
            }
            if common.trials.is_none() && common.config.is_none() {
                cfg.trials = 20;
            }
            crate::write_config_sidecar(&cfg, &common.out_dir)?;
            commands::cmd_reduce(&cfg, &common.out_dir)
        }
        Command::Report(common) => report::cmd_report(&common.out_dir),
    }
}

fn write_config_sidecar(cfg: &ExperimentConfig, out_dir: &std::path::Path) -> Result<()> {
    let name = format!("{}_config.json", cfg.command.replace('-', "_"));
    let text = serde_json::to_string_pretty(cfg)?;
    config::write_output(out_dir, &name, &format!("{text}\n"))?;
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
