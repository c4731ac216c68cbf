//! `tether`: simulate coupled particle systems, solve the mean-field
//! characteristic flow, and run the consistency / stability / convergence /
//! invariants experiments from a TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tether_core::harness::{self, RunOptions};

#[derive(Parser)]
#[command(name = "tether", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to the TOML simulation config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Strictly sequential reductions for bitwise reproducibility.
    #[arg(long)]
    strict_sequential: bool,
    /// Parse and validate the config, then exit without running.
    #[arg(long)]
    validate_only: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the N-particle system.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Append recovered-multiplier residual columns to the CSV.
        #[arg(long)]
        dae_residuals: bool,
    },
    /// Integrate the mean-field characteristic flow.
    Meanfield {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Particle-vs-flow trajectory comparison and weak-form residuals.
    Consistency {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Two perturbed runs against the fitted exponential envelope.
    Stability {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Mean-field convergence study over a sample-size schedule.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Conservation, constraint-drift, DAE-residual, and ellipticity checks.
    Invariants {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monge-Kantorovich distance between two cloud CSV files.
    W1 {
        cloud_a: PathBuf,
        cloud_b: PathBuf,
        /// auto | sort1d | assignment | dual
        #[arg(long, default_value = "auto")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(err: tether_core::CoreError) -> ExitCode {
    eprintln!("{}", serde_json::to_string_pretty(&err.to_json()).unwrap());
    ExitCode::FAILURE
}

fn run_dispatch(common: &CommonArgs, sub: harness::Subcommand, dae_residuals: bool) -> ExitCode {
    let text = match std::fs::read_to_string(&common.config) {
        Ok(text) => text,
        Err(e) => return fail(e.into()),
    };
    let config = match tether_core::config::parse_config(&text) {
        Ok(config) => config,
        Err(e) => return fail(e),
    };
    if common.validate_only {
        println!("config ok");
        return ExitCode::SUCCESS;
    }
    let out_dir = common
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions {
        out_dir,
        seed_override: common.seed,
        strict_sequential: common.strict_sequential,
        dae_residuals,
    };
    match harness::dispatch(&text, sub, &opts) {
        Ok(manifest) => {
            println!("{}", serde_json::to_string_pretty(&manifest).unwrap());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate {
            common,
            dae_residuals,
        } => run_dispatch(common, harness::Subcommand::Simulate, *dae_residuals),
        Command::Meanfield { common } => run_dispatch(common, harness::Subcommand::Meanfield, false),
        Command::Consistency { common } => {
            run_dispatch(common, harness::Subcommand::Consistency, false)
        }
        Command::Stability { common } => run_dispatch(common, harness::Subcommand::Stability, false),
        Command::Convergence { common } => {
            run_dispatch(common, harness::Subcommand::Convergence, false)
        }
        Command::Invariants { common } => {
            run_dispatch(common, harness::Subcommand::Invariants, false)
        }
        Command::W1 {
            cloud_a,
            cloud_b,
            method,
            out,
        } => match harness::run_w1(cloud_a, cloud_b, method, out.as_deref()) {
            Ok(json) => {
                println!("{}", serde_json::to_string_pretty(&json).unwrap());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
