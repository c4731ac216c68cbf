//! Subcommand dispatcher: binds config parsing, experiment drivers, and
//! artifact serialization into one entry point shared by the CLI and the
//! Python bindings.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cloud::WeightedPointCloud;
use crate::config::{self, SimulationConfig};
use crate::dae;
use crate::dynamics::ExecMode;
use crate::error::{CoreError, Result};
use crate::experiments::{self, FlowInit};
use crate::io;
use crate::meanfield::{self, FlowState};
use crate::particle::{self, SystemState};
use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Meanfield,
    Consistency,
    Stability,
    Convergence,
    Invariants,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Meanfield => "meanfield",
            Subcommand::Consistency => "consistency",
            Subcommand::Stability => "stability",
            Subcommand::Convergence => "convergence",
            Subcommand::Invariants => "invariants",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub strict_sequential: bool,
    /// Append DAE residual columns to the trajectory CSV (simulate only).
    pub dae_residuals: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub strict_sequential: bool,
    pub wall_time_ms: u128,
    pub artifacts: Vec<ArtifactEntry>,
}

fn sha256_hex(data: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        io::write_text(&self.dir.join(name), content)?;
        self.entries.push(ArtifactEntry {
            name: name.to_string(),
            bytes: content.len(),
            sha256: sha256_hex(content.as_bytes()),
        });
        Ok(())
    }
}

/// Parses, validates, runs the subcommand, writes artifacts plus
/// `manifest.json`, and returns the manifest.
pub fn dispatch(config_text: &str, sub: Subcommand, opts: &RunOptions) -> Result<Manifest> {
    let start = Instant::now();
    let mut config = config::parse_config(config_text)?;
    if let Some(seed) = opts.seed_override {
        config.seed = seed;
    }
    let exec = if opts.strict_sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Chunked
    };
    let config_hash = sha256_hex(config::canonical_toml(&config).as_bytes());

    let mut writer = ArtifactWriter::new(&opts.out_dir)?;
    run_subcommand(&config, sub, exec, opts, &mut writer)?;

    let manifest = Manifest {
        subcommand: sub.name().to_string(),
        config_hash,
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        strict_sequential: opts.strict_sequential,
        wall_time_ms: start.elapsed().as_millis(),
        artifacts: writer.entries.clone(),
    };
    io::write_text(
        &opts.out_dir.join("manifest.json"),
        &io::to_json_pretty(&manifest),
    )?;
    Ok(manifest)
}

fn uniform_cloud_or_error(cloud: &WeightedPointCloud, what: &str) -> Result<()> {
    if cloud.has_uniform_weights() {
        Ok(())
    } else {
        Err(CoreError::UnsupportedWeights {
            reason: format!("{what} requires uniform weights"),
        })
    }
}

fn run_subcommand(
    config: &SimulationConfig,
    sub: Subcommand,
    exec: ExecMode,
    opts: &RunOptions,
    writer: &mut ArtifactWriter,
) -> Result<()> {
    let scenario = config.build_scenario(exec)?;
    match sub {
        Subcommand::Simulate => {
            let cloud = config.build_initial_cloud()?;
            uniform_cloud_or_error(&cloud, "the particle simulation")?;
            let init = SystemState::new(
                scenario.y0.clone(),
                scenario.v0.clone(),
                cloud.points().to_vec(),
            );
            let traj = particle::integrate(&scenario.model, &scenario.field, &init, &scenario.opts)?;
            let dae_reports = if opts.dae_residuals || config.output.dae_residuals {
                Some(dae::dae_residuals(
                    &scenario.model,
                    &scenario.field,
                    &traj,
                    exec,
                )?)
            } else {
                None
            };
            writer.write(
                "trajectory.csv",
                &io::trajectory_csv(&traj, config.output.write_particles, dae_reports.as_deref()),
            )?;
            writer.write("summary.json", &io::to_json_pretty(&io::trajectory_summary(&traj)))?;
        }
        Subcommand::Meanfield => {
            let cloud = config.build_initial_cloud()?;
            let fs = FlowState::new(scenario.y0.clone(), scenario.v0.clone(), cloud);
            let traj = meanfield::integrate_flow(&scenario.model, &scenario.field, &fs, &scenario.opts)?;
            writer.write("flow.csv", &io::trajectory_csv(&traj, false, None))?;
            writer.write("nodes.csv", &io::nodes_csv(&traj))?;
            writer.write("summary.json", &io::to_json_pretty(&io::trajectory_summary(&traj)))?;
        }
        Subcommand::Consistency => {
            let cloud = config.build_initial_cloud()?;
            let report =
                experiments::run_consistency(&scenario, &cloud, &config.consistency_params())?;
            writer.write("weak_form.csv", &io::weak_form_csv(&report.weak_form))?;
            writer.write("consistency.json", &io::to_json_pretty(&report))?;
        }
        Subcommand::Stability => {
            let spec = config.experiment.stability.clone().unwrap_or(
                config::StabilitySpec {
                    delta_y: None,
                    delta_v: None,
                    cloud_shift: None,
                    second: None,
                    n_eval_times: 20,
                    envelope_tol: 0.05,
                    fit_floor: 1e-13,
                },
            );
            let cloud = config.build_initial_cloud()?;
            let first = FlowInit {
                y: scenario.y0.clone(),
                v: scenario.v0.clone(),
                cloud: cloud.clone(),
            };
            let add = |base: &DVector<f64>, delta: &Option<Vec<f64>>| -> DVector<f64> {
                match delta {
                    Some(d) => base + DVector::from_row_slice(d),
                    None => base.clone(),
                }
            };
            // Second initial condition: explicit values win, then the
            // delta/shift fields, then the first condition unchanged.
            let explicit = spec.second.clone().unwrap_or_default();
            let second_cloud = if let Some(particles) = &explicit.particles {
                let points = particles.iter().map(|p| DVector::from_row_slice(p)).collect();
                WeightedPointCloud::empirical(points)?
            } else if let Some(cloud_spec) = &explicit.cloud {
                config.build_cloud(cloud_spec, "stability/second-sample")?
            } else {
                match &spec.cloud_shift {
                    Some(shift) => cloud.translate(&DVector::from_row_slice(shift)),
                    None => cloud,
                }
            };
            let second = FlowInit {
                y: explicit
                    .y
                    .map(|v| DVector::from_row_slice(&v))
                    .unwrap_or_else(|| add(&scenario.y0, &spec.delta_y)),
                v: explicit
                    .v
                    .map(|v| DVector::from_row_slice(&v))
                    .unwrap_or_else(|| add(&scenario.v0, &spec.delta_v)),
                cloud: second_cloud,
            };
            let report =
                experiments::run_stability(&scenario, &first, &second, &config.stability_params())?;
            writer.write("stability.csv", &io::stability_csv(&report))?;
            writer.write("stability.json", &io::to_json_pretty(&report))?;
        }
        Subcommand::Convergence => {
            let params = config.convergence_params()?;
            let report = experiments::run_convergence(&scenario, &params)?;
            writer.write("convergence.csv", &io::convergence_csv(&report))?;
            writer.write("convergence.json", &io::to_json_pretty(&report))?;
        }
        Subcommand::Invariants => {
            let cloud = config.build_initial_cloud()?;
            uniform_cloud_or_error(&cloud, "the invariant suite")?;
            let (order_dt, tol) = config.invariant_tolerances();
            let report = experiments::run_invariants(
                &scenario,
                cloud.points().to_vec(),
                order_dt,
                &tol,
            )?;
            writer.write("invariants.json", &io::to_json_pretty(&report))?;
        }
    }
    Ok(())
}

/// The `w1` subcommand: reads two cloud CSVs and evaluates the distance.
pub fn run_w1(
    path_a: &Path,
    path_b: &Path,
    method: &str,
    out_dir: Option<&Path>,
) -> Result<serde_json::Value> {
    let a = io::cloud_from_csv(&std::fs::read_to_string(path_a)?)?;
    let b = io::cloud_from_csv(&std::fs::read_to_string(path_b)?)?;
    let result = match method {
        "sort1d" => crate::transport::w1_sorted_1d(&a, &b)?,
        "assignment" => crate::transport::w1_assignment(&a, &b)?,
        "dual" => {
            let dim = a.dim();
            let (lo, hi) = a
                .points()
                .iter()
                .chain(b.points().iter())
                .flat_map(|p| p.iter().copied())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    (lo.min(c), hi.max(c))
                });
            let probes = crate::transport::Probe::default_family(dim, lo, hi.max(lo + 1.0), 16, 0);
            crate::transport::w1_dual_lower_bound(&a, &b, &probes)?
        }
        "auto" => crate::transport::w1_auto(&a, &b)?,
        other => {
            return Err(CoreError::Other(format!(
                "unknown w1 method `{other}` (expected auto, sort1d, assignment, dual)"
            )))
        }
    };
    let method_name = match result.method {
        crate::transport::W1Method::Sort1d => "sort1d",
        crate::transport::W1Method::Assignment => "assignment",
        crate::transport::W1Method::DualLowerBound => "dual_lower_bound",
    };
    let json = serde_json::json!({
        "value": result.value,
        "method": method_name,
        "matching": result.matching,
        "size_a": a.len(),
        "size_b": b.len(),
    });
    if let Some(dir) = out_dir {
        io::write_text(&dir.join("w1.json"), &io::to_json_pretty(&json))?;
    }
    Ok(json)
}
