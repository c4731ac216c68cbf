//! Simulation configuration: a TOML file with nested tables selecting the
//! constraint model, force field, initial data, integrator, and
//! experiment-specific blocks.
//!
//! Parsing and validation are separate passes: `parse_config` surfaces TOML
//! syntax errors with positions, then semantic validation collects every
//! violation (not just the first) with its field path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cloud::{Distribution, WeightedPointCloud};
use crate::constraint::{ConstraintModel, Coupling};
use crate::dynamics::{ExecMode, IntegrateOptions, Scheme};
use crate::error::{CoreError, Result};
use crate::experiments::{
    ConsistencyParams, ConvergenceParams, InvariantTolerances, Scenario, StabilityParams,
};
use crate::force::{ForceField, PotentialKind};
use crate::meanfield::BumpFn;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    pub field: FieldSpec,
    pub initial: InitialSpec,
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// One of `linear`, `shift`, `warped`.
    pub name: String,
    pub dim_x: usize,
    pub dim_y: usize,
    /// Coupling matrix for the linear model `g = X - B y`; identity when
    /// omitted (requires `dim_x == dim_y`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    /// Warp amplitude, `|eps| < 1`; warped model only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_fd: Option<f64>,
    /// Route `Omega` through finite differences of `Phi` instead of the
    /// analytic second derivatives.
    #[serde(default)]
    pub finite_difference_omega: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// `linear` or `tanh`.
    pub kind: String,
    /// Matrix applied to `y`; identity when omitted (requires square dims).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    /// `harmonic` or `soft`; sets both potentials unless overridden.
    pub name: String,
    pub mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    /// Explicit particle positions; exactly one of `particles` and `cloud`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<Vec<Vec<f64>>>,
    /// Explicit weights for `particles` (uniform when omitted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<CloudSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSpec {
    /// `uniform` | `gaussian` (seeded iid draws) or `quantile-uniform` |
    /// `quantile-gaussian` (deterministic quadrature nodes).
    pub kind: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    /// `rk4` or `rk2`.
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_scheme() -> String {
    "rk4".into()
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariants: Option<InvariantsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConsistencySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_fd_multiples: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bumps: Vec<BumpSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySpec {
    /// Offset added to the initial macroscopic position of the second run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_v: Option<Vec<f64>>,
    /// Translation applied to the second run's initial cloud.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_shift: Option<Vec<f64>>,
    /// Fully explicit second initial condition; overrides the delta/shift
    /// fields where present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<SecondInitSpec>,
    #[serde(default = "default_eval_times")]
    pub n_eval_times: usize,
    #[serde(default = "default_envelope_tol")]
    pub envelope_tol: f64,
    #[serde(default = "default_fit_floor")]
    pub fit_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SecondInitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<CloudSpec>,
}

fn default_eval_times() -> usize {
    20
}

fn default_envelope_tol() -> f64 {
    0.05
}

fn default_fit_floor() -> f64 {
    1e-13
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub n_schedule: Vec<usize>,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_m_ref")]
    pub m_ref: usize,
}

fn default_n_seeds() -> usize {
    5
}

fn default_m_ref() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InvariantsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_drift_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_drift_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_ratio_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dae_newton_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Append one column block per particle to the trajectory CSV.
    #[serde(default)]
    pub write_particles: bool,
    /// Append recovered-multiplier residual columns to the trajectory CSV.
    #[serde(default)]
    pub dae_residuals: bool,
}

/// Parses TOML into a validated [`SimulationConfig`].
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let config: SimulationConfig =
        toml::from_str(text).map_err(|e| CoreError::Parse(e.to_string()))?;
    let errors = validate(&config);
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(CoreError::validation(errors))
    }
}

/// Canonical serialized form; hashing this makes equivalent configs (same
/// fields, different formatting) hash equal.
pub fn canonical_toml(config: &SimulationConfig) -> String {
    toml::to_string(config).expect("config serialization cannot fail")
}

fn matrix_shape_ok(m: &[Vec<f64>], rows: usize, cols: usize) -> bool {
    m.len() == rows && m.iter().all(|r| r.len() == cols)
}

fn validate_cloud_spec(errors: &mut Vec<String>, prefix: &str, cloud: &CloudSpec, nx: usize) {
    if cloud.n == 0 {
        errors.push(format!("{prefix}.n: must be at least 1"));
    }
    let needs_box = matches!(cloud.kind.as_str(), "uniform" | "quantile-uniform");
    let needs_gauss = matches!(cloud.kind.as_str(), "gaussian" | "quantile-gaussian");
    if !needs_box && !needs_gauss {
        errors.push(format!("{prefix}.kind: unknown kind `{}`", cloud.kind));
    }
    let check_vec = |errors: &mut Vec<String>, path: &str, v: &Option<Vec<f64>>, required: bool| {
        match v {
            Some(v) if v.len() != nx => {
                errors.push(format!("{path}: expected dimension {nx}, got {}", v.len()))
            }
            None if required => errors.push(format!("{path}: required")),
            _ => {}
        }
    };
    check_vec(errors, &format!("{prefix}.lo"), &cloud.lo, needs_box || needs_gauss);
    check_vec(errors, &format!("{prefix}.hi"), &cloud.hi, needs_box || needs_gauss);
    check_vec(errors, &format!("{prefix}.mean"), &cloud.mean, needs_gauss);
    check_vec(errors, &format!("{prefix}.std"), &cloud.std, needs_gauss);
    if let (Some(lo), Some(hi)) = (&cloud.lo, &cloud.hi) {
        if lo.len() == hi.len() && lo.iter().zip(hi).any(|(a, b)| a > b) {
            errors.push(format!("{prefix}: lo must not exceed hi"));
        }
    }
    if matches!(cloud.kind.as_str(), "quantile-uniform" | "quantile-gaussian") && nx > 2 {
        errors.push(format!("{prefix}.kind: quantile clouds support 1D and 2D only"));
    }
}

/// Collects every validation error with its field path.
pub fn validate(config: &SimulationConfig) -> Vec<String> {
    let mut errors = Vec::new();

    let (nx, ny) = (config.model.dim_x, config.model.dim_y);
    if nx == 0 {
        errors.push("model.dim_x: must be at least 1".into());
    }
    if ny == 0 {
        errors.push("model.dim_y: must be at least 1".into());
    }

    match config.model.name.as_str() {
        "linear" => {
            if let Some(b) = &config.model.b {
                if !matrix_shape_ok(b, nx, ny) {
                    errors.push(format!("model.b: must be a {nx}x{ny} matrix"));
                }
            } else if nx != ny {
                errors.push("model.b: required when dim_x != dim_y".into());
            }
            if config.model.eps.is_some() {
                errors.push("model.eps: only meaningful for the warped model".into());
            }
        }
        "shift" | "warped" => {
            if config.model.name == "warped" {
                match config.model.eps {
                    Some(eps) if eps.abs() < 1.0 => {}
                    Some(eps) => errors.push(format!("model.eps: |eps| must be < 1, got {eps}")),
                    None => errors.push("model.eps: required for the warped model".into()),
                }
            }
            if let Some(coupling) = &config.model.coupling {
                if !matches!(coupling.kind.as_str(), "linear" | "tanh") {
                    errors.push(format!("model.coupling.kind: unknown kind `{}`", coupling.kind));
                }
                if let Some(m) = &coupling.matrix {
                    if !matrix_shape_ok(m, nx, ny) {
                        errors.push(format!("model.coupling.matrix: must be a {nx}x{ny} matrix"));
                    }
                } else if nx != ny {
                    errors.push("model.coupling.matrix: required when dim_x != dim_y".into());
                }
            } else if nx != ny {
                errors.push("model.coupling: required when dim_x != dim_y".into());
            }
            if config.model.b.is_some() {
                errors.push("model.b: only meaningful for the linear model".into());
            }
        }
        other => errors.push(format!("model.name: unknown model `{other}`")),
    }

    for (path, name) in [
        ("field.name", Some(&config.field.name)),
        ("field.w0", config.field.w0.as_ref()),
        ("field.w1", config.field.w1.as_ref()),
    ] {
        if let Some(name) = name {
            if !matches!(name.as_str(), "harmonic" | "soft") {
                errors.push(format!("{path}: unknown potential `{name}`"));
            }
        }
    }
    if !(config.field.mass >= 0.0) {
        errors.push("field.mass: must be nonnegative".into());
    }

    if config.initial.y.len() != ny {
        errors.push(format!(
            "initial.y: expected dimension {ny}, got {}",
            config.initial.y.len()
        ));
    }
    if config.initial.v.len() != ny {
        errors.push(format!(
            "initial.v: expected dimension {ny}, got {}",
            config.initial.v.len()
        ));
    }
    match (&config.initial.particles, &config.initial.cloud) {
        (None, None) => errors.push("initial: one of `particles` or `cloud` is required".into()),
        (Some(_), Some(_)) => {
            errors.push("initial: `particles` and `cloud` are mutually exclusive".into())
        }
        (Some(particles), None) => {
            if particles.is_empty() {
                errors.push("initial.particles: needs at least one particle".into());
            }
            for (i, p) in particles.iter().enumerate() {
                if p.len() != nx {
                    errors.push(format!(
                        "initial.particles[{i}]: expected dimension {nx}, got {}",
                        p.len()
                    ));
                }
            }
            if let Some(w) = &config.initial.weights {
                if w.len() != particles.len() {
                    errors.push(format!(
                        "initial.weights: expected {} entries, got {}",
                        particles.len(),
                        w.len()
                    ));
                }
                if w.iter().any(|&x| !(x >= 0.0)) {
                    errors.push("initial.weights: must be nonnegative".into());
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    errors.push(format!("initial.weights: must sum to 1, got {total}"));
                }
            }
        }
        (None, Some(cloud)) => {
            if config.initial.weights.is_some() {
                errors.push("initial.weights: only allowed with explicit particles".into());
            }
            validate_cloud_spec(&mut errors, "initial.cloud", cloud, nx);
        }
    }

    if !(config.integrator.dt > 0.0) {
        errors.push(format!(
            "integrator.dt: must be positive, got {}",
            config.integrator.dt
        ));
    }
    if !(config.integrator.t_end >= 0.0) {
        errors.push(format!(
            "integrator.t_end: must be nonnegative, got {}",
            config.integrator.t_end
        ));
    }
    if config.integrator.stride == 0 {
        errors.push("integrator.stride: must be at least 1".into());
    }
    if !matches!(config.integrator.scheme.as_str(), "rk4" | "rk2") {
        errors.push(format!(
            "integrator.scheme: unknown scheme `{}`",
            config.integrator.scheme
        ));
    }

    if let Some(stability) = &config.experiment.stability {
        for (path, v) in [
            ("experiment.stability.delta_y", &stability.delta_y),
            ("experiment.stability.delta_v", &stability.delta_v),
        ] {
            if let Some(v) = v {
                if v.len() != ny {
                    errors.push(format!("{path}: expected dimension {ny}, got {}", v.len()));
                }
            }
        }
        if let Some(shift) = &stability.cloud_shift {
            if shift.len() != nx {
                errors.push(format!(
                    "experiment.stability.cloud_shift: expected dimension {nx}, got {}",
                    shift.len()
                ));
            }
        }
        if let Some(second) = &stability.second {
            for (path, v) in [
                ("experiment.stability.second.y", &second.y),
                ("experiment.stability.second.v", &second.v),
            ] {
                if let Some(v) = v {
                    if v.len() != ny {
                        errors.push(format!("{path}: expected dimension {ny}, got {}", v.len()));
                    }
                }
            }
            if second.particles.is_some() && second.cloud.is_some() {
                errors.push(
                    "experiment.stability.second: `particles` and `cloud` are mutually exclusive"
                        .into(),
                );
            }
            if let Some(particles) = &second.particles {
                for (i, p) in particles.iter().enumerate() {
                    if p.len() != nx {
                        errors.push(format!(
                            "experiment.stability.second.particles[{i}]: expected dimension {nx}, got {}",
                            p.len()
                        ));
                    }
                }
            }
            if let Some(cloud) = &second.cloud {
                validate_cloud_spec(&mut errors, "experiment.stability.second.cloud", cloud, nx);
            }
        }
        if stability.n_eval_times < 2 {
            errors.push("experiment.stability.n_eval_times: must be at least 2".into());
        }
    }
    if let Some(convergence) = &config.experiment.convergence {
        if convergence.n_schedule.is_empty() {
            errors.push("experiment.convergence.n_schedule: must be nonempty".into());
        }
        if convergence.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            errors.push("experiment.convergence.n_schedule: must be strictly increasing".into());
        }
        if convergence.n_seeds == 0 {
            errors.push("experiment.convergence.n_seeds: must be at least 1".into());
        }
        if convergence
            .n_schedule
            .last()
            .is_some_and(|&n| n > convergence.m_ref)
        {
            errors.push(
                "experiment.convergence.m_ref: must be at least the largest schedule entry".into(),
            );
        }
        match &config.initial.cloud {
            Some(cloud) if matches!(cloud.kind.as_str(), "uniform" | "gaussian") => {}
            _ => errors.push(
                "experiment.convergence: requires initial.cloud with kind uniform or gaussian"
                    .into(),
            ),
        }
    }
    if let Some(consistency) = &config.experiment.consistency {
        for (i, bump) in consistency.bumps.iter().enumerate() {
            if bump.center.len() != nx {
                errors.push(format!(
                    "experiment.consistency.bumps[{i}].center: expected dimension {nx}, got {}",
                    bump.center.len()
                ));
            }
            if !(bump.radius > 0.0) {
                errors.push(format!(
                    "experiment.consistency.bumps[{i}].radius: must be positive"
                ));
            }
        }
        if let Some(multiples) = &consistency.dt_fd_multiples {
            if multiples.len() < 2 {
                errors
                    .push("experiment.consistency.dt_fd_multiples: need at least two levels".into());
            }
        }
    }

    errors
}

fn distribution_from_spec(cloud: &CloudSpec) -> Result<Distribution> {
    let require = |v: &Option<Vec<f64>>, name: &str| -> Result<Vec<f64>> {
        v.clone()
            .ok_or_else(|| CoreError::Other(format!("cloud spec is missing `{name}`")))
    };
    let lo = require(&cloud.lo, "lo")?;
    let hi = require(&cloud.hi, "hi")?;
    match cloud.kind.as_str() {
        "uniform" | "quantile-uniform" => Ok(Distribution::UniformBox { lo, hi }),
        "gaussian" | "quantile-gaussian" => Ok(Distribution::GaussianBox {
            mean: require(&cloud.mean, "mean")?,
            std: require(&cloud.std, "std")?,
            lo,
            hi,
        }),
        other => Err(CoreError::Other(format!("unknown cloud kind `{other}`"))),
    }
}

fn vec_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows[0].len();
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

impl SimulationConfig {
    pub fn build_model(&self) -> Result<ConstraintModel> {
        let (nx, ny) = (self.model.dim_x, self.model.dim_y);
        let coupling = |spec: &Option<CouplingSpec>| -> Coupling {
            match spec {
                Some(CouplingSpec { kind, matrix }) => {
                    let c = matrix
                        .as_ref()
                        .map(|m| vec_to_matrix(m))
                        .unwrap_or_else(|| DMatrix::identity(nx, ny));
                    if kind == "tanh" {
                        Coupling::Tanh { c }
                    } else {
                        Coupling::Linear { c }
                    }
                }
                None => Coupling::identity_linear(nx),
            }
        };
        let mut model = match self.model.name.as_str() {
            "linear" => {
                let b = self
                    .model
                    .b
                    .as_ref()
                    .map(|m| vec_to_matrix(m))
                    .unwrap_or_else(|| DMatrix::identity(nx, ny));
                ConstraintModel::linear(b)?
            }
            "shift" => ConstraintModel::shift(coupling(&self.model.coupling))?,
            "warped" => ConstraintModel::warped(
                self.model.eps.expect("validated"),
                coupling(&self.model.coupling),
            )?,
            other => return Err(CoreError::Other(format!("unknown model `{other}`"))),
        };
        if let Some(delta_rel) = self.model.delta_rel {
            model = model.with_delta_rel(delta_rel);
        }
        if let Some(h_fd) = self.model.h_fd {
            model = model.with_h_fd(h_fd);
        }
        if self.model.finite_difference_omega {
            model = model.without_analytic_d2();
        }
        Ok(model)
    }

    pub fn build_field(&self) -> Result<ForceField> {
        let kind = |name: &str| -> Result<PotentialKind> {
            match name {
                "harmonic" => Ok(PotentialKind::Harmonic),
                "soft" => Ok(PotentialKind::Soft),
                other => Err(CoreError::Other(format!("unknown potential `{other}`"))),
            }
        };
        let base = kind(&self.field.name)?;
        let w0 = self.field.w0.as_deref().map(kind).transpose()?.unwrap_or(base);
        let w1 = self.field.w1.as_deref().map(kind).transpose()?.unwrap_or(base);
        Ok(ForceField::new(w0, w1, self.field.mass))
    }

    pub fn build_distribution(&self) -> Result<Distribution> {
        let cloud = self
            .initial
            .cloud
            .as_ref()
            .ok_or_else(|| CoreError::Other("config has no initial.cloud block".into()))?;
        distribution_from_spec(cloud)
    }

    /// Materializes the initial cloud: explicit particles as given, sampled
    /// kinds through the seeded `initial/sample` stream, quantile kinds
    /// deterministically.
    pub fn build_initial_cloud(&self) -> Result<WeightedPointCloud> {
        if let Some(particles) = &self.initial.particles {
            let points: Vec<DVector<f64>> = particles
                .iter()
                .map(|p| DVector::from_row_slice(p))
                .collect();
            return match &self.initial.weights {
                Some(w) => WeightedPointCloud::new(points, w.clone()),
                None => WeightedPointCloud::empirical(points),
            };
        }
        let cloud_spec = self.initial.cloud.as_ref().expect("validated");
        self.build_cloud(cloud_spec, "initial/sample")
    }

    /// Materializes any cloud spec; sampled kinds draw from the labeled
    /// stream, quantile kinds are deterministic.
    pub fn build_cloud(&self, spec: &CloudSpec, label: &str) -> Result<WeightedPointCloud> {
        let dist = distribution_from_spec(spec)?;
        match spec.kind.as_str() {
            "uniform" | "gaussian" => {
                let mut rng = stream(self.seed, label);
                dist.sample(spec.n, &mut rng)
            }
            _ => {
                let m_per_dim = if self.model.dim_x == 1 {
                    spec.n
                } else {
                    (spec.n as f64).sqrt().round() as usize
                };
                dist.quantile_cloud(m_per_dim)
            }
        }
    }

    pub fn integrate_options(&self, exec: ExecMode) -> IntegrateOptions {
        let scheme = if self.integrator.scheme == "rk2" {
            Scheme::Rk2
        } else {
            Scheme::Rk4
        };
        IntegrateOptions::new(
            scheme,
            self.integrator.dt,
            self.integrator.t_end,
            self.integrator.stride,
        )
        .with_exec(exec)
    }

    pub fn build_scenario(&self, exec: ExecMode) -> Result<Scenario> {
        Ok(Scenario {
            model: self.build_model()?,
            field: self.build_field()?,
            y0: DVector::from_row_slice(&self.initial.y),
            v0: DVector::from_row_slice(&self.initial.v),
            opts: self.integrate_options(exec),
        })
    }

    pub fn consistency_params(&self) -> ConsistencyParams {
        let spec = self.experiment.consistency.clone().unwrap_or_default();
        ConsistencyParams {
            times: spec.times,
            dt_fd_multiples: spec.dt_fd_multiples.unwrap_or_else(|| vec![8, 4]),
            bumps: spec
                .bumps
                .iter()
                .map(|b| BumpFn::new(DVector::from_row_slice(&b.center), b.radius))
                .collect(),
        }
    }

    pub fn stability_params(&self) -> StabilityParams {
        match &self.experiment.stability {
            Some(s) => StabilityParams {
                n_eval_times: s.n_eval_times,
                fit_floor: s.fit_floor,
                envelope_tol: s.envelope_tol,
            },
            None => StabilityParams::default(),
        }
    }

    pub fn convergence_params(&self) -> Result<ConvergenceParams> {
        let spec = self
            .experiment
            .convergence
            .as_ref()
            .ok_or_else(|| CoreError::Other("config has no experiment.convergence block".into()))?;
        Ok(ConvergenceParams {
            distribution: self.build_distribution()?,
            n_schedule: spec.n_schedule.clone(),
            n_seeds: spec.n_seeds,
            m_ref: spec.m_ref,
            master_seed: self.seed,
        })
    }

    pub fn invariant_tolerances(&self) -> (Option<f64>, InvariantTolerances) {
        let spec = self.experiment.invariants.clone().unwrap_or_default();
        let mut tol = InvariantTolerances::default();
        if let Some(v) = spec.energy_drift_max {
            tol.energy_drift_max = v;
        }
        if let Some(v) = spec.constraint_drift_max {
            tol.constraint_drift_max = v;
        }
        if let Some(v) = spec.order_ratio_min {
            tol.order_ratio_min = v;
        }
        if let Some(v) = spec.dae_newton_max {
            tol.dae_newton_max = v;
        }
        (spec.order_dt, tol)
    }
}
