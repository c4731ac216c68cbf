//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    /// The particle Jacobian of the constraint lost full rank at a queried
    /// point (smallest singular value fell below the guard threshold).
    #[error("constraint Jacobian is rank-deficient{} (sigma_min = {sigma_min:.3e} <= delta = {delta:.3e})",
            particle.map(|i| format!(" at particle {i}")).unwrap_or_default())]
    SingularConstraintJacobian {
        particle: Option<usize>,
        sigma_min: f64,
        delta: f64,
    },

    /// Cholesky factorization of the effective mass failed. The mass matrix
    /// is `I +` a positive-semidefinite sum, so this signals a bug rather
    /// than bad data.
    #[error("effective mass matrix is not symmetric positive definite")]
    NonSpdMass,

    /// A state coordinate became non-finite during time stepping.
    #[error("integration step rejected at t = {t}: non-finite state")]
    StepRejected { t: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    /// Exact assignment requires equal-size clouds with uniform weights.
    #[error("assignment method requires equal-size clouds with uniform weights: {reason}")]
    UnsupportedWeights { reason: String },

    #[error("cloud size {size} exceeds the assignment solver cap {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    /// A dual-bound probe violated its Lipschitz certificate on the support.
    #[error("probe function is not 1-Lipschitz on the support (ratio {ratio:.6} at pair {i},{j})")]
    ProbeNotLipschitz { ratio: f64, i: usize, j: usize },

    /// Identical initial data produced diverging trajectories.
    #[error("degenerate initial data: rhs0 = 0 but lhs({t}) = {lhs:.3e} > 1e-10")]
    DegenerateInitialData { t: f64, lhs: f64 },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config:\n{}", errors.join("\n"))]
    Validation { errors: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

impl CoreError {
    pub fn validation(errors: Vec<String>) -> Self {
        CoreError::Validation { errors }
    }

    /// Machine-readable form emitted by the CLI on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CoreError::SingularConstraintJacobian { .. } => "singular_constraint_jacobian",
            CoreError::NonSpdMass => "non_spd_mass",
            CoreError::StepRejected { .. } => "step_rejected",
            CoreError::DimensionMismatch { .. } => "dimension_mismatch",
            CoreError::UnsupportedWeights { .. } => "unsupported_weights",
            CoreError::SizeCapExceeded { .. } => "size_cap_exceeded",
            CoreError::ProbeNotLipschitz { .. } => "probe_not_lipschitz",
            CoreError::DegenerateInitialData { .. } => "degenerate_initial_data",
            CoreError::InvalidCloud(_) => "invalid_cloud",
            CoreError::Parse(_) => "parse_error",
            CoreError::Validation { .. } => "validation_error",
            CoreError::Io(_) => "io_error",
            CoreError::Other(_) => "error",
        };
        match self {
            CoreError::Validation { errors } => serde_json::json!({
                "kind": kind,
                "message": "invalid config",
                "errors": errors,
            }),
            other => serde_json::json!({
                "kind": kind,
                "message": other.to_string(),
            }),
        }
    }
}
