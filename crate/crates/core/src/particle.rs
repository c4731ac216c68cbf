//! The N-particle ODE model: macroscopic Newton law with effective mass and
//! force, particle velocities slaved through `Phi`.
//!
//! All operations delegate to the weighted kernel in [`crate::dynamics`]
//! with uniform weights `1/N`, which is also what makes the mean-field flow
//! started from an empirical measure reproduce these trajectories exactly.

use nalgebra::DVector;

use crate::constraint::ConstraintModel;
use crate::dynamics::{
    self, CoupledState, EffectiveSystem, ExecMode, IntegrateOptions, StateDerivative, Trajectory,
};
use crate::error::Result;
use crate::force::ForceField;

/// State of the N-particle system: time, macroscopic position and velocity,
/// and the particle positions.
#[derive(Debug, Clone)]
pub struct SystemState {
    inner: CoupledState,
}

impl SystemState {
    pub fn new(y: DVector<f64>, v: DVector<f64>, particles: Vec<DVector<f64>>) -> Self {
        assert!(!particles.is_empty(), "particle system needs N >= 1");
        Self {
            inner: CoupledState::new(y, v, particles),
        }
    }

    pub fn n_particles(&self) -> usize {
        self.inner.points.len()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.inner.y
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.inner.v
    }

    pub fn particles(&self) -> &[DVector<f64>] {
        &self.inner.points
    }

    pub fn as_coupled(&self) -> &CoupledState {
        &self.inner
    }

    pub fn uniform_weights(&self) -> Vec<f64> {
        vec![1.0 / self.n_particles() as f64; self.n_particles()]
    }
}

impl From<CoupledState> for SystemState {
    fn from(inner: CoupledState) -> Self {
        assert!(!inner.points.is_empty(), "particle system needs N >= 1");
        Self { inner }
    }
}

/// `m_eff = I + (m/N) sum Phi_j^T Phi_j` and
/// `F_eff = F_0(y) + (1/N) sum Phi_j^T (F_1(X_j) - m Omega_j[v, v])`.
pub fn assemble_effective(
    model: &ConstraintModel,
    field: &ForceField,
    state: &SystemState,
    exec: ExecMode,
) -> Result<EffectiveSystem> {
    dynamics::effective_system(
        model,
        field,
        &state.inner.points,
        &state.uniform_weights(),
        &state.inner.y,
        &state.inner.v,
        exec,
    )
}

/// `dy = v`, `m_eff dv = F_eff` via Cholesky, `dX_i = Phi_i v`.
pub fn rhs(
    model: &ConstraintModel,
    field: &ForceField,
    state: &SystemState,
    exec: ExecMode,
) -> Result<StateDerivative> {
    dynamics::rhs(model, field, &state.inner, &state.uniform_weights(), exec)
}

/// Fixed-step integration over `[0, T]` recording state, total energy, and
/// per-particle constraint drift.
pub fn integrate(
    model: &ConstraintModel,
    field: &ForceField,
    init: &SystemState,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    dynamics::integrate(model, field, &init.inner, &init.uniform_weights(), opts)
}

/// Total energy of the particle system.
pub fn total_energy(
    model: &ConstraintModel,
    field: &ForceField,
    state: &SystemState,
) -> Result<f64> {
    dynamics::total_energy(model, field, &state.inner, &state.uniform_weights())
}
