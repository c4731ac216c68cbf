//! Lagrange-multiplier recovery and constrained-Newton residuals.
//!
//! The ODE model never integrates multipliers; they are recovered
//! algebraically from the reduced dynamics,
//! `lambda_i = (D_X g)^{-T} (F_1(X_i) - m Phi_i[yddot] - m Omega_i[v, v])`,
//! with `yddot` re-solved from the current state so the verifier stays
//! independent of integrator internals. Plugging the recovered multipliers
//! back into the constrained Newton equations must leave residuals at
//! roundoff level; the algebraic constraint itself drifts at the
//! integrator's order.

use nalgebra::DVector;

use crate::constraint::ConstraintModel;
use crate::dynamics::{ExecMode, Trajectory};
use crate::error::{CoreError, Result};
use crate::force::ForceField;
use crate::linalg::smallest_singular_value;
use crate::particle::{self, SystemState};

/// Residuals of the constrained Newton system at one state, evaluated with
/// recovered multipliers.
#[derive(Debug, Clone)]
pub struct DaeResidualReport {
    pub t: f64,
    /// Recovered multipliers, one per particle.
    pub lambda: Vec<DVector<f64>>,
    /// `max_i || m Xddot_i - F_1(X_i) + (D_X g)^T lambda_i ||`.
    pub newton_x_residual: f64,
    /// `|| yddot - F_0(y) + (1/N) sum (D_y g)^T lambda_j ||`.
    pub newton_y_residual: f64,
    /// `max_i || g(X_i, y) - g(X_i(0), y(0)) ||`.
    pub constraint_residual: f64,
}

fn solve_transposed_jacobian(
    model: &ConstraintModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
    rhs: &DVector<f64>,
    particle_index: usize,
) -> Result<DVector<f64>> {
    let dxg = model.d_x_g(x, y);
    let delta = (model.delta_rel * dxg.norm()).max(model.delta_abs);
    let sigma_min = smallest_singular_value(&dxg);
    if !(sigma_min > delta) {
        return Err(CoreError::SingularConstraintJacobian {
            particle: Some(particle_index),
            sigma_min,
            delta,
        });
    }
    dxg.transpose()
        .lu()
        .solve(rhs)
        .ok_or(CoreError::SingularConstraintJacobian {
            particle: Some(particle_index),
            sigma_min,
            delta,
        })
}

/// Recovers the Lagrange multipliers of the DAE model from an ODE-model
/// state, one vector per particle.
pub fn recover_multipliers(
    model: &ConstraintModel,
    field: &ForceField,
    state: &SystemState,
    exec: ExecMode,
) -> Result<Vec<DVector<f64>>> {
    let yddot = particle::rhs(model, field, state, exec)?.dv;
    multipliers_with_accel(model, field, state, &yddot)
}

fn multipliers_with_accel(
    model: &ConstraintModel,
    field: &ForceField,
    state: &SystemState,
    yddot: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let m = field.particle_mass;
    let y = state.y();
    let v = state.v();
    state
        .particles()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rhs = field.f1(x);
            if m != 0.0 {
                let phi = model.eval_phi(x, y)?;
                let omega = model.eval_omega(x, y)?;
                rhs -= m * (phi * yddot);
                rhs -= m * omega.contract_last2(v, v);
            }
            solve_transposed_jacobian(model, x, y, &rhs, i)
        })
        .collect()
}

/// Residuals at one state. `g_ref` carries the constraint level set fixed by
/// the initial data.
pub fn residuals_at(
    model: &ConstraintModel,
    field: &ForceField,
    state: &SystemState,
    g_ref: &[DVector<f64>],
    exec: ExecMode,
) -> Result<DaeResidualReport> {
    let yddot = particle::rhs(model, field, state, exec)?.dv;
    let lambda = multipliers_with_accel(model, field, state, &yddot)?;
    let m = field.particle_mass;
    let y = state.y();
    let v = state.v();
    let n = state.n_particles() as f64;

    let mut newton_x_residual: f64 = 0.0;
    let mut lambda_pull = DVector::zeros(model.dim_y());
    let mut constraint_residual: f64 = 0.0;
    for (i, x) in state.particles().iter().enumerate() {
        let phi = model.eval_phi(x, y)?;
        let omega = model.eval_omega(x, y)?;
        // Particle acceleration reconstructed through the index-reduced
        // relation, never finite-differenced.
        let xddot = &phi * &yddot + omega.contract_last2(v, v);
        let res = m * xddot - field.f1(x) + model.d_x_g(x, y).transpose() * &lambda[i];
        newton_x_residual = newton_x_residual.max(res.norm());
        lambda_pull += model.d_y_g(x, y).transpose() * &lambda[i];
        constraint_residual = constraint_residual.max((model.g(x, y) - &g_ref[i]).norm());
    }
    let newton_y_residual = (&yddot - field.f0(y) + lambda_pull / n).norm();

    Ok(DaeResidualReport {
        t: 0.0,
        lambda,
        newton_x_residual,
        newton_y_residual,
        constraint_residual,
    })
}

/// Residual time series along a recorded trajectory.
pub fn dae_residuals(
    model: &ConstraintModel,
    field: &ForceField,
    trajectory: &Trajectory,
    exec: ExecMode,
) -> Result<Vec<DaeResidualReport>> {
    (0..trajectory.len())
        .map(|i| {
            let state = SystemState::from(trajectory.state_at(i));
            let mut report = residuals_at(model, field, &state, &trajectory.g_ref, exec)?;
            report.t = trajectory.times[i];
            Ok(report)
        })
        .collect()
}
