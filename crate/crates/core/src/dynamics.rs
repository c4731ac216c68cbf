//! Shared dynamics kernel.
//!
//! The N-particle system and the mean-field characteristic flow obey the
//! same equations up to the weighting of the particle ensemble: the discrete
//! system averages with weights `1/N`, the flow integrates against a
//! weighted point cloud. Both module surfaces drive the weighted kernel in
//! this module, so a flow started from the empirical measure of a particle
//! configuration reproduces the particle trajectories bit for bit.
//!
//! Reduction contract: accumulation runs over fixed-size chunks (1024
//! points); partial sums are computed sequentially within each chunk and
//! combined in chunk order. Chunks may be evaluated on worker threads, which
//! leaves the result bitwise independent of thread scheduling. Sequential
//! mode evaluates everything on one thread; for ensembles of at most one
//! chunk the two modes produce identical arithmetic.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::constraint::ConstraintModel;
use crate::error::{CoreError, Result};
use crate::force::ForceField;
use crate::linalg::spd_solve;

/// Number of ensemble points per reduction chunk.
pub const REDUCTION_CHUNK: usize = 1024;

/// How per-point loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Everything on the calling thread, strictly in index order.
    Sequential,
    /// Chunked reduction; chunk partials may run on worker threads.
    #[default]
    Chunked,
}

/// Explicit Runge-Kutta scheme for the fixed-step integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Rk4,
    /// Explicit midpoint rule.
    Rk2,
}

/// Macroscopic state plus the positions carried by the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub t: f64,
    pub y: DVector<f64>,
    pub v: DVector<f64>,
    pub points: Vec<DVector<f64>>,
}

impl CoupledState {
    pub fn new(y: DVector<f64>, v: DVector<f64>, points: Vec<DVector<f64>>) -> Self {
        Self {
            t: 0.0,
            y,
            v,
            points,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().all(|c| c.is_finite())
            && self.v.iter().all(|c| c.is_finite())
            && self
                .points
                .iter()
                .all(|p| p.iter().all(|c| c.is_finite()))
    }
}

/// Time derivative of a [`CoupledState`].
#[derive(Debug, Clone)]
pub struct StateDerivative {
    pub dy: DVector<f64>,
    pub dv: DVector<f64>,
    pub dpoints: Vec<DVector<f64>>,
}

/// Effective mass and force of the macroscopic component.
#[derive(Debug, Clone)]
pub struct EffectiveSystem {
    /// `I + m * sum_k w_k Phi_k^T Phi_k`; symmetric with eigenvalues >= 1.
    pub m_eff: DMatrix<f64>,
    /// `F_0(y) + sum_k w_k Phi_k^T (F_1(x_k) - m Omega_k[v, v])`.
    pub f_eff: DVector<f64>,
}

impl EffectiveSystem {
    /// Smallest eigenvalue of the (symmetrized) mass matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        crate::linalg::symmetric_min_eigenvalue(&self.m_eff)
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.m_eff - self.m_eff.transpose()).norm()
    }
}

struct ChunkPartial {
    mass_acc: DMatrix<f64>,
    force_acc: DVector<f64>,
    dpoints: Vec<DVector<f64>>,
}

/// Per-chunk pass: accumulates the weighted mass/force sums and, when
/// requested, the slaved point velocities `Phi_k v`.
///
/// For constraint kinds whose `Phi` does not depend on the particle
/// position, the map and curvature term are evaluated once and reused;
/// every per-point product is unchanged, so the result is bit-identical to
/// the unhoisted loop.
fn chunk_pass(
    model: &ConstraintModel,
    field: &ForceField,
    points: &[DVector<f64>],
    weights: &[f64],
    y: &DVector<f64>,
    v: &DVector<f64>,
    base_index: usize,
    with_velocities: bool,
) -> Result<ChunkPartial> {
    let ny = model.dim_y();
    let m = field.particle_mass;
    let v_is_zero = v.iter().all(|&c| c == 0.0);
    // Omega[v, v] contracts to zero when v = 0 and is scaled away when
    // m = 0; skipping it in those cases leaves the arithmetic unchanged.
    let need_omega = m != 0.0 && !v_is_zero;
    let tag = |e: CoreError, k: usize| match e {
        CoreError::SingularConstraintJacobian {
            sigma_min, delta, ..
        } => CoreError::SingularConstraintJacobian {
            particle: Some(k),
            sigma_min,
            delta,
        },
        other => other,
    };
    let eval_at = |x: &DVector<f64>, k: usize| -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
        if need_omega {
            let po = model.eval_phi_omega(x, y).map_err(|e| tag(e, k))?;
            let omega_vv = po.omega.contract_last2(v, v);
            Ok((po.phi, Some(omega_vv)))
        } else {
            Ok((model.eval_phi(x, y).map_err(|e| tag(e, k))?, None))
        }
    };
    let shared = if model.phi_x_independent() && !points.is_empty() {
        Some(eval_at(&points[0], base_index)?)
    } else {
        None
    };

    let mut mass_acc = DMatrix::zeros(ny, ny);
    let mut force_acc = DVector::zeros(ny);
    let mut dpoints = Vec::with_capacity(if with_velocities { points.len() } else { 0 });
    for (k, (x, &w)) in points.iter().zip(weights).enumerate() {
        let local = if shared.is_none() {
            Some(eval_at(x, base_index + k)?)
        } else {
            None
        };
        let (phi, omega_vv) = shared.as_ref().or(local.as_ref()).expect("one source set");
        let mut f1 = field.f1(x);
        if let Some(omega_vv) = omega_vv {
            f1 -= m * omega_vv;
        }
        mass_acc += w * (phi.transpose() * phi);
        force_acc += w * (phi.transpose() * f1);
        if with_velocities {
            dpoints.push(phi * v);
        }
    }
    Ok(ChunkPartial {
        mass_acc,
        force_acc,
        dpoints,
    })
}

fn ensemble_pass(
    model: &ConstraintModel,
    field: &ForceField,
    points: &[DVector<f64>],
    weights: &[f64],
    y: &DVector<f64>,
    v: &DVector<f64>,
    exec: ExecMode,
    with_velocities: bool,
) -> Result<ChunkPartial> {
    assert_eq!(
        points.len(),
        weights.len(),
        "ensemble points and weights must align"
    );
    let n = points.len();
    let partials: Vec<Result<ChunkPartial>> = match exec {
        ExecMode::Chunked if n > REDUCTION_CHUNK => {
            let ranges: Vec<(usize, usize)> = (0..n)
                .step_by(REDUCTION_CHUNK)
                .map(|s| (s, (s + REDUCTION_CHUNK).min(n)))
                .collect();
            ranges
                .into_par_iter()
                .map(|(s, e)| {
                    chunk_pass(model, field, &points[s..e], &weights[s..e], y, v, s, with_velocities)
                })
                .collect()
        }
        _ => vec![chunk_pass(model, field, points, weights, y, v, 0, with_velocities)],
    };

    let ny = model.dim_y();
    let mut total = ChunkPartial {
        mass_acc: DMatrix::zeros(ny, ny),
        force_acc: DVector::zeros(ny),
        dpoints: Vec::with_capacity(if with_velocities { n } else { 0 }),
    };
    for partial in partials {
        let partial = partial?;
        total.mass_acc += partial.mass_acc;
        total.force_acc += partial.force_acc;
        total.dpoints.extend(partial.dpoints);
    }
    Ok(total)
}

/// Assembles the weighted effective mass and force.
pub fn effective_system(
    model: &ConstraintModel,
    field: &ForceField,
    points: &[DVector<f64>],
    weights: &[f64],
    y: &DVector<f64>,
    v: &DVector<f64>,
    exec: ExecMode,
) -> Result<EffectiveSystem> {
    let partial = ensemble_pass(model, field, points, weights, y, v, exec, false)?;
    let ny = model.dim_y();
    let m_eff = DMatrix::identity(ny, ny) + field.particle_mass * partial.mass_acc;
    let f_eff = field.f0(y) + partial.force_acc;
    Ok(EffectiveSystem { m_eff, f_eff })
}

/// Right-hand side of the coupled system:
/// `dy = v`, `m_eff dv = f_eff` (Cholesky solve), `dx_k = Phi_k v`.
pub fn rhs(
    model: &ConstraintModel,
    field: &ForceField,
    state: &CoupledState,
    weights: &[f64],
    exec: ExecMode,
) -> Result<StateDerivative> {
    let partial = ensemble_pass(
        model,
        field,
        &state.points,
        weights,
        &state.y,
        &state.v,
        exec,
        true,
    )?;
    let ny = model.dim_y();
    let m_eff = DMatrix::identity(ny, ny) + field.particle_mass * partial.mass_acc;
    let f_eff = field.f0(&state.y) + partial.force_acc;
    let dv = spd_solve(&m_eff, &f_eff)?;
    Ok(StateDerivative {
        dy: state.v.clone(),
        dv,
        dpoints: partial.dpoints,
    })
}

/// Weighted total energy
/// `E = 1/2 ||v||^2 + W_0(y) + sum_k w_k (m/2 ||Phi_k v||^2 + W_1(x_k))`,
/// with point velocities reconstructed through `Phi`.
pub fn total_energy(
    model: &ConstraintModel,
    field: &ForceField,
    state: &CoupledState,
    weights: &[f64],
) -> Result<f64> {
    let mut ensemble = 0.0;
    let m = field.particle_mass;
    for (x, &w) in state.points.iter().zip(weights) {
        let mut term = field.w1_value(x);
        if m != 0.0 {
            let phi = model.eval_phi(x, &state.y)?;
            term += 0.5 * m * (&phi * &state.v).norm_squared();
        }
        ensemble += w * term;
    }
    Ok(0.5 * state.v.norm_squared() + field.w0_value(&state.y) + ensemble)
}

fn state_step(state: &CoupledState, parts: &[(f64, &StateDerivative)], dt: f64) -> CoupledState {
    let mut y = state.y.clone();
    let mut v = state.v.clone();
    let mut points = state.points.clone();
    for &(c, d) in parts {
        let cdt = c * dt;
        y.axpy(cdt, &d.dy, 1.0);
        v.axpy(cdt, &d.dv, 1.0);
        for (p, dp) in points.iter_mut().zip(&d.dpoints) {
            p.axpy(cdt, dp, 1.0);
        }
    }
    CoupledState {
        t: state.t,
        y,
        v,
        points,
    }
}

/// One explicit Runge-Kutta step of size `dt`.
pub fn step(
    model: &ConstraintModel,
    field: &ForceField,
    state: &CoupledState,
    weights: &[f64],
    dt: f64,
    scheme: Scheme,
    exec: ExecMode,
) -> Result<CoupledState> {
    let next = match scheme {
        Scheme::Rk4 => {
            let k1 = rhs(model, field, state, weights, exec)?;
            let s2 = state_step(state, &[(0.5, &k1)], dt);
            let k2 = rhs(model, field, &s2, weights, exec)?;
            let s3 = state_step(state, &[(0.5, &k2)], dt);
            let k3 = rhs(model, field, &s3, weights, exec)?;
            let s4 = state_step(state, &[(1.0, &k3)], dt);
            let k4 = rhs(model, field, &s4, weights, exec)?;
            state_step(
                state,
                &[
                    (1.0 / 6.0, &k1),
                    (1.0 / 3.0, &k2),
                    (1.0 / 3.0, &k3),
                    (1.0 / 6.0, &k4),
                ],
                dt,
            )
        }
        Scheme::Rk2 => {
            let k1 = rhs(model, field, state, weights, exec)?;
            let s2 = state_step(state, &[(0.5, &k1)], dt);
            let k2 = rhs(model, field, &s2, weights, exec)?;
            state_step(state, &[(1.0, &k2)], dt)
        }
    };
    Ok(next)
}

/// Fixed-step integration options.
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub scheme: Scheme,
    pub dt: f64,
    /// Final time; rounded to the nearest whole number of steps.
    pub t_end: f64,
    /// Record every `stride`-th step (plus the initial and final states).
    pub stride: usize,
    pub exec: ExecMode,
}

impl IntegrateOptions {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64, stride: usize) -> Self {
        Self {
            scheme,
            dt,
            t_end,
            stride: stride.max(1),
            exec: ExecMode::default(),
        }
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Recorded time series of a coupled-system run: macroscopic state, total
/// energy, per-point constraint drift, and position snapshots at every
/// recorded step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dim_x: usize,
    pub dim_y: usize,
    pub weights: Vec<f64>,
    /// `g(x_k(0), y(0))` per ensemble point, the level set each point must
    /// keep.
    pub g_ref: Vec<DVector<f64>>,
    pub times: Vec<f64>,
    pub ys: Vec<DVector<f64>>,
    pub vs: Vec<DVector<f64>>,
    pub energies: Vec<f64>,
    pub drifts: Vec<f64>,
    pub snapshots: Vec<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Reconstructs the full state at record index `i`.
    pub fn state_at(&self, i: usize) -> CoupledState {
        CoupledState {
            t: self.times[i],
            y: self.ys[i].clone(),
            v: self.vs[i].clone(),
            points: self.snapshots[i].clone(),
        }
    }

    /// Max over records of `|E(t) - E(0)| / max(|E(0)|, 1)`.
    pub fn energy_drift_rel(&self) -> f64 {
        let e0 = self.energies[0];
        let scale = e0.abs().max(1.0);
        self.energies
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// Max over records of the constraint drift column.
    pub fn max_drift(&self) -> f64 {
        self.drifts.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_speed(&self) -> f64 {
        self.vs.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Index of the record closest to time `t`; errors if farther than half
    /// a record interval would allow.
    pub fn record_index_at(&self, t: f64, tol: f64) -> Result<usize> {
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for (i, &ti) in self.times.iter().enumerate() {
            let err = (ti - t).abs();
            if err < best_err {
                best_err = err;
                best = i;
            }
        }
        if best_err > tol {
            return Err(CoreError::Other(format!(
                "no trajectory record near t = {t} (closest at {})",
                self.times[best]
            )));
        }
        Ok(best)
    }
}

fn constraint_drift(
    model: &ConstraintModel,
    points: &[DVector<f64>],
    y: &DVector<f64>,
    g_ref: &[DVector<f64>],
) -> f64 {
    points
        .iter()
        .zip(g_ref)
        .map(|(x, g0)| (model.g(x, y) - g0).norm())
        .fold(0.0, f64::max)
}

/// Integrates the coupled system with a fixed-step explicit scheme,
/// recording state, energy, and constraint drift at the configured stride.
pub fn integrate(
    model: &ConstraintModel,
    field: &ForceField,
    init: &CoupledState,
    weights: &[f64],
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    assert!(opts.dt > 0.0, "dt must be positive");
    assert!(opts.t_end >= 0.0, "t_end must be nonnegative");
    let g_ref: Vec<DVector<f64>> = init.points.iter().map(|x| model.g(x, &init.y)).collect();
    let n_steps = opts.n_steps();

    let mut traj = Trajectory {
        dim_x: model.dim_x(),
        dim_y: model.dim_y(),
        weights: weights.to_vec(),
        g_ref,
        times: Vec::new(),
        ys: Vec::new(),
        vs: Vec::new(),
        energies: Vec::new(),
        drifts: Vec::new(),
        snapshots: Vec::new(),
    };

    let record = |state: &CoupledState, traj: &mut Trajectory| -> Result<()> {
        traj.times.push(state.t);
        traj.ys.push(state.y.clone());
        traj.vs.push(state.v.clone());
        traj.energies
            .push(total_energy(model, field, state, weights)?);
        traj.drifts
            .push(constraint_drift(model, &state.points, &state.y, &traj.g_ref));
        traj.snapshots.push(state.points.clone());
        Ok(())
    };

    let mut state = init.clone();
    state.t = 0.0;
    record(&state, &mut traj)?;
    for i in 0..n_steps {
        state = step(model, field, &state, weights, opts.dt, opts.scheme, opts.exec)?;
        state.t = (i + 1) as f64 * opts.dt;
        if !state.is_finite() {
            return Err(CoreError::StepRejected { t: state.t });
        }
        if (i + 1) % opts.stride == 0 || i + 1 == n_steps {
            record(&state, &mut traj)?;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{ConstraintModel, Coupling};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn dv(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        // v = 0, forces zero at the origin: everything stays put.
        let model = ConstraintModel::linear(dmatrix![1.0]).unwrap();
        let field = ForceField::harmonic(1.0);
        let state = CoupledState::new(dv(&[0.0]), dv(&[0.0]), vec![dv(&[0.0])]);
        let d = rhs(&model, &field, &state, &[1.0], ExecMode::Sequential).unwrap();
        assert_eq!(d.dv[0], 0.0);
        assert_eq!(d.dpoints[0][0], 0.0);
    }

    #[test]
    fn rhs_matches_scalar_arithmetic() {
        // B = 1, m = 1, harmonic, y = 1, v = 0, one particle at X = 2:
        // m_eff = 2, f_eff = F0 + Phi^T F1 = -1 - 2 = -3, dv = -1.5.
        let model = ConstraintModel::linear(dmatrix![1.0]).unwrap();
        let field = ForceField::harmonic(1.0);
        let state = CoupledState::new(dv(&[1.0]), dv(&[0.0]), vec![dv(&[2.0])]);
        let eff = effective_system(
            &model,
            &field,
            &state.points,
            &[1.0],
            &state.y,
            &state.v,
            ExecMode::Sequential,
        )
        .unwrap();
        assert_relative_eq!(eff.m_eff[(0, 0)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(eff.f_eff[0], -3.0, epsilon = 1e-15);
        let d = rhs(&model, &field, &state, &[1.0], ExecMode::Sequential).unwrap();
        assert_relative_eq!(d.dv[0], -1.5, epsilon = 1e-15);
    }

    #[test]
    fn rhs_keeps_constraint_level_set() {
        // d/dt g = D_X g dX + D_y g dy = 0 by the definition of Phi.
        let model = ConstraintModel::warped(0.5, Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(0.7);
        let state = CoupledState::new(
            dv(&[0.4]),
            dv(&[0.9]),
            vec![dv(&[0.3]), dv(&[-1.1]), dv(&[0.8])],
        );
        let w = vec![1.0 / 3.0; 3];
        let d = rhs(&model, &field, &state, &w, ExecMode::Sequential).unwrap();
        for (x, dx) in state.points.iter().zip(&d.dpoints) {
            let dgdt = model.d_x_g(x, &state.y) * dx + model.d_y_g(x, &state.y) * &d.dy;
            assert!(dgdt.norm() <= 1e-13);
        }
    }

    #[test]
    fn energy_of_simple_state() {
        // Single particle, B = 1, m = 1, v = 1, y = 0, X = 0, harmonic:
        // E = 1/2 v^2 + m/2 (Phi v)^2 = 1.
        let model = ConstraintModel::linear(dmatrix![1.0]).unwrap();
        let field = ForceField::harmonic(1.0);
        let state = CoupledState::new(dv(&[0.0]), dv(&[1.0]), vec![dv(&[0.0])]);
        let e = total_energy(&model, &field, &state, &[1.0]).unwrap();
        assert_relative_eq!(e, 1.0, epsilon = 1e-15);
        // v = 0 at the potential minimum: E = 0.
        let rest = CoupledState::new(dv(&[0.0]), dv(&[0.0]), vec![dv(&[0.0])]);
        assert_eq!(total_energy(&model, &field, &rest, &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_horizon_records_initial_state_only() {
        let model = ConstraintModel::linear(dmatrix![1.0]).unwrap();
        let field = ForceField::harmonic(1.0);
        let init = CoupledState::new(dv(&[0.5]), dv(&[0.1]), vec![dv(&[0.2])]);
        let opts = IntegrateOptions::new(Scheme::Rk4, 1e-2, 0.0, 1);
        let traj = integrate(&model, &field, &init, &[1.0], &opts).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.energy_drift_rel(), 0.0);
        assert_eq!(traj.max_drift(), 0.0);
    }

    #[test]
    fn mass_matrix_is_symmetric_and_elliptic() {
        let model = ConstraintModel::warped(
            0.4,
            Coupling::Tanh {
                c: dmatrix![1.0, -0.5; 0.3, 0.8],
            },
        )
        .unwrap();
        let field = ForceField::soft(2.5);
        let points = vec![dv(&[0.1, 0.2]), dv(&[-0.4, 0.6]), dv(&[1.2, -0.3])];
        let w = vec![0.2, 0.5, 0.3];
        let eff = effective_system(
            &model,
            &field,
            &points,
            &w,
            &dv(&[0.3, -0.1]),
            &dv(&[0.2, 0.4]),
            ExecMode::Sequential,
        )
        .unwrap();
        assert!(eff.symmetry_defect() <= 1e-12);
        assert!(eff.min_eigenvalue() >= 1.0 - 1e-10);
    }

    #[test]
    fn singular_jacobian_reports_offending_particle() {
        let model = ConstraintModel::warped(0.5, Coupling::identity_linear(1))
            .unwrap()
            .with_delta_abs(0.6);
        let field = ForceField::soft(1.0);
        let state = CoupledState::new(
            dv(&[0.0]),
            dv(&[0.0]),
            vec![dv(&[0.0]), dv(&[std::f64::consts::PI])],
        );
        let err = rhs(&model, &field, &state, &[0.5, 0.5], ExecMode::Sequential).unwrap_err();
        match err {
            CoreError::SingularConstraintJacobian { particle, .. } => {
                assert_eq!(particle, Some(1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn chunked_reduction_matches_sequential_for_single_chunk() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let n = 100;
        let points: Vec<_> = (0..n).map(|k| dv(&[(k as f64) / 25.0 - 2.0])).collect();
        let w = vec![1.0 / n as f64; n];
        let state = CoupledState::new(dv(&[0.2]), dv(&[0.7]), points);
        let a = rhs(&model, &field, &state, &w, ExecMode::Sequential).unwrap();
        let b = rhs(&model, &field, &state, &w, ExecMode::Chunked).unwrap();
        assert_eq!(a.dv[0].to_bits(), b.dv[0].to_bits());
    }

    #[test]
    fn chunked_reduction_is_reproducible_above_chunk_size() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let n = REDUCTION_CHUNK * 2 + 137;
        let points: Vec<_> = (0..n)
            .map(|k| dv(&[((k * 37 % 501) as f64) / 100.0 - 2.5]))
            .collect();
        let w = vec![1.0 / n as f64; n];
        let state = CoupledState::new(dv(&[0.2]), dv(&[0.7]), points);
        let a = rhs(&model, &field, &state, &w, ExecMode::Chunked).unwrap();
        let b = rhs(&model, &field, &state, &w, ExecMode::Chunked).unwrap();
        assert_eq!(a.dv[0].to_bits(), b.dv[0].to_bits());
        for (pa, pb) in a.dpoints.iter().zip(&b.dpoints) {
            assert_eq!(pa[0].to_bits(), pb[0].to_bits());
        }
    }

    #[test]
    fn rk4_conserves_energy_to_fourth_order() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let init = CoupledState::new(
            dv(&[0.3]),
            dv(&[0.8]),
            vec![dv(&[0.1]), dv(&[-0.5]), dv(&[0.9]), dv(&[0.4])],
        );
        let w = vec![0.25; 4];
        let run = |dt: f64| {
            let opts = IntegrateOptions::new(Scheme::Rk4, dt, 2.0, 16);
            integrate(&model, &field, &init, &w, &opts)
                .unwrap()
                .energy_drift_rel()
        };
        let coarse = run(4e-3);
        let fine = run(2e-3);
        assert!(coarse > 0.0);
        assert!(
            coarse / fine >= 15.0,
            "energy drift ratio {} below fourth-order expectation",
            coarse / fine
        );
    }

    #[test]
    fn blowup_is_rejected_with_the_failing_time() {
        // A step far beyond the stability region drives the harmonic system
        // to overflow within a few steps.
        let model = ConstraintModel::linear(dmatrix![1.0]).unwrap();
        let field = ForceField::harmonic(1.0);
        let init = CoupledState::new(dv(&[1.0]), dv(&[0.0]), vec![dv(&[1.0])]);
        let opts = IntegrateOptions::new(Scheme::Rk4, 50.0, 5000.0, 1);
        match integrate(&model, &field, &init, &[1.0], &opts) {
            Err(CoreError::StepRejected { t }) => assert!(t > 0.0),
            other => panic!("expected StepRejected, got {other:?}"),
        }
    }

    #[test]
    fn rk2_is_second_order_in_energy() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::harmonic(1.0);
        let init = CoupledState::new(dv(&[0.4]), dv(&[0.5]), vec![dv(&[0.2])]);
        let run = |dt: f64| {
            let opts = IntegrateOptions::new(Scheme::Rk2, dt, 2.0, 8);
            integrate(&model, &field, &init, &[1.0], &opts)
                .unwrap()
                .energy_drift_rel()
        };
        let ratio = run(4e-3) / run(2e-3);
        assert!((3.0..6.0).contains(&ratio), "rk2 ratio {ratio} not second order");
    }
}
