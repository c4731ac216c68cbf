//! Mean-field characteristic flow: the macroscopic Newton law with
//! measure-integrated mass and force, with the initial distribution
//! discretized as a weighted point cloud whose nodes are transported by the
//! flow map. Weights never change; the pushforward moves atoms only.

use nalgebra::{DMatrix, DVector};

use crate::cloud::WeightedPointCloud;
use crate::constraint::ConstraintModel;
use crate::dynamics::{
    self, CoupledState, ExecMode, IntegrateOptions, StateDerivative, Trajectory,
};
use crate::error::{CoreError, Result};
use crate::force::ForceField;

/// Flow state: quadrature nodes carried by the characteristic flow plus the
/// macroscopic `(y, v)`.
#[derive(Debug, Clone)]
pub struct FlowState {
    inner: CoupledState,
    init_cloud: WeightedPointCloud,
}

impl FlowState {
    /// Starts the flow at the identity map: nodes coincide with the initial
    /// cloud points.
    pub fn new(y: DVector<f64>, v: DVector<f64>, init_cloud: WeightedPointCloud) -> Self {
        let nodes = init_cloud.points().to_vec();
        Self {
            inner: CoupledState::new(y, v, nodes),
            init_cloud,
        }
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.inner.y
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.inner.v
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.inner.points
    }

    pub fn init_cloud(&self) -> &WeightedPointCloud {
        &self.init_cloud
    }

    pub fn weights(&self) -> &[f64] {
        self.init_cloud.weights()
    }

    pub fn as_coupled(&self) -> &CoupledState {
        &self.inner
    }

    /// The transported measure at the current time.
    pub fn current_cloud(&self) -> Result<WeightedPointCloud> {
        self.init_cloud.pushforward(self.inner.points.clone())
    }
}

/// `m_eff(mu, y) = I + m * integral Phi^T Phi dmu`, a symmetric matrix with
/// eigenvalues at least one.
pub fn mean_field_mass(
    model: &ConstraintModel,
    field: &ForceField,
    cloud: &WeightedPointCloud,
    y: &DVector<f64>,
    exec: ExecMode,
) -> Result<DMatrix<f64>> {
    let zero_v = DVector::zeros(model.dim_y());
    let eff = dynamics::effective_system(
        model,
        field,
        cloud.points(),
        cloud.weights(),
        y,
        &zero_v,
        exec,
    )?;
    Ok(eff.m_eff)
}

/// `F_eff(mu, y, v) = F_0(y) + integral Phi^T (F_1 - m Omega[v, v]) dmu`.
pub fn mean_field_force(
    model: &ConstraintModel,
    field: &ForceField,
    cloud: &WeightedPointCloud,
    y: &DVector<f64>,
    v: &DVector<f64>,
    exec: ExecMode,
) -> Result<DVector<f64>> {
    let eff =
        dynamics::effective_system(model, field, cloud.points(), cloud.weights(), y, v, exec)?;
    Ok(eff.f_eff)
}

/// Characteristic-flow right-hand side: `dy = v`, mean-field mass solve for
/// `dv`, and `dnode_k = Phi(node_k, y) v`.
pub fn flow_rhs(
    model: &ConstraintModel,
    field: &ForceField,
    fs: &FlowState,
    exec: ExecMode,
) -> Result<StateDerivative> {
    dynamics::rhs(model, field, &fs.inner, fs.weights(), exec)
}

/// Integrates the flow, recording `(y, v)`, node snapshots, mean-field
/// energy, and node-level constraint drift.
pub fn integrate_flow(
    model: &ConstraintModel,
    field: &ForceField,
    init: &FlowState,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    dynamics::integrate(model, field, &init.inner, init.weights(), opts)
}

/// Mean-field total energy of a flow state.
pub fn mean_field_energy(
    model: &ConstraintModel,
    field: &ForceField,
    fs: &FlowState,
) -> Result<f64> {
    dynamics::total_energy(model, field, &fs.inner, fs.weights())
}

/// The transported cloud at record index `i` of a flow trajectory.
pub fn cloud_at(traj: &Trajectory, index: usize) -> Result<WeightedPointCloud> {
    WeightedPointCloud::new(traj.snapshots[index].clone(), traj.weights.clone())
}

/// Smooth compactly supported bump
/// `xi(x) = exp(1 - 1/(1 - ||(x - c)/r||^2))` inside the ball of radius `r`
/// around `c`, zero outside, with analytic gradient.
#[derive(Debug, Clone)]
pub struct BumpFn {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl BumpFn {
    pub fn new(center: DVector<f64>, radius: f64) -> Self {
        assert!(radius > 0.0, "bump radius must be positive");
        Self { center, radius }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let u = (x - &self.center).norm_squared() / (self.radius * self.radius);
        if u >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - u)).exp()
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = x - &self.center;
        let r2 = self.radius * self.radius;
        let u = d.norm_squared() / r2;
        if u >= 1.0 {
            return DVector::zeros(x.len());
        }
        let s = 1.0 - u;
        let xi = (1.0 - 1.0 / s).exp();
        d * (-2.0 * xi / (r2 * s * s))
    }
}

/// Weak-form residual of the transport equation at time `t`:
/// `| d/dt <xi, mu^t> - <grad xi . Phi(., y) v, mu^t> |`, with the time
/// derivative taken as a central difference of the recorded pairings at
/// `t -/+ dt_fd`. The times must match trajectory records.
pub fn weak_form_residual(
    model: &ConstraintModel,
    traj: &Trajectory,
    test_fn: &BumpFn,
    t: f64,
    dt_fd: f64,
) -> Result<f64> {
    let tol = 1e-9 * dt_fd.max(1.0);
    let i_minus = traj.record_index_at(t - dt_fd, tol)?;
    let i_mid = traj.record_index_at(t, tol)?;
    let i_plus = traj.record_index_at(t + dt_fd, tol)?;
    if i_minus == i_mid || i_mid == i_plus {
        return Err(CoreError::Other(format!(
            "dt_fd = {dt_fd} does not span distinct trajectory records at t = {t}"
        )));
    }

    let pair_at = |i: usize| -> f64 {
        traj.snapshots[i]
            .iter()
            .zip(&traj.weights)
            .map(|(x, w)| w * test_fn.value(x))
            .sum()
    };
    let dt_actual = 0.5 * (traj.times[i_plus] - traj.times[i_minus]);
    let ddt = (pair_at(i_plus) - pair_at(i_minus)) / (2.0 * dt_actual);

    let y = &traj.ys[i_mid];
    let v = &traj.vs[i_mid];
    let mut transport = 0.0;
    for (x, w) in traj.snapshots[i_mid].iter().zip(&traj.weights) {
        let phi = model.eval_phi(x, y)?;
        transport += w * test_fn.gradient(x).dot(&(phi * v));
    }
    Ok((ddt - transport).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::Coupling;
    use crate::dynamics::Scheme;
    use crate::particle::{self, SystemState};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn dv(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn mass_of_two_point_cloud_matches_scalar_arithmetic() {
        // Weights (0.25, 0.75), g = X + tanh(y), y = 0, m = 1:
        // mass = 1 + (0.25 + 0.75) sech^4(0) = 2.
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::harmonic(1.0);
        let cloud =
            WeightedPointCloud::new(vec![dv(&[0.2]), dv(&[-0.4])], vec![0.25, 0.75]).unwrap();
        let mass =
            mean_field_mass(&model, &field, &cloud, &dv(&[0.0]), ExecMode::Sequential).unwrap();
        assert_relative_eq!(mass[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_model_mass_ignores_cloud() {
        let b = dmatrix![2.0];
        let model = ConstraintModel::linear(b).unwrap();
        let field = ForceField::harmonic(0.5);
        for pts in [vec![dv(&[0.0])], vec![dv(&[5.0]), dv(&[-3.0])]] {
            let cloud = WeightedPointCloud::empirical(pts).unwrap();
            let mass =
                mean_field_mass(&model, &field, &cloud, &dv(&[0.7]), ExecMode::Sequential).unwrap();
            assert_relative_eq!(mass[(0, 0)], 1.0 + 0.5 * 4.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn empirical_cloud_reproduces_particle_system_bitwise() {
        let model = ConstraintModel::warped(0.4, Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let particles = vec![dv(&[0.3]), dv(&[-0.8]), dv(&[0.5]), dv(&[0.05])];
        let y = dv(&[0.2]);
        let v = dv(&[0.6]);

        let state = SystemState::new(y.clone(), v.clone(), particles.clone());
        let eff = particle::assemble_effective(&model, &field, &state, ExecMode::Sequential).unwrap();

        let cloud = WeightedPointCloud::empirical(particles).unwrap();
        let mass = mean_field_mass(&model, &field, &cloud, &y, ExecMode::Sequential).unwrap();
        let force =
            mean_field_force(&model, &field, &cloud, &y, &v, ExecMode::Sequential).unwrap();

        assert_eq!(mass[(0, 0)].to_bits(), eff.m_eff[(0, 0)].to_bits());
        assert_eq!(force[0].to_bits(), eff.f_eff[0].to_bits());

        // Energies agree bitwise as well.
        let fs = FlowState::new(y, v, cloud);
        let e_flow = mean_field_energy(&model, &field, &fs).unwrap();
        let e_particle = particle::total_energy(&model, &field, &state).unwrap();
        assert_eq!(e_flow.to_bits(), e_particle.to_bits());
    }

    #[test]
    fn force_reduces_to_macro_force_when_particle_forces_vanish() {
        // All nodes at the particle-potential minimum: F_1 = 0 exactly, so
        // the mean-field force equals F_0(y).
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::harmonic(1.0);
        let cloud =
            WeightedPointCloud::new(vec![dv(&[0.0]), dv(&[0.0])], vec![0.3, 0.7]).unwrap();
        let y = dv(&[0.4]);
        let force =
            mean_field_force(&model, &field, &cloud, &y, &dv(&[0.0]), ExecMode::Sequential)
                .unwrap();
        assert_eq!(force[0], field.f0(&y)[0]);
    }

    #[test]
    fn zero_horizon_flow_keeps_identity_map() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let cloud = WeightedPointCloud::empirical(vec![dv(&[0.3]), dv(&[-0.6])]).unwrap();
        let fs = FlowState::new(dv(&[0.1]), dv(&[0.2]), cloud.clone());
        let opts = IntegrateOptions::new(Scheme::Rk4, 1e-2, 0.0, 1);
        let traj = integrate_flow(&model, &field, &fs, &opts).unwrap();
        assert_eq!(traj.len(), 1);
        for (node, point) in traj.snapshots[0].iter().zip(cloud.points()) {
            assert_eq!(node[0].to_bits(), point[0].to_bits());
        }
    }

    #[test]
    fn nodes_freeze_when_macro_velocity_is_zero() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let cloud = WeightedPointCloud::empirical(vec![dv(&[0.5]), dv(&[-0.5])]).unwrap();
        let fs = FlowState::new(dv(&[0.3]), dv(&[0.0]), cloud);
        let d = flow_rhs(&model, &field, &fs, ExecMode::Sequential).unwrap();
        for dn in &d.dpoints {
            assert_eq!(dn[0], 0.0);
        }
    }

    #[test]
    fn single_node_flow_equals_single_particle_rhs() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.3);
        let cloud = WeightedPointCloud::empirical(vec![dv(&[0.7])]).unwrap();
        let fs = FlowState::new(dv(&[0.1]), dv(&[0.4]), cloud);
        let state = SystemState::new(dv(&[0.1]), dv(&[0.4]), vec![dv(&[0.7])]);
        let a = flow_rhs(&model, &field, &fs, ExecMode::Sequential).unwrap();
        let b = particle::rhs(&model, &field, &state, ExecMode::Sequential).unwrap();
        assert_eq!(a.dv[0].to_bits(), b.dv[0].to_bits());
        assert_eq!(a.dpoints[0][0].to_bits(), b.dpoints[0][0].to_bits());
    }

    #[test]
    fn flow_trajectory_matches_particle_trajectory_exactly() {
        let model = ConstraintModel::warped(0.3, Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let particles = vec![dv(&[0.2]), dv(&[-0.6]), dv(&[0.9])];
        let opts = IntegrateOptions::new(Scheme::Rk4, 1e-2, 1.0, 5);

        let p_traj = particle::integrate(
            &model,
            &field,
            &SystemState::new(dv(&[0.1]), dv(&[0.5]), particles.clone()),
            &opts,
        )
        .unwrap();
        let cloud = WeightedPointCloud::empirical(particles).unwrap();
        let f_traj = integrate_flow(
            &model,
            &field,
            &FlowState::new(dv(&[0.1]), dv(&[0.5]), cloud),
            &opts,
        )
        .unwrap();

        assert_eq!(p_traj.len(), f_traj.len());
        for i in 0..p_traj.len() {
            assert_eq!(p_traj.ys[i][0].to_bits(), f_traj.ys[i][0].to_bits());
            assert_eq!(p_traj.vs[i][0].to_bits(), f_traj.vs[i][0].to_bits());
            for (a, b) in p_traj.snapshots[i].iter().zip(&f_traj.snapshots[i]) {
                assert_eq!(a[0].to_bits(), b[0].to_bits());
            }
        }
    }

    #[test]
    fn weights_are_carried_unchanged() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let weights = vec![0.125, 0.5, 0.375];
        let cloud = WeightedPointCloud::new(
            vec![dv(&[0.1]), dv(&[0.5]), dv(&[-0.3])],
            weights.clone(),
        )
        .unwrap();
        let opts = IntegrateOptions::new(Scheme::Rk4, 1e-2, 0.5, 10);
        let traj = integrate_flow(
            &model,
            &field,
            &FlowState::new(dv(&[0.0]), dv(&[0.8]), cloud),
            &opts,
        )
        .unwrap();
        for (a, b) in traj.weights.iter().zip(&weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let final_cloud = cloud_at(&traj, traj.len() - 1).unwrap();
        assert_eq!(final_cloud.weights(), weights.as_slice());
    }

    #[test]
    fn bump_gradient_matches_finite_differences() {
        let bump = BumpFn::new(dv(&[0.2, -0.1]), 0.8);
        let h = 1e-6;
        for p in [dv(&[0.3, 0.1]), dv(&[0.0, 0.0]), dv(&[0.7, -0.4])] {
            let grad = bump.gradient(&p);
            for i in 0..2 {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[i] += h;
                pm[i] -= h;
                let fd = (bump.value(&pp) - bump.value(&pm)) / (2.0 * h);
                assert_relative_eq!(grad[i], fd, epsilon = 1e-7, max_relative = 1e-6);
            }
        }
        // Zero outside the support.
        assert_eq!(bump.value(&dv(&[5.0, 5.0])), 0.0);
        assert_eq!(bump.gradient(&dv(&[5.0, 5.0])).norm(), 0.0);
    }

    fn sample_flow_trajectory() -> (ConstraintModel, ForceField, Trajectory) {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let cloud = crate::cloud::Distribution::uniform_1d(-1.0, 1.0)
            .quantile_cloud(32)
            .unwrap();
        let fs = FlowState::new(dv(&[0.3]), dv(&[0.7]), cloud);
        let opts = IntegrateOptions::new(Scheme::Rk4, 1e-3, 2.0, 10);
        let traj = integrate_flow(&model, &field, &fs, &opts).unwrap();
        (model, field, traj)
    }

    #[test]
    fn weak_form_residual_vanishes_on_frozen_flow() {
        // Symmetric particles at +/- 0.5 under a SHIFT constraint: the odd
        // particle forces cancel exactly, so v stays zero and every pairing
        // is constant in time.
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let cloud = WeightedPointCloud::empirical(vec![dv(&[0.5]), dv(&[-0.5])]).unwrap();
        let fs = FlowState::new(dv(&[0.0]), dv(&[0.0]), cloud);
        let opts = IntegrateOptions::new(Scheme::Rk4, 1e-2, 1.0, 1);
        let traj = integrate_flow(&model, &field, &fs, &opts).unwrap();
        assert_eq!(traj.max_speed(), 0.0);
        let bump = BumpFn::new(dv(&[0.0]), 2.0);
        let res = weak_form_residual(&model, &traj, &bump, 0.5, 0.1).unwrap();
        assert!(res <= 1e-14, "residual {res} should vanish for a frozen flow");
    }

    #[test]
    fn weak_form_residual_is_exactly_zero_off_support() {
        // A bump whose support never meets the transported nodes is
        // constant (zero) there: both pairing terms vanish identically.
        let (model, _field, traj) = sample_flow_trajectory();
        let bump = BumpFn::new(dv(&[50.0]), 1.0);
        let res = weak_form_residual(&model, &traj, &bump, 1.0, 0.1).unwrap();
        assert_eq!(res, 0.0);
    }

    #[test]
    fn flow_speed_respects_energy_bound() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let field = ForceField::soft(1.0);
        let cloud = crate::cloud::Distribution::uniform_1d(-1.0, 1.0)
            .quantile_cloud(16)
            .unwrap();
        let fs = FlowState::new(dv(&[0.2]), dv(&[1.1]), cloud);
        let e0 = mean_field_energy(&model, &field, &fs).unwrap();
        let opts = IntegrateOptions::new(Scheme::Rk4, 1e-3, 4.0, 10);
        let traj = integrate_flow(&model, &field, &fs, &opts).unwrap();
        assert!(traj.max_speed() <= (2.0 * e0).sqrt() + 1e-8);
    }

    #[test]
    fn weak_form_residual_decays_second_order_in_dt_fd() {
        let (model, _field, traj) = sample_flow_trajectory();
        let bump = BumpFn::new(dv(&[0.2]), 1.5);
        let r_coarse = weak_form_residual(&model, &traj, &bump, 1.0, 0.32).unwrap();
        let r_fine = weak_form_residual(&model, &traj, &bump, 1.0, 0.16).unwrap();
        let ratio = r_coarse / r_fine;
        assert!(
            (2.5..7.0).contains(&ratio),
            "central-difference ratio {ratio} is not second order (coarse {r_coarse}, fine {r_fine})"
        );
    }
}
