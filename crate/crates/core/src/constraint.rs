//! Constraint functions `g(X, y)`, their derivatives, and the derived
//! velocity-transfer map `Phi` and curvature term `Omega`.
//!
//! Every particle keeps `g(X_i, y)` at its initial value. Because the
//! particle Jacobian of `g` has full rank, differentiating the constraint
//! once yields the velocity slaving `Xdot = Phi(X, y)[ydot]` with
//! `Phi = -(D_X g)^{-1} D_y g`, and twice yields the acceleration term
//! `Xddot = Phi[yddot] + Omega[ydot, ydot]`.
//!
//! Jacobian orientation: `d_x_g` and `d_y_g` return the plain Jacobians
//! `D_X g` (n_x by n_x) and `D_y g` (n_x by n_y). Constraint forces use the
//! transposes, so the multiplier recovery in the DAE verifier solves against
//! `(D_X g)^T`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::linalg::{smallest_singular_value, Tensor3};
use crate::rng::stream;

/// Default relative step for finite-difference fallbacks.
pub const DEFAULT_H_FD: f64 = 1e-4;
/// Default rank-deficiency guard, relative to the Frobenius norm of `D_X g`.
pub const DEFAULT_DELTA_REL: f64 = 1e-8;

/// The coupling map `c : R^{n_y} -> R^{n_x}` used by the SHIFT and WARPED
/// constraint families.
#[derive(Debug, Clone)]
pub enum Coupling {
    /// `c(y) = C y`.
    Linear { c: DMatrix<f64> },
    /// `c(y)_k = tanh((C y)_k)`; bounded with bounded derivatives of all
    /// orders, which keeps the structural assumptions checkable on any box.
    Tanh { c: DMatrix<f64> },
}

impl Coupling {
    pub fn identity_linear(n: usize) -> Self {
        Coupling::Linear {
            c: DMatrix::identity(n, n),
        }
    }

    pub fn identity_tanh(n: usize) -> Self {
        Coupling::Tanh {
            c: DMatrix::identity(n, n),
        }
    }

    fn matrix(&self) -> &DMatrix<f64> {
        match self {
            Coupling::Linear { c } | Coupling::Tanh { c } => c,
        }
    }

    fn dim_out(&self) -> usize {
        self.matrix().nrows()
    }

    fn dim_in(&self) -> usize {
        self.matrix().ncols()
    }

    fn value(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Coupling::Linear { c } => c * y,
            Coupling::Tanh { c } => (c * y).map(f64::tanh),
        }
    }

    /// Jacobian `dc/dy`, size n_x by n_y.
    fn jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Coupling::Linear { c } => c.clone(),
            Coupling::Tanh { c } => {
                let u = c * y;
                let mut jac = c.clone();
                for k in 0..jac.nrows() {
                    let s = u[k].cosh().recip();
                    let sech2 = s * s;
                    for a in 0..jac.ncols() {
                        jac[(k, a)] *= sech2;
                    }
                }
                jac
            }
        }
    }

    /// Second derivative tensor `d2c[k, a, b] = d^2 c_k / dy_a dy_b`.
    fn second(&self, y: &DVector<f64>) -> Tensor3 {
        let (nx, ny) = (self.dim_out(), self.dim_in());
        match self {
            Coupling::Linear { .. } => Tensor3::zeros(nx, ny, ny),
            Coupling::Tanh { c } => {
                let u = c * y;
                let mut t = Tensor3::zeros(nx, ny, ny);
                for k in 0..nx {
                    let th = u[k].tanh();
                    let s = u[k].cosh().recip();
                    let ddtanh = -2.0 * th * s * s; // tanh''(u)
                    for a in 0..ny {
                        for b in 0..ny {
                            t.set(k, a, b, ddtanh * c[(k, a)] * c[(k, b)]);
                        }
                    }
                }
                t
            }
        }
    }
}

/// Shape of a constraint family, before numerical options are attached.
#[derive(Debug, Clone)]
pub enum ConstraintKind {
    /// `g(X, y) = X - B y`: constant `Phi = B`, `Omega = 0`.
    Linear { b: DMatrix<f64> },
    /// `g(X, y) = X + c(y)`: `Phi` independent of `X`, `Omega = -c''(y)`.
    Shift { coupling: Coupling },
    /// `g(X, y) = phi(X) + c(y)` with `phi(X) = X + eps sin X` componentwise
    /// and `|eps| < 1`, so `D_X g = diag(1 + eps cos X)` stays uniformly
    /// elliptic with constant `1 - |eps|`.
    Warped { eps: f64, coupling: Coupling },
}

/// Second derivatives of `g`, oriented as
/// `d_xx[i, j, k] = d^2 g_i / dX_j dX_k`,
/// `d_xy[i, j, a] = d^2 g_i / dX_j dy_a`,
/// `d_yy[i, a, b] = d^2 g_i / dy_a dy_b`.
#[derive(Debug, Clone)]
pub struct SecondDerivs {
    pub d_xx: Tensor3,
    pub d_xy: Tensor3,
    pub d_yy: Tensor3,
}

/// A constraint function with its derivatives and numerical guards.
#[derive(Debug, Clone)]
pub struct ConstraintModel {
    kind: ConstraintKind,
    dim_x: usize,
    dim_y: usize,
    /// Rank guard relative to `||D_X g||_F`.
    pub delta_rel: f64,
    /// Absolute floor for the rank guard:
    /// `delta = max(delta_rel * ||D_X g||_F, delta_abs)`.
    pub delta_abs: f64,
    /// Relative step for finite-difference fallbacks.
    pub h_fd: f64,
    /// When false, `eval_omega` ignores the analytic second derivatives and
    /// uses central differences of `Phi` instead.
    pub analytic_d2: bool,
}

/// Velocity-transfer map and curvature term at one evaluation point.
#[derive(Debug, Clone)]
pub struct PhiOmega {
    /// `Phi(X, y)`, n_x by n_y.
    pub phi: DMatrix<f64>,
    /// `omega[i, a, b]` is component `i` of `Omega[e_a, e_b]`, where the
    /// first slot is the applied vector and the second the differentiation
    /// direction.
    pub omega: Tensor3,
}

impl ConstraintModel {
    pub fn new(kind: ConstraintKind) -> Result<Self> {
        let (dim_x, dim_y) = match &kind {
            ConstraintKind::Linear { b } => (b.nrows(), b.ncols()),
            ConstraintKind::Shift { coupling } => (coupling.dim_out(), coupling.dim_in()),
            ConstraintKind::Warped { eps, coupling } => {
                if eps.abs() >= 1.0 {
                    return Err(CoreError::Other(format!(
                        "warped constraint requires |eps| < 1, got {eps}"
                    )));
                }
                (coupling.dim_out(), coupling.dim_in())
            }
        };
        if dim_x == 0 || dim_y == 0 {
            return Err(CoreError::Other("constraint dimensions must be positive".into()));
        }
        Ok(Self {
            kind,
            dim_x,
            dim_y,
            delta_rel: DEFAULT_DELTA_REL,
            delta_abs: 0.0,
            h_fd: DEFAULT_H_FD,
            analytic_d2: true,
        })
    }

    pub fn linear(b: DMatrix<f64>) -> Result<Self> {
        Self::new(ConstraintKind::Linear { b })
    }

    pub fn shift(coupling: Coupling) -> Result<Self> {
        Self::new(ConstraintKind::Shift { coupling })
    }

    pub fn warped(eps: f64, coupling: Coupling) -> Result<Self> {
        Self::new(ConstraintKind::Warped { eps, coupling })
    }

    pub fn kind(&self) -> &ConstraintKind {
        &self.kind
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn with_delta_rel(mut self, delta_rel: f64) -> Self {
        self.delta_rel = delta_rel;
        self
    }

    pub fn with_delta_abs(mut self, delta_abs: f64) -> Self {
        self.delta_abs = delta_abs;
        self
    }

    pub fn with_h_fd(mut self, h_fd: f64) -> Self {
        self.h_fd = h_fd;
        self
    }

    pub fn without_analytic_d2(mut self) -> Self {
        self.analytic_d2 = false;
        self
    }

    /// The constraint value `g(X, y)`.
    pub fn g(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ConstraintKind::Linear { b } => x - b * y,
            ConstraintKind::Shift { coupling } => x + coupling.value(y),
            ConstraintKind::Warped { eps, coupling } => {
                x.map(|xi| xi + eps * xi.sin()) + coupling.value(y)
            }
        }
    }

    /// Jacobian `D_X g`, n_x by n_x.
    pub fn d_x_g(&self, x: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            ConstraintKind::Linear { .. } | ConstraintKind::Shift { .. } => {
                DMatrix::identity(self.dim_x, self.dim_x)
            }
            ConstraintKind::Warped { eps, .. } => {
                DMatrix::from_diagonal(&x.map(|xi| 1.0 + eps * xi.cos()))
            }
        }
    }

    /// Jacobian `D_y g`, n_x by n_y.
    pub fn d_y_g(&self, _x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            ConstraintKind::Linear { b } => -b.clone(),
            ConstraintKind::Shift { coupling } | ConstraintKind::Warped { coupling, .. } => {
                coupling.jacobian(y)
            }
        }
    }

    /// Analytic second derivatives of `g` for the built-in families.
    pub fn d2(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<SecondDerivs> {
        if !self.analytic_d2 {
            return None;
        }
        let (nx, ny) = (self.dim_x, self.dim_y);
        let derivs = match &self.kind {
            ConstraintKind::Linear { .. } => SecondDerivs {
                d_xx: Tensor3::zeros(nx, nx, nx),
                d_xy: Tensor3::zeros(nx, nx, ny),
                d_yy: Tensor3::zeros(nx, ny, ny),
            },
            ConstraintKind::Shift { coupling } => SecondDerivs {
                d_xx: Tensor3::zeros(nx, nx, nx),
                d_xy: Tensor3::zeros(nx, nx, ny),
                d_yy: coupling.second(y),
            },
            ConstraintKind::Warped { eps, coupling } => {
                let mut d_xx = Tensor3::zeros(nx, nx, nx);
                for i in 0..nx {
                    d_xx.set(i, i, i, -eps * x[i].sin());
                }
                SecondDerivs {
                    d_xx,
                    d_xy: Tensor3::zeros(nx, nx, ny),
                    d_yy: coupling.second(y),
                }
            }
        };
        Some(derivs)
    }

    fn check_dims(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(CoreError::DimensionMismatch {
                context: "constraint particle coordinate".into(),
                expected: self.dim_x,
                got: x.len(),
            });
        }
        if y.len() != self.dim_y {
            return Err(CoreError::DimensionMismatch {
                context: "constraint macro coordinate".into(),
                expected: self.dim_y,
                got: y.len(),
            });
        }
        Ok(())
    }

    /// Whether `Phi` and `Omega` are independent of the particle position,
    /// which lets ensemble loops evaluate them once.
    pub fn phi_x_independent(&self) -> bool {
        matches!(
            self.kind,
            ConstraintKind::Linear { .. } | ConstraintKind::Shift { .. }
        )
    }

    /// LU factorization of `D_X g` with the rank guard applied.
    fn guarded_lu(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
        let dxg = self.d_x_g(x, y);
        let delta = (self.delta_rel * dxg.norm()).max(self.delta_abs);
        let sigma_min = smallest_singular_value(&dxg);
        if !(sigma_min > delta) {
            return Err(CoreError::SingularConstraintJacobian {
                particle: None,
                sigma_min,
                delta,
            });
        }
        Ok(dxg.lu())
    }

    fn solve_phi(
        &self,
        lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let rhs = -self.d_y_g(x, y);
        lu.solve(&rhs).ok_or(CoreError::SingularConstraintJacobian {
            particle: None,
            sigma_min: 0.0,
            delta: self.delta_rel,
        })
    }

    /// `Phi(X, y) = -(D_X g)^{-1} D_y g`, solved by LU factorization.
    pub fn eval_phi(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dims(x, y)?;
        let lu = self.guarded_lu(x, y)?;
        self.solve_phi(&lu, x, y)
    }

    /// `Omega(X, y)` as a tensor; uses the analytic second derivatives when
    /// available, otherwise central finite differences of `Phi`.
    pub fn eval_omega(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<Tensor3> {
        match self.d2(x, y) {
            Some(d2) => {
                let lu = self.guarded_lu(x, y)?;
                let phi = self.solve_phi(&lu, x, y)?;
                self.omega_from_d2(&lu, &phi, &d2)
            }
            None => self.eval_omega_fd(x, y),
        }
    }

    /// Both `Phi` and `Omega` at one point, sharing the factorization.
    pub fn eval_phi_omega(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<PhiOmega> {
        self.check_dims(x, y)?;
        let lu = self.guarded_lu(x, y)?;
        let phi = self.solve_phi(&lu, x, y)?;
        let omega = match self.d2(x, y) {
            Some(d2) => self.omega_from_d2(&lu, &phi, &d2)?,
            None => self.eval_omega_fd(x, y)?,
        };
        Ok(PhiOmega { phi, omega })
    }

    /// Omega from second derivatives of `g`:
    /// `D_X Phi[dir u] = -(D_X g)^{-1} ((D_X D_X g[u]) Phi + D_X D_y g[u])`
    /// and analogously in `y`; then
    /// `Omega[v, w] = D_X Phi[dir Phi w] v + D_y Phi[dir w] v`.
    fn omega_from_d2(
        &self,
        lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        phi: &DMatrix<f64>,
        d2: &SecondDerivs,
    ) -> Result<Tensor3> {
        let (nx, ny) = (self.dim_x, self.dim_y);
        let mut omega = Tensor3::zeros(nx, ny, ny);
        for b in 0..ny {
            let e_b = DVector::from_fn(ny, |i, _| if i == b { 1.0 } else { 0.0 });
            let dir_x = phi * &e_b;
            // X pass, direction Phi e_b: d(D_X g)[dir_x] Phi + d(D_y g)[dir_x].
            // d_xy[i, j, a] doubles as d/dX_j (D_y g)_{ia}, hence the middle
            // contraction in the second term.
            let mut m = d2.d_xx.contract_last(&dir_x) * phi;
            m += d2.d_xy.contract_mid(&dir_x);
            // y pass, direction e_b: d/dy_b (D_X g) Phi + d/dy_b (D_y g).
            m += d2.d_xy.contract_last(&e_b) * phi;
            m += d2.d_yy.contract_last(&e_b);
            let col_block = lu.solve(&m).ok_or(CoreError::NonSpdMass)?;
            for i in 0..nx {
                for a in 0..ny {
                    omega.set(i, a, b, -col_block[(i, a)]);
                }
            }
        }
        Ok(omega)
    }

    /// Omega by central finite differences of `eval_phi` with step `h_fd`.
    pub fn eval_omega_fd(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<Tensor3> {
        let phi = self.eval_phi(x, y)?;
        let (nx, ny) = (self.dim_x, self.dim_y);

        // dPhi/dX_k and dPhi/dy_a, each n_x by n_y.
        let mut dphi_dx = Vec::with_capacity(nx);
        let mut xp = x.clone();
        for k in 0..nx {
            let h = crate::linalg::fd_step(self.h_fd, x[k]);
            xp[k] = x[k] + h;
            let pp = self.eval_phi(&xp, y)?;
            xp[k] = x[k] - h;
            let pm = self.eval_phi(&xp, y)?;
            xp[k] = x[k];
            dphi_dx.push((pp - pm) / (2.0 * h));
        }
        let mut dphi_dy = Vec::with_capacity(ny);
        let mut yp = y.clone();
        for a in 0..ny {
            let h = crate::linalg::fd_step(self.h_fd, y[a]);
            yp[a] = y[a] + h;
            let pp = self.eval_phi(x, &yp)?;
            yp[a] = y[a] - h;
            let pm = self.eval_phi(x, &yp)?;
            yp[a] = y[a];
            dphi_dy.push((pp - pm) / (2.0 * h));
        }

        let mut omega = Tensor3::zeros(nx, ny, ny);
        for b in 0..ny {
            let dir_x = phi.column(b);
            // D_X Phi[dir Phi e_b] + D_y Phi[dir e_b]
            let mut m = DMatrix::zeros(nx, ny);
            for k in 0..nx {
                m += &dphi_dx[k] * dir_x[k];
            }
            m += &dphi_dy[b];
            for i in 0..nx {
                for a in 0..ny {
                    omega.set(i, a, b, m[(i, a)]);
                }
            }
        }
        Ok(omega)
    }
}

/// Axis-aligned sampling box in `R^{n_x} x R^{n_y}`.
#[derive(Debug, Clone)]
pub struct SampleBox {
    pub x_lo: DVector<f64>,
    pub x_hi: DVector<f64>,
    pub y_lo: DVector<f64>,
    pub y_hi: DVector<f64>,
}

impl SampleBox {
    pub fn symmetric(dim_x: usize, dim_y: usize, x_half: f64, y_half: f64) -> Self {
        Self {
            x_lo: DVector::from_element(dim_x, -x_half),
            x_hi: DVector::from_element(dim_x, x_half),
            y_lo: DVector::from_element(dim_y, -y_half),
            y_hi: DVector::from_element(dim_y, y_half),
        }
    }
}

/// Bounds the assumption checker flags against.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionBounds {
    pub m_phi: f64,
    pub m_omega: f64,
    pub l_phi: f64,
    pub l_omega: f64,
    pub delta: f64,
}

impl Default for AssumptionBounds {
    fn default() -> Self {
        Self {
            m_phi: 10.0,
            m_omega: 10.0,
            l_phi: 10.0,
            l_omega: 10.0,
            delta: 1e-6,
        }
    }
}

/// Empirical estimates of the structural bounds over a sampled box.
///
/// Sampled maxima are lower bounds on the true suprema and the pairwise
/// ratios are lower bounds on the true Lipschitz constants; the report is a
/// falsification device, not a proof.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub n_samples: usize,
    pub max_phi_norm: f64,
    pub max_omega_norm: f64,
    pub lip_phi: f64,
    pub lip_omega: f64,
    pub min_sigma: f64,
    pub bounds: AssumptionBounds,
    pub phi_bounded: bool,
    pub omega_bounded: bool,
    pub phi_lipschitz: bool,
    pub omega_lipschitz: bool,
    pub jacobian_elliptic: bool,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.phi_bounded
            && self.omega_bounded
            && self.phi_lipschitz
            && self.omega_lipschitz
            && self.jacobian_elliptic
    }
}

/// Samples `n_samples` points in the box (seeded stream, fixed index order)
/// and reports empirical bounds for `Phi`, `Omega`, and the smallest
/// singular value of `D_X g`.
pub fn check_assumptions(
    model: &ConstraintModel,
    sample_box: &SampleBox,
    n_samples: usize,
    bounds: &AssumptionBounds,
    seed: u64,
) -> Result<AssumptionReport> {
    assert!(n_samples >= 2, "assumption check needs at least two samples");
    let mut rng = stream(seed, "constraint/assumptions");
    let (nx, ny) = (model.dim_x(), model.dim_y());

    let mut points = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x = DVector::from_fn(nx, |i, _| {
            rng.random_range(sample_box.x_lo[i]..=sample_box.x_hi[i])
        });
        let y = DVector::from_fn(ny, |i, _| {
            rng.random_range(sample_box.y_lo[i]..=sample_box.y_hi[i])
        });
        points.push((x, y));
    }

    let mut phis = Vec::with_capacity(n_samples);
    let mut omegas = Vec::with_capacity(n_samples);
    let mut max_phi_norm: f64 = 0.0;
    let mut max_omega_norm: f64 = 0.0;
    let mut min_sigma = f64::INFINITY;
    for (x, y) in &points {
        let phi = model.eval_phi(x, y)?;
        let omega = model.eval_omega(x, y)?;
        max_phi_norm = max_phi_norm.max(phi.norm());
        max_omega_norm = max_omega_norm.max(omega.norm());
        min_sigma = min_sigma.min(smallest_singular_value(&model.d_x_g(x, y)));
        phis.push(phi);
        omegas.push(omega);
    }

    let mut lip_phi: f64 = 0.0;
    let mut lip_omega: f64 = 0.0;
    for i in 0..n_samples {
        for j in (i + 1)..n_samples {
            let dist = (&points[i].0 - &points[j].0).norm() + (&points[i].1 - &points[j].1).norm();
            if dist < 1e-14 {
                continue;
            }
            lip_phi = lip_phi.max((&phis[i] - &phis[j]).norm() / dist);
            lip_omega = lip_omega.max(omegas[i].diff_norm(&omegas[j]) / dist);
        }
    }

    Ok(AssumptionReport {
        n_samples,
        max_phi_norm,
        max_omega_norm,
        lip_phi,
        lip_omega,
        min_sigma,
        bounds: bounds.clone(),
        phi_bounded: max_phi_norm <= bounds.m_phi,
        omega_bounded: max_omega_norm <= bounds.m_omega,
        phi_lipschitz: lip_phi <= bounds.l_phi,
        omega_lipschitz: lip_omega <= bounds.l_omega,
        jacobian_elliptic: min_sigma > bounds.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn dv(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn linear_phi_is_b_everywhere() {
        let b = dmatrix![2.0, 0.5; -1.0, 3.0];
        let model = ConstraintModel::linear(b.clone()).unwrap();
        let phi = model
            .eval_phi(&dv(&[0.3, -0.7]), &dv(&[1.1, 0.2]))
            .unwrap();
        assert_relative_eq!((phi - b).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn linear_omega_vanishes_exactly() {
        let model = ConstraintModel::linear(dmatrix![2.0; -1.0]).unwrap();
        let omega = model.eval_omega(&dv(&[0.5, 0.5]), &dv(&[0.3])).unwrap();
        assert_eq!(omega.norm(), 0.0);
    }

    #[test]
    fn shift_tanh_phi_matches_hand_derivative() {
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        // Phi(X, y) = -sech^2(y)
        let phi0 = model.eval_phi(&dv(&[0.4]), &dv(&[0.0])).unwrap();
        assert_relative_eq!(phi0[(0, 0)], -1.0, epsilon = 1e-14);
        let y = 0.8;
        let phi = model.eval_phi(&dv(&[0.4]), &dv(&[y])).unwrap();
        let sech2 = y.cosh().recip().powi(2);
        assert_relative_eq!(phi[(0, 0)], -sech2, epsilon = 1e-14);
    }

    #[test]
    fn warped_phi_matches_hand_derivative() {
        // g = X + 0.5 sin X + y: Phi = -1/(1 + 0.5 cos X); at X = 0, -2/3.
        let model =
            ConstraintModel::warped(0.5, Coupling::identity_linear(1)).unwrap();
        let phi = model.eval_phi(&dv(&[0.0]), &dv(&[0.7])).unwrap();
        assert_relative_eq!(phi[(0, 0)], -2.0 / 3.0, epsilon = 1e-14);
        let x = 1.3;
        let phi = model.eval_phi(&dv(&[x]), &dv(&[0.7])).unwrap();
        assert_relative_eq!(phi[(0, 0)], -1.0 / (1.0 + 0.5 * x.cos()), epsilon = 1e-14);
    }

    #[test]
    fn shift_tanh_omega_matches_scalar_calculus() {
        // Omega[v, w] = -tanh''(y) v w with tanh'' = -2 tanh sech^2.
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let omega0 = model.eval_omega(&dv(&[0.0]), &dv(&[0.0])).unwrap();
        assert_relative_eq!(omega0.get(0, 0, 0), 0.0, epsilon = 1e-14);

        let y: f64 = 0.5;
        let ddtanh = -2.0 * y.tanh() * y.cosh().recip().powi(2);
        let omega = model.eval_omega(&dv(&[0.0]), &dv(&[y])).unwrap();
        assert_relative_eq!(omega.get(0, 0, 0), -ddtanh, epsilon = 1e-13);
    }

    #[test]
    fn analytic_omega_matches_finite_differences() {
        let models = [
            ConstraintModel::linear(dmatrix![1.5]).unwrap(),
            ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap(),
            ConstraintModel::warped(0.5, Coupling::identity_tanh(1)).unwrap(),
            ConstraintModel::warped(
                -0.3,
                Coupling::Tanh {
                    c: dmatrix![1.0, 0.3; -0.2, 0.8],
                },
            )
            .unwrap(),
        ];
        let mut rng = stream(7, "test/omega-fd");
        for model in &models {
            for _ in 0..25 {
                let x = DVector::from_fn(model.dim_x(), |_, _| rng.random_range(-1.5..1.5));
                let y = DVector::from_fn(model.dim_y(), |_, _| rng.random_range(-1.5..1.5));
                let analytic = model.eval_omega(&x, &y).unwrap();
                let fd = model.eval_omega_fd(&x, &y).unwrap();
                let h = model.h_fd;
                assert!(
                    analytic.diff_norm(&fd) <= 50.0 * h * h,
                    "omega mismatch {} vs tol {}",
                    analytic.diff_norm(&fd),
                    50.0 * h * h
                );
            }
        }
    }

    #[test]
    fn phi_matches_implicit_function_finite_differences() {
        // Independent route: perturb y, solve g(X(y), y) = g0 for X by Newton,
        // and difference the implicit map X(y).
        let models = [
            ConstraintModel::linear(dmatrix![1.7]).unwrap(),
            ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap(),
            ConstraintModel::warped(0.5, Coupling::identity_linear(1)).unwrap(),
            ConstraintModel::warped(0.4, Coupling::identity_tanh(2)).unwrap(),
        ];
        let mut rng = stream(11, "test/phi-implicit");
        let h = 1e-5;
        for model in &models {
            for _ in 0..25 {
                let x = DVector::from_fn(model.dim_x(), |_, _| rng.random_range(-1.0..1.0));
                let y = DVector::from_fn(model.dim_y(), |_, _| rng.random_range(-1.0..1.0));
                let g0 = model.g(&x, &y);
                let solve_x = |yq: &DVector<f64>| -> DVector<f64> {
                    // Newton iteration on g(X, yq) = g0 starting from x.
                    let mut xq = x.clone();
                    for _ in 0..60 {
                        let res = model.g(&xq, yq) - &g0;
                        if res.norm() < 1e-14 {
                            break;
                        }
                        let lu = model.d_x_g(&xq, yq).lu();
                        let step = lu.solve(&res).unwrap();
                        xq -= step;
                    }
                    xq
                };
                let phi = model.eval_phi(&x, &y).unwrap();
                for a in 0..model.dim_y() {
                    let mut yp = y.clone();
                    yp[a] = y[a] + h;
                    let xp = solve_x(&yp);
                    yp[a] = y[a] - h;
                    let xm = solve_x(&yp);
                    let col = (xp - xm) / (2.0 * h);
                    let err = (phi.column(a) - &col).norm();
                    assert!(err <= 10.0 * h * h + 1e-12, "column {a} differs by {err}");
                }
            }
        }
    }

    #[test]
    fn phi_solves_jacobian_identity() {
        // D_X g * Phi + D_y g = 0 up to factorization roundoff.
        let models = [
            ConstraintModel::linear(dmatrix![2.0, 1.0; 0.0, -1.0]).unwrap(),
            ConstraintModel::warped(0.6, Coupling::identity_tanh(2)).unwrap(),
        ];
        let mut rng = stream(3, "test/phi-identity");
        for model in &models {
            for _ in 0..100 {
                let x = DVector::from_fn(model.dim_x(), |_, _| rng.random_range(-2.0..2.0));
                let y = DVector::from_fn(model.dim_y(), |_, _| rng.random_range(-2.0..2.0));
                let phi = model.eval_phi(&x, &y).unwrap();
                let res = model.d_x_g(&x, &y) * &phi + model.d_y_g(&x, &y);
                let scale = model.d_y_g(&x, &y).norm().max(1.0);
                assert!(res.norm() / scale <= 1e-10);
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences_of_g() {
        let model = ConstraintModel::warped(0.5, Coupling::identity_tanh(2)).unwrap();
        let mut rng = stream(5, "test/jac-fd");
        let h = 1e-5;
        for _ in 0..50 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-1.5..1.5));
            let y = DVector::from_fn(2, |_, _| rng.random_range(-1.5..1.5));
            let jx = crate::linalg::central_jacobian(|xa| model.g(xa, &y), &x, 2, h);
            let jy = crate::linalg::central_jacobian(|ya| model.g(&x, ya), &y, 2, h);
            assert!((jx - model.d_x_g(&x, &y)).norm() <= 10.0 * h * h);
            assert!((jy - model.d_y_g(&x, &y)).norm() <= 10.0 * h * h);
        }
    }

    #[test]
    fn rank_guard_reports_singularity() {
        // With an absolute guard of 0.6, the warped model at X = pi has
        // sigma_min = 0.5 and must be rejected.
        let model = ConstraintModel::warped(0.5, Coupling::identity_linear(1))
            .unwrap()
            .with_delta_abs(0.6);
        let err = model
            .eval_phi(&dv(&[std::f64::consts::PI]), &dv(&[0.0]))
            .unwrap_err();
        match err {
            CoreError::SingularConstraintJacobian { sigma_min, .. } => {
                assert_relative_eq!(sigma_min, 0.5, epsilon = 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn assumption_report_linear_model() {
        let model = ConstraintModel::linear(dmatrix![2.0]).unwrap();
        let sample_box = SampleBox::symmetric(1, 1, 3.0, 3.0);
        let report =
            check_assumptions(&model, &sample_box, 200, &AssumptionBounds::default(), 1).unwrap();
        assert_relative_eq!(report.max_phi_norm, 2.0, epsilon = 1e-12);
        assert_eq!(report.lip_phi, 0.0);
        assert_eq!(report.max_omega_norm, 0.0);
        assert!(report.all_hold());
    }

    #[test]
    fn assumption_report_shift_tanh_bounds() {
        // sup |Phi| = sup sech^2 = 1; Lip(Phi) <= sup |tanh''| = 4 / (3 sqrt 3).
        let model = ConstraintModel::shift(Coupling::identity_tanh(1)).unwrap();
        let sample_box = SampleBox::symmetric(1, 1, 1.0, 3.0);
        let report =
            check_assumptions(&model, &sample_box, 1000, &AssumptionBounds::default(), 2).unwrap();
        assert!(report.max_phi_norm <= 1.0 + 1e-12);
        let sup_dd_tanh = 4.0 / (3.0 * 3.0f64.sqrt());
        // Dense-scan oracle for sup |tanh''| on the box.
        let scan_max = (0..20000)
            .map(|k| -3.0 + 6.0 * (k as f64) / 19999.0)
            .map(|y: f64| (-2.0 * y.tanh() * y.cosh().recip().powi(2)).abs())
            .fold(0.0, f64::max);
        assert_relative_eq!(scan_max, sup_dd_tanh, epsilon = 1e-6);
        assert!(report.lip_phi <= 0.77);
        assert!(report.lip_phi > 0.1, "sampled Lipschitz ratio unexpectedly small");
    }

    #[test]
    fn assumption_report_warped_min_sigma() {
        // min over X of 1 + 0.5 cos X = 0.5, attained at X = pi.
        let model = ConstraintModel::warped(0.5, Coupling::identity_linear(1)).unwrap();
        let scan_min = (0..20000)
            .map(|k| 6.0 * (k as f64) / 19999.0)
            .map(|x: f64| 1.0 + 0.5 * x.cos())
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(scan_min, 0.5, epsilon = 1e-6);
        let sample_box = SampleBox {
            x_lo: dv(&[0.0]),
            x_hi: dv(&[6.0]),
            y_lo: dv(&[-1.0]),
            y_hi: dv(&[1.0]),
        };
        let report =
            check_assumptions(&model, &sample_box, 2000, &AssumptionBounds::default(), 3).unwrap();
        assert!(report.min_sigma >= 0.5 - 1e-12);
        assert!(report.min_sigma <= 0.52, "sampling should approach the scan minimum");
    }

    #[test]
    fn check_assumptions_deterministic_for_fixed_seed() {
        let model = ConstraintModel::warped(0.3, Coupling::identity_tanh(1)).unwrap();
        let sample_box = SampleBox::symmetric(1, 1, 2.0, 2.0);
        let a = check_assumptions(&model, &sample_box, 64, &AssumptionBounds::default(), 9).unwrap();
        let b = check_assumptions(&model, &sample_box, 64, &AssumptionBounds::default(), 9).unwrap();
        assert_eq!(a.max_phi_norm.to_bits(), b.max_phi_norm.to_bits());
        assert_eq!(a.lip_phi.to_bits(), b.lip_phi.to_bits());
        assert_eq!(a.min_sigma.to_bits(), b.min_sigma.to_bits());
    }
}
