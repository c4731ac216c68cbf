//! Weighted point clouds: probability measures on particle space represented
//! as support points with nonnegative weights summing to one.
//!
//! Clouds serve both as empirical measures of particle configurations and as
//! quadrature discretizations of an initial distribution. Quantile clouds
//! place one node at each midpoint quantile, so their weights are uniform.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution as _;

use crate::error::{CoreError, Result};

/// Tolerance on the total mass of a cloud.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointCloud {
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl WeightedPointCloud {
    pub fn new(points: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(CoreError::InvalidCloud("cloud must be nonempty".into()));
        }
        if points.len() != weights.len() {
            return Err(CoreError::InvalidCloud(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(CoreError::InvalidCloud("inconsistent point dimensions".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(CoreError::InvalidCloud("weights must be nonnegative and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CoreError::InvalidCloud(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { points, weights })
    }

    /// Equal-weight empirical measure of a particle configuration.
    pub fn empirical(points: Vec<DVector<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(CoreError::InvalidCloud("cloud must be nonempty".into()));
        }
        let w = 1.0 / n as f64;
        Self::new(points, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn has_uniform_weights(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| (w - w0).abs() <= WEIGHT_SUM_TOL)
    }

    /// First-moment constant `sum_k w_k (1 + ||x_k||)`.
    pub fn c_mu(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * (1.0 + p.norm()))
            .sum()
    }

    /// Integrates a scalar function against the cloud.
    pub fn pair<F: Fn(&DVector<f64>) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    /// The cloud carried to new support points with unchanged weights
    /// (pushforward of an atomic measure moves atoms, never mass).
    pub fn pushforward(&self, new_points: Vec<DVector<f64>>) -> Result<Self> {
        if new_points.len() != self.points.len() {
            return Err(CoreError::InvalidCloud(
                "pushforward must preserve the number of atoms".into(),
            ));
        }
        Ok(Self {
            points: new_points,
            weights: self.weights.clone(),
        })
    }

    /// Translates every support point by `shift`.
    pub fn translate(&self, shift: &DVector<f64>) -> Self {
        Self {
            points: self.points.iter().map(|p| p + shift).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Named initial particle distributions, componentwise on a box.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// Uniform on the axis-aligned box `[lo, hi]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Componentwise normal truncated to `[lo, hi]`.
    GaussianBox {
        mean: Vec<f64>,
        std: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl Distribution {
    pub fn uniform_1d(lo: f64, hi: f64) -> Self {
        Distribution::UniformBox {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Distribution::UniformBox { lo, .. } => lo.len(),
            Distribution::GaussianBox { mean, .. } => mean.len(),
        }
    }

    fn draw_component(&self, i: usize, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            Distribution::UniformBox { lo, hi } => {
                if lo[i] == hi[i] {
                    // Degenerate edge: a point mass.
                    lo[i]
                } else {
                    rng.random_range(lo[i]..hi[i])
                }
            }
            Distribution::GaussianBox { mean, std, lo, hi } => {
                // Rejection against the truncation box; the acceptance region
                // always has positive mass for validated configs.
                loop {
                    let z: f64 = rand_distr::StandardNormal.sample(rng);
                    let x = mean[i] + std[i] * z;
                    if x >= lo[i] && x <= hi[i] {
                        return x;
                    }
                }
            }
        }
    }

    /// Draws `n` iid samples as an equal-weight cloud.
    pub fn sample(&self, n: usize, rng: &mut ChaCha12Rng) -> Result<WeightedPointCloud> {
        let dim = self.dim();
        let points = (0..n)
            .map(|_| DVector::from_fn(dim, |i, _| self.draw_component(i, rng)))
            .collect();
        WeightedPointCloud::empirical(points)
    }

    /// Midpoint-quantile of one component at probability `p`.
    fn quantile_component(&self, i: usize, p: f64) -> f64 {
        match self {
            Distribution::UniformBox { lo, hi } => lo[i] + (hi[i] - lo[i]) * p,
            Distribution::GaussianBox { mean, std, lo, hi } => {
                let a = norm_cdf((lo[i] - mean[i]) / std[i]);
                let b = norm_cdf((hi[i] - mean[i]) / std[i]);
                mean[i] + std[i] * inv_norm_cdf(a + p * (b - a))
            }
        }
    }

    /// Deterministic quantile cloud: `m` midpoint-quantile nodes per
    /// dimension on a tensor grid, uniform weights. Supports 1D and 2D.
    pub fn quantile_cloud(&self, m_per_dim: usize) -> Result<WeightedPointCloud> {
        let dim = self.dim();
        if dim > 2 {
            return Err(CoreError::InvalidCloud(
                "quantile clouds are provided for 1D and 2D distributions".into(),
            ));
        }
        let axis = |i: usize| -> Vec<f64> {
            (0..m_per_dim)
                .map(|k| self.quantile_component(i, (k as f64 + 0.5) / m_per_dim as f64))
                .collect()
        };
        let points: Vec<DVector<f64>> = if dim == 1 {
            axis(0).into_iter().map(|x| DVector::from_vec(vec![x])).collect()
        } else {
            let (a0, a1) = (axis(0), axis(1));
            a0.iter()
                .flat_map(|&x0| a1.iter().map(move |&x1| DVector::from_vec(vec![x0, x1])))
                .collect()
        };
        WeightedPointCloud::empirical(points)
    }
}

/// Standard normal inverse CDF (Acklam's rational approximation, relative
/// error below 1.2e-9; ample for quadrature node placement).
pub fn inv_norm_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability must be in (0, 1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inv_norm_cdf(1.0 - p)
    }
}

/// Standard normal CDF, computed by bisecting the inverse so both directions
/// share one approximation.
pub fn norm_cdf(x: f64) -> f64 {
    if x <= -40.0 {
        return 0.0;
    }
    if x >= 40.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (1e-300, 1.0 - 1e-16);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if inv_norm_cdf(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn dv(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(WeightedPointCloud::new(vec![dv(&[0.0])], vec![0.5]).is_err());
        assert!(WeightedPointCloud::new(vec![dv(&[0.0])], vec![-1.0, 2.0]).is_err());
        assert!(WeightedPointCloud::new(vec![], vec![]).is_err());
    }

    #[test]
    fn empirical_weights_are_uniform() {
        let cloud = WeightedPointCloud::empirical(vec![dv(&[0.0]), dv(&[1.0])]).unwrap();
        assert!(cloud.has_uniform_weights());
        assert_relative_eq!(cloud.c_mu(), 0.5 * 1.0 + 0.5 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn quantile_cloud_uniform_1d() {
        let dist = Distribution::uniform_1d(-1.0, 1.0);
        let cloud = dist.quantile_cloud(4).unwrap();
        let xs: Vec<f64> = cloud.points().iter().map(|p| p[0]).collect();
        assert_relative_eq!(xs[0], -0.75, epsilon = 1e-15);
        assert_relative_eq!(xs[3], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn quantile_cloud_2d_tensor_grid() {
        let dist = Distribution::UniformBox {
            lo: vec![0.0, -1.0],
            hi: vec![1.0, 1.0],
        };
        let cloud = dist.quantile_cloud(3).unwrap();
        assert_eq!(cloud.len(), 9);
        assert!(cloud.has_uniform_weights());
    }

    #[test]
    fn inverse_normal_cdf_round_trips() {
        for &p in &[0.001, 0.01, 0.2, 0.5, 0.7, 0.99, 0.9999] {
            let x = inv_norm_cdf(p);
            assert_relative_eq!(norm_cdf(x), p, epsilon = 1e-9);
        }
        assert_relative_eq!(inv_norm_cdf(0.5), 0.0, epsilon = 1e-12);
        // Classic reference value for the 97.5% quantile.
        assert_relative_eq!(inv_norm_cdf(0.975), 1.959963984540054, epsilon = 1e-8);
    }

    #[test]
    fn gaussian_samples_respect_truncation() {
        let dist = Distribution::GaussianBox {
            mean: vec![0.0],
            std: vec![2.0],
            lo: vec![-1.0],
            hi: vec![1.5],
        };
        let mut rng = stream(5, "test/gauss");
        let cloud = dist.sample(500, &mut rng).unwrap();
        for p in cloud.points() {
            assert!(p[0] >= -1.0 && p[0] <= 1.5);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let dist = Distribution::uniform_1d(-1.0, 1.0);
        let a = dist.sample(32, &mut stream(9, "sampling")).unwrap();
        let b = dist.sample(32, &mut stream(9, "sampling")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_gaussian_nodes_are_monotone_and_bounded() {
        let dist = Distribution::GaussianBox {
            mean: vec![0.5],
            std: vec![1.0],
            lo: vec![-2.0],
            hi: vec![3.0],
        };
        let cloud = dist.quantile_cloud(64).unwrap();
        let xs: Vec<f64> = cloud.points().iter().map(|p| p[0]).collect();
        for w in xs.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(xs[0] >= -2.0 && xs[63] <= 3.0);
    }
}
