//! Small dense linear-algebra helpers shared by the dynamics and constraint
//! modules: third-order tensors, guarded factorizations, and central
//! finite differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Dense third-order tensor with shape `(n0, n1, n2)`, stored flat in
/// row-major order (`i2` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n0: usize, n1: usize, n2: usize) -> Self {
        Self {
            shape: (n0, n1, n2),
            data: vec![0.0; n0 * n1 * n2],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    #[inline]
    fn offset(&self, i0: usize, i1: usize, i2: usize) -> usize {
        debug_assert!(i0 < self.shape.0 && i1 < self.shape.1 && i2 < self.shape.2);
        (i0 * self.shape.1 + i1) * self.shape.2 + i2
    }

    #[inline]
    pub fn get(&self, i0: usize, i1: usize, i2: usize) -> f64 {
        self.data[self.offset(i0, i1, i2)]
    }

    #[inline]
    pub fn set(&mut self, i0: usize, i1: usize, i2: usize, value: f64) {
        let k = self.offset(i0, i1, i2);
        self.data[k] = value;
    }

    /// Contracts the last two indices against `a` and `b`:
    /// `out[i0] = sum_{i1,i2} T[i0,i1,i2] a[i1] b[i2]`.
    pub fn contract_last2(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let (n0, n1, n2) = self.shape;
        assert_eq!(a.len(), n1, "tensor contraction: first vector length");
        assert_eq!(b.len(), n2, "tensor contraction: second vector length");
        let mut out = DVector::zeros(n0);
        for i0 in 0..n0 {
            let mut acc = 0.0;
            for i1 in 0..n1 {
                let base = (i0 * n1 + i1) * n2;
                let mut inner = 0.0;
                for i2 in 0..n2 {
                    inner += self.data[base + i2] * b[i2];
                }
                acc += a[i1] * inner;
            }
            out[i0] = acc;
        }
        out
    }

    /// Contracts the middle index: `out[i0,i2] = sum_{i1} T[i0,i1,i2] d[i1]`.
    pub fn contract_mid(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let (n0, n1, n2) = self.shape;
        assert_eq!(d.len(), n1, "tensor contraction: direction length");
        let mut out = DMatrix::zeros(n0, n2);
        for i0 in 0..n0 {
            for i2 in 0..n2 {
                let mut acc = 0.0;
                for i1 in 0..n1 {
                    acc += self.get(i0, i1, i2) * d[i1];
                }
                out[(i0, i2)] = acc;
            }
        }
        out
    }

    /// Contracts the last index: `out[i0,i1] = sum_{i2} T[i0,i1,i2] d[i2]`.
    pub fn contract_last(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let (n0, n1, n2) = self.shape;
        assert_eq!(d.len(), n2, "tensor contraction: direction length");
        let mut out = DMatrix::zeros(n0, n1);
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let base = (i0 * n1 + i1) * n2;
                let mut acc = 0.0;
                for i2 in 0..n2 {
                    acc += self.data[base + i2] * d[i2];
                }
                out[(i0, i1)] = acc;
            }
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Componentwise difference norm, used by Lipschitz estimators.
    pub fn diff_norm(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Smallest singular value of a dense matrix.
///
/// The 1x1 case is resolved without an SVD since it sits on the hot path of
/// every constraint evaluation in scalar models.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Solves the symmetric positive-definite system `m x = rhs` by Cholesky
/// factorization.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = m.clone().cholesky().ok_or(CoreError::NonSpdMass)?;
    Ok(chol.solve(rhs))
}

/// Central finite-difference step for a coordinate of magnitude `x`:
/// relative step `h_rel`, floored at `h_rel` for coordinates near zero.
#[inline]
pub fn fd_step(h_rel: f64, x: f64) -> f64 {
    h_rel * x.abs().max(1.0)
}

/// Central finite-difference Jacobian of `f` at `x` with relative step `h`.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, out_dim: usize, h_rel: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(out_dim, n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..n {
        let h = fd_step(h_rel, x[j]);
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let fp = f(&xp);
        let fm = f(&xm);
        for i in 0..out_dim {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    jac
}
