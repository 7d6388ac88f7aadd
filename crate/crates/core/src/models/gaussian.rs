use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SmcError};
use crate::sampling::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Zero-mean Gaussian stored through the lower Cholesky factor of its
/// covariance. Works on plain slices so callers can evaluate sub-blocks of
/// a larger state without allocating.
#[derive(Debug, Clone)]
pub struct CholGaussian {
    dim: usize,
    /// row-major lower triangle, full square storage
    lower: Vec<f64>,
    log_norm: f64,
    cov: DMatrix<f64>,
}

impl CholGaussian {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if cov.ncols() != dim {
            return Err(SmcError::InvalidArgument(
                "covariance must be square".into(),
            ));
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let chol = sym.clone().cholesky().ok_or_else(|| {
            SmcError::InvalidArgument("covariance is not positive definite".into())
        })?;
        let l = chol.l();
        let mut lower = vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for i in 0..dim {
            for j in 0..=i {
                lower[i * dim + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        Ok(CholGaussian {
            dim,
            lower,
            log_norm: -0.5 * (dim as f64 * LN_2PI + log_det),
            cov: sym,
        })
    }

    pub fn scalar(variance: f64) -> Result<Self> {
        Self::new(&DMatrix::from_element(1, 1, variance))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Log-density of the residual `x - mean`. The buffer is overwritten
    /// with the whitened residual.
    pub fn log_pdf_residual(&self, residual: &mut [f64]) -> f64 {
        debug_assert_eq!(residual.len(), self.dim);
        let d = self.dim;
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let mut v = residual[i];
            for (lij, zj) in row.iter().zip(residual.iter()) {
                v -= lij * zj;
            }
            v /= self.lower[i * d + i];
            residual[i] = v;
            quad += v * v;
        }
        self.log_norm - 0.5 * quad
    }

    /// Adds `L z` with `z` standard normal to `out`.
    pub fn add_noise(&self, out: &mut [f64], rng: &mut RngStream) {
        let d = self.dim;
        let mut z = [0.0f64; 8];
        let mut z_heap;
        let z: &mut [f64] = if d <= 8 {
            &mut z[..d]
        } else {
            z_heap = vec![0.0; d];
            &mut z_heap
        };
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i + 1];
            out[i] += row.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Log-density of `N(x; mean, variance)` in one dimension.
pub fn log_normal_1d(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + variance.ln() + r * r / variance)
}

/// `out = a * x` for a dense matrix and slices.
pub(crate) fn mat_vec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, xj) in x.iter().enumerate() {
            s += a[(i, j)] * xj;
        }
        *o = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matches_closed_form_in_2d() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let g = CholGaussian::new(&cov).unwrap();
        let x = [0.7, -1.2];
        let inv = cov.clone().try_inverse().unwrap();
        let v = nalgebra::DVector::from_row_slice(&x);
        let quad = (v.transpose() * inv * &v)[(0, 0)];
        let expect = -0.5 * (2.0 * LN_2PI + cov.determinant().ln() + quad);
        let mut r = x;
        assert_abs_diff_eq!(g.log_pdf_residual(&mut r), expect, epsilon = 1e-12);
    }

    #[test]
    fn sample_covariance_matches() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let g = CholGaussian::new(&cov).unwrap();
        let mut rng = RngStream::new(1, 0);
        let n = 100_000;
        let mut s = [0.0; 3];
        for _ in 0..n {
            let mut x = [0.0, 0.0];
            g.add_noise(&mut x, &mut rng);
            s[0] += x[0] * x[0];
            s[1] += x[0] * x[1];
            s[2] += x[1] * x[1];
        }
        assert_abs_diff_eq!(s[0] / n as f64, 2.0, epsilon = 0.05);
        assert_abs_diff_eq!(s[1] / n as f64, 0.6, epsilon = 0.03);
        assert_abs_diff_eq!(s[2] / n as f64, 1.0, epsilon = 0.03);
    }

    #[test]
    fn rejects_indefinite() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CholGaussian::new(&cov).is_err());
    }
}
