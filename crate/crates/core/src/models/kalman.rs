use nalgebra::{DMatrix, DVector};

use super::LinearGaussianSSM;
use crate::error::{Result, SmcError};
use crate::State;

/// Exact filtering moments `E(x_k | y_{0:k})` and `cov(x_k | y_{0:k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl KalmanEstimate {
    /// `sqrt(trace(cov))`, the root posterior mean squared error.
    pub fn posterior_std(&self) -> f64 {
        self.cov.trace().sqrt()
    }
}

/// Predict/update recursion over `ys[0..]`; step 0 updates the initial prior.
pub fn kalman_filter(model: &LinearGaussianSSM, ys: &[State]) -> Result<Vec<KalmanEstimate>> {
    let f = model.transition_matrix();
    let q = model.process_covariance();
    let h = model.observation_matrix();
    let r = model.measurement_covariance();
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);

    let mut mean = model.initial_mean();
    let mut cov = model.initial_covariance();
    let mut out = Vec::with_capacity(ys.len());
    for (k, y) in ys.iter().enumerate() {
        if k > 0 {
            mean = &f * &mean;
            cov = &f * &cov * f.transpose() + &q;
        }
        let s = &h * &cov * h.transpose() + &r;
        let s_chol = s.cholesky().ok_or(SmcError::CovarianceNotPd { step: k })?;
        let gain = (s_chol.solve(&(&h * &cov))).transpose();
        mean = &mean + &gain * (y - &h * &mean);
        // Joseph form keeps the update symmetric and positive semi-definite
        let a = &eye - &gain * &h;
        cov = &a * &cov * a.transpose() + &gain * &r * gain.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        if cov.clone().cholesky().is_none() {
            return Err(SmcError::CovarianceNotPd { step: k });
        }
        out.push(KalmanEstimate {
            mean: mean.clone(),
            cov: cov.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate, StateSpaceModel};
    use crate::sampling::RngStream;
    use approx::assert_abs_diff_eq;

    fn scalar_model(q: f64, r: f64, p0: f64) -> LinearGaussianSSM {
        let one = DMatrix::from_element(1, 1, 1.0);
        LinearGaussianSSM::new(
            one.clone(),
            DMatrix::from_element(1, 1, q),
            one,
            DMatrix::from_element(1, 1, r),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, p0),
        )
        .unwrap()
    }

    #[test]
    fn static_reduction_matches_conjugate_formula() {
        let m = scalar_model(1e-300, 3.0, 10.0);
        let y = State::from_element(1, 2.6);
        let est = kalman_filter(&m, &[y]).unwrap();
        assert_abs_diff_eq!(est[0].mean[0], 10.0 * 2.6 / 13.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est[0].cov[(0, 0)], 30.0 / 13.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_observations_pin_the_mean() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let m = LinearGaussianSSM::new(
            eye.clone(),
            eye.clone(),
            eye.clone(),
            &eye * 1e-12,
            DVector::zeros(2),
            &eye * 5.0,
        )
        .unwrap();
        let tr = simulate(&m, 5, &mut RngStream::new(1, 1));
        for (est, y) in kalman_filter(&m, &tr.observations)
            .unwrap()
            .iter()
            .zip(&tr.observations)
        {
            assert_abs_diff_eq!((&est.mean - y).norm(), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn uninformative_observations_keep_the_prior_mean() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let m0 = DVector::from_row_slice(&[3.0, -1.0]);
        let m = LinearGaussianSSM::new(
            eye.clone(),
            &eye * 0.1,
            eye.clone(),
            &eye * 1e12,
            m0.clone(),
            eye.clone(),
        )
        .unwrap();
        let ys = vec![State::from_row_slice(&[50.0, 50.0]); 4];
        for est in kalman_filter(&m, &ys).unwrap() {
            let rel = (&est.mean - &m0).norm() / m0.norm();
            assert!(rel < 1e-6, "{rel}");
        }
    }

    #[test]
    fn covariances_stay_symmetric() {
        let m = LinearGaussianSSM::high_dimensional(2).unwrap();
        let tr = simulate(&m, 30, &mut RngStream::new(2, 0));
        let est = kalman_filter(&m, &tr.observations).unwrap();
        assert_eq!(est.len(), 31);
        for e in &est {
            assert_abs_diff_eq!((&e.cov - e.cov.transpose()).norm(), 0.0, epsilon = 1e-12);
            assert!(e.posterior_std() > 0.0);
        }
        assert_eq!(m.state_dim(), 8);
    }
}
