use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use super::gaussian::{log_normal_1d, mat_vec, CholGaussian};
use super::linear_gaussian::{constant_velocity, default_tracking_prior};
use super::StateSpaceModel;
use crate::error::{Result, SmcError};
use crate::sampling::RngStream;
use crate::State;
use rand_distr::{Distribution, StandardNormal};

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Constant-velocity target `[p_x, v_x, p_y, v_y]` observed through range
/// and bearing, `y = (|p|, atan2(p_y, p_x)) + v`, `v ~ N(0, diag(s_rho^2, s_theta^2))`.
///
/// Bearing residuals are wrapped before the Gaussian density is evaluated,
/// so the likelihood is `2 pi` periodic in the measured bearing.
#[derive(Debug, Clone)]
pub struct RangeBearingModel {
    f: DMatrix<f64>,
    q: CholGaussian,
    init_mean: DVector<f64>,
    init: CholGaussian,
    pub sigma_rho: f64,
    pub sigma_theta: f64,
}

impl RangeBearingModel {
    pub fn new(tau: f64, sigma_q2: f64, sigma_rho: f64, sigma_theta: f64) -> Result<Self> {
        if !(sigma_rho > 0.0 && sigma_theta > 0.0 && sigma_q2 > 0.0 && tau > 0.0) {
            return Err(SmcError::InvalidArgument(
                "range-bearing parameters must be positive".into(),
            ));
        }
        let (f, q) = constant_velocity(tau, sigma_q2);
        let (m0, p0) = default_tracking_prior();
        Self::with_prior(f, q, m0, p0, sigma_rho, sigma_theta)
    }

    pub fn with_prior(
        f: DMatrix<f64>,
        q: DMatrix<f64>,
        init_mean: DVector<f64>,
        init_cov: DMatrix<f64>,
        sigma_rho: f64,
        sigma_theta: f64,
    ) -> Result<Self> {
        if f.shape() != (4, 4) || init_mean.len() != 4 {
            return Err(SmcError::InvalidArgument(
                "range-bearing state is 4-D".into(),
            ));
        }
        Ok(RangeBearingModel {
            f,
            q: CholGaussian::new(&q)?,
            init_mean,
            init: CholGaussian::new(&init_cov)?,
            sigma_rho,
            sigma_theta,
        })
    }

    /// `sigma_Q^2 = 10`, `sigma_rho = 0.25`, `sigma_theta = pi / 720`.
    pub fn moderate() -> Self {
        Self::new(1.0, 10.0, 0.25, PI / 720.0).expect("valid parameters")
    }

    /// `sigma_Q^2 = 10`, `sigma_rho = 0.05`, `sigma_theta = pi / 3600`.
    pub fn informative() -> Self {
        Self::new(1.0, 10.0, 0.05, PI / 3600.0).expect("valid parameters")
    }

    /// Noise-free measurement `(range, bearing)` of a state.
    pub fn measure(x: &State) -> (f64, f64) {
        let (px, py) = (x[0], x[2]);
        (px.hypot(py), py.atan2(px))
    }
}

impl StateSpaceModel for RangeBearingModel {
    fn state_dim(&self) -> usize {
        4
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn sample_initial(&self, rng: &mut RngStream) -> State {
        let mut x = self.init_mean.clone();
        self.init.add_noise(x.as_mut_slice(), rng);
        x
    }

    fn log_initial(&self, x: &State) -> f64 {
        let mut r: Vec<f64> = (0..4).map(|i| x[i] - self.init_mean[i]).collect();
        self.init.log_pdf_residual(&mut r)
    }

    fn sample_transition(&self, prev: &State, rng: &mut RngStream) -> State {
        let mut x = State::zeros(4);
        mat_vec(&self.f, prev.as_slice(), x.as_mut_slice());
        self.q.add_noise(x.as_mut_slice(), rng);
        x
    }

    fn log_transition(&self, x: &State, prev: &State) -> f64 {
        let mut r = [0.0; 4];
        mat_vec(&self.f, prev.as_slice(), &mut r);
        for i in 0..4 {
            r[i] = x[i] - r[i];
        }
        self.q.log_pdf_residual(&mut r)
    }

    fn sample_observation(&self, x: &State, rng: &mut RngStream) -> State {
        let (rho, theta) = Self::measure(x);
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        State::from_row_slice(&[
            rho + self.sigma_rho * z1,
            wrap_angle(theta + self.sigma_theta * z2),
        ])
    }

    fn log_likelihood(&self, y: &State, x: &State) -> f64 {
        let (rho, theta) = Self::measure(x);
        log_normal_1d(y[0], rho, self.sigma_rho * self.sigma_rho)
            + log_normal_1d(
                wrap_angle(y[1] - theta),
                0.0,
                self.sigma_theta * self.sigma_theta,
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn geometry_at_unit_x() {
        let x = State::from_row_slice(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(RangeBearingModel::measure(&x), (1.0, 0.0));
        let x = State::from_row_slice(&[-1.0, 0.0, -1.0, 0.0]);
        let (r, b) = RangeBearingModel::measure(&x);
        assert_abs_diff_eq!(r, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(b, -3.0 * PI / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(0.1 + 4.0 * PI), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn likelihood_is_periodic_in_bearing() {
        let m = RangeBearingModel::moderate();
        let mut rng = RngStream::new(6, 0);
        for _ in 0..50 {
            let x = m.sample_initial(&mut rng);
            let mut y = m.sample_observation(&x, &mut rng);
            y[1] += rng.random_range(-0.01..0.01);
            let a = m.log_likelihood(&y, &x);
            let mut y2 = y.clone();
            y2[1] += 2.0 * PI;
            assert_abs_diff_eq!(a, m.log_likelihood(&y2, &x), epsilon = 1e-6);
        }
    }

    #[test]
    fn transition_covariance_is_scaled_block() {
        let m = RangeBearingModel::moderate();
        let q = m.q.covariance();
        assert_abs_diff_eq!(q[(0, 0)], 10.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[(0, 1)], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[(3, 3)], 10.0, epsilon = 1e-12);
        assert_eq!(q[(0, 2)], 0.0);
    }
}
