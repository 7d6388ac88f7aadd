use rand_distr::{Distribution, StandardNormal};

use super::gaussian::log_normal_1d;
use super::{ClosedForms, StateSpaceModel};
use crate::error::{Result, SmcError};
use crate::sampling::RngStream;
use crate::State;

/// Scalar ARCH(1) volatility model:
///
/// `x_k ~ N(0, beta0 + beta1 x_{k-1}^2)`, `y_k ~ N(x_k, R)`.
///
/// The initial state is drawn as if `x_{-1} = 0`, i.e. `x_0 ~ N(0, beta0)`.
/// Both the predictive likelihood and the optimal proposal are Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchModel {
    pub beta0: f64,
    pub beta1: f64,
    pub r: f64,
}

impl ArchModel {
    pub fn new(beta0: f64, beta1: f64, r: f64) -> Result<Self> {
        if !(beta0 > 0.0 && beta1 > 0.0 && r > 0.0) {
            return Err(SmcError::InvalidArgument(format!(
                "ARCH parameters must be positive (beta0={beta0}, beta1={beta1}, R={r})"
            )));
        }
        Ok(ArchModel { beta0, beta1, r })
    }

    /// `R = 1`, `beta0 = 3`, `beta1 = 0.75`.
    pub fn standard() -> Self {
        ArchModel {
            beta0: 3.0,
            beta1: 0.75,
            r: 1.0,
        }
    }

    /// `beta0 + beta1 x_prev^2`.
    pub fn transition_variance(&self, x_prev: f64) -> f64 {
        self.beta0 + self.beta1 * x_prev * x_prev
    }

    /// `log N(y; 0, R + beta0 + beta1 x_prev^2)`.
    pub fn predictive_loglik(&self, y: f64, x_prev: f64) -> f64 {
        log_normal_1d(y, 0.0, self.r + self.transition_variance(x_prev))
    }

    /// Mean and variance of `p(x_k | x_prev, y)`.
    pub fn optimal_moments(&self, y: f64, x_prev: f64) -> (f64, f64) {
        let v = self.transition_variance(x_prev);
        let s = self.r + v;
        (v / s * y, self.r * v / s)
    }

    pub fn sample_optimal_scalar(&self, y: f64, x_prev: f64, rng: &mut RngStream) -> f64 {
        let (mean, var) = self.optimal_moments(y, x_prev);
        let z: f64 = StandardNormal.sample(rng);
        mean + var.sqrt() * z
    }

    pub fn log_optimal_scalar(&self, x: f64, y: f64, x_prev: f64) -> f64 {
        let (mean, var) = self.optimal_moments(y, x_prev);
        log_normal_1d(x, mean, var)
    }
}

fn scalar(x: &State) -> f64 {
    x[0]
}

fn prev_scalar(prev: Option<&State>) -> f64 {
    prev.map_or(0.0, scalar)
}

impl StateSpaceModel for ArchModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut RngStream) -> State {
        let z: f64 = StandardNormal.sample(rng);
        State::from_element(1, self.beta0.sqrt() * z)
    }

    fn log_initial(&self, x: &State) -> f64 {
        log_normal_1d(scalar(x), 0.0, self.beta0)
    }

    fn sample_transition(&self, prev: &State, rng: &mut RngStream) -> State {
        let z: f64 = StandardNormal.sample(rng);
        State::from_element(1, self.transition_variance(scalar(prev)).sqrt() * z)
    }

    fn log_transition(&self, x: &State, prev: &State) -> f64 {
        log_normal_1d(scalar(x), 0.0, self.transition_variance(scalar(prev)))
    }

    fn sample_observation(&self, x: &State, rng: &mut RngStream) -> State {
        let z: f64 = StandardNormal.sample(rng);
        State::from_element(1, scalar(x) + self.r.sqrt() * z)
    }

    fn log_likelihood(&self, y: &State, x: &State) -> f64 {
        log_normal_1d(scalar(y), scalar(x), self.r)
    }

    fn closed_forms(&self) -> Option<&dyn ClosedForms> {
        Some(self)
    }
}

impl ClosedForms for ArchModel {
    fn predictive_loglik(&self, y: &State, prev: Option<&State>) -> f64 {
        ArchModel::predictive_loglik(self, scalar(y), prev_scalar(prev))
    }

    fn sample_optimal(&self, prev: Option<&State>, y: &State, rng: &mut RngStream) -> State {
        State::from_element(
            1,
            self.sample_optimal_scalar(scalar(y), prev_scalar(prev), rng),
        )
    }

    fn log_optimal(&self, x: &State, prev: Option<&State>, y: &State) -> f64 {
        self.log_optimal_scalar(scalar(x), scalar(y), prev_scalar(prev))
    }
}
