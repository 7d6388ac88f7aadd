use rand_distr::{Distribution, StandardNormal};

use super::gaussian::log_normal_1d;
use crate::error::{Result, SmcError};
use crate::sampling::RngStream;
use crate::static_is::StaticTarget;

/// Scalar conjugate problem `x ~ N(0, s_x^2)`, `y | x ~ N(x, s_y^2)`, with the
/// prior as proposal and `f(x) = x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticGaussianTarget {
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    pub y: f64,
}

pub fn static_gaussian_target(
    sigma_x2: f64,
    sigma_y2: f64,
    y: f64,
) -> Result<StaticGaussianTarget> {
    if !(sigma_x2 > 0.0 && sigma_y2 > 0.0) {
        return Err(SmcError::InvalidArgument(
            "variances must be positive".into(),
        ));
    }
    Ok(StaticGaussianTarget {
        sigma_x2,
        sigma_y2,
        y,
    })
}

impl StaticGaussianTarget {
    /// `sigma_x^2 = 10`, `sigma_y^2 = 3`.
    pub fn standard(y: f64) -> Self {
        StaticGaussianTarget {
            sigma_x2: 10.0,
            sigma_y2: 3.0,
            y,
        }
    }

    pub fn posterior_mean(&self) -> f64 {
        self.y * self.sigma_x2 / (self.sigma_x2 + self.sigma_y2)
    }

    pub fn posterior_var(&self) -> f64 {
        1.0 / (1.0 / self.sigma_x2 + 1.0 / self.sigma_y2)
    }

    /// Draws `y` from its marginal `N(0, s_x^2 + s_y^2)`.
    pub fn sample_observation(&self, rng: &mut RngStream) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        (self.sigma_x2 + self.sigma_y2).sqrt() * z
    }
}

impl StaticTarget for StaticGaussianTarget {
    type State = f64;

    fn log_target(&self, x: &f64) -> f64 {
        log_normal_1d(*x, 0.0, self.sigma_x2) + log_normal_1d(self.y, *x, self.sigma_y2)
    }

    fn sample_proposal(&self, rng: &mut RngStream) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.sigma_x2.sqrt() * z
    }

    fn log_proposal(&self, x: &f64) -> f64 {
        log_normal_1d(*x, 0.0, self.sigma_x2)
    }

    fn statistic(&self, x: &f64) -> Vec<f64> {
        vec![*x]
    }

    fn log_ratio(&self, x: &f64) -> f64 {
        log_normal_1d(self.y, *x, self.sigma_y2)
    }
}
