//! Hidden Markov models `x_k ~ f(x_k | x_{k-1})`, `y_k ~ g(y_k | x_k)`.
//!
//! Filters only see the [`StateSpaceModel`] trait plus a [`Proposal`].
//! Everything is evaluated in the log domain. Where a method takes
//! `prev: Option<&State>`, `None` stands for the initial step, whose
//! "transition" is the initial prior.

mod arch;
mod gaussian;
mod kalman;
mod linear_gaussian;
mod range_bearing;
mod static_gaussian;

pub use arch::ArchModel;
pub use gaussian::{log_normal_1d, CholGaussian};
pub use kalman::{kalman_filter, KalmanEstimate};
pub use linear_gaussian::{constant_velocity, default_tracking_prior, LinearGaussianSSM};
pub use range_bearing::{wrap_angle, RangeBearingModel};
pub use static_gaussian::{static_gaussian_target, StaticGaussianTarget};

use crate::sampling::RngStream;
use crate::State;

pub trait StateSpaceModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    fn sample_initial(&self, rng: &mut RngStream) -> State;
    fn log_initial(&self, x: &State) -> f64;
    fn sample_transition(&self, prev: &State, rng: &mut RngStream) -> State;
    fn log_transition(&self, x: &State, prev: &State) -> f64;
    fn sample_observation(&self, x: &State, rng: &mut RngStream) -> State;
    fn log_likelihood(&self, y: &State, x: &State) -> f64;

    /// Predictive likelihood and optimal proposal, when available in closed form.
    fn closed_forms(&self) -> Option<&dyn ClosedForms> {
        None
    }

    fn sample_prior(&self, prev: Option<&State>, rng: &mut RngStream) -> State {
        match prev {
            Some(p) => self.sample_transition(p, rng),
            None => self.sample_initial(rng),
        }
    }

    fn log_prior(&self, x: &State, prev: Option<&State>) -> f64 {
        match prev {
            Some(p) => self.log_transition(x, p),
            None => self.log_initial(x),
        }
    }
}

/// `p(y_k | x_{k-1})` and `p(x_k | x_{k-1}, y_k)`.
///
/// They satisfy `log_optimal + predictive_loglik = log_prior + log_likelihood`
/// pointwise.
pub trait ClosedForms: Send + Sync {
    fn predictive_loglik(&self, y: &State, prev: Option<&State>) -> f64;
    fn sample_optimal(&self, prev: Option<&State>, y: &State, rng: &mut RngStream) -> State;
    fn log_optimal(&self, x: &State, prev: Option<&State>, y: &State) -> f64;
}

/// Conditional importance distribution `q(x_k | x_{k-1}, y_k)`.
pub trait Proposal: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(
        &self,
        model: &dyn StateSpaceModel,
        prev: Option<&State>,
        y: &State,
        rng: &mut RngStream,
    ) -> State;
    fn log_density(
        &self,
        model: &dyn StateSpaceModel,
        x: &State,
        prev: Option<&State>,
        y: &State,
    ) -> f64;

    /// Whether the proposal can be used with `model`.
    fn supports(&self, _model: &dyn StateSpaceModel) -> bool {
        true
    }

    /// `log f(x | prev) + log g(y | x) - log q(x | prev, y)`.
    fn log_weight_increment(
        &self,
        model: &dyn StateSpaceModel,
        x: &State,
        prev: Option<&State>,
        y: &State,
    ) -> f64 {
        let lg = model.log_likelihood(y, x);
        if lg == f64::NEG_INFINITY {
            return lg;
        }
        model.log_prior(x, prev) + lg - self.log_density(model, x, prev, y)
    }
}

/// `q = f`: the bootstrap proposal. Weights reduce to the likelihood.
#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionProposal;

impl Proposal for TransitionProposal {
    fn name(&self) -> &'static str {
        "transition"
    }

    fn sample(
        &self,
        model: &dyn StateSpaceModel,
        prev: Option<&State>,
        _y: &State,
        rng: &mut RngStream,
    ) -> State {
        model.sample_prior(prev, rng)
    }

    fn log_density(
        &self,
        model: &dyn StateSpaceModel,
        x: &State,
        prev: Option<&State>,
        _y: &State,
    ) -> f64 {
        model.log_prior(x, prev)
    }

    fn log_weight_increment(
        &self,
        model: &dyn StateSpaceModel,
        x: &State,
        _prev: Option<&State>,
        y: &State,
    ) -> f64 {
        model.log_likelihood(y, x)
    }
}

/// `q = p(x_k | x_{k-1}, y_k)`; requires [`StateSpaceModel::closed_forms`].
#[derive(Debug, Clone, Copy, Default)]
pub struct OptimalProposal;

impl OptimalProposal {
    fn forms(model: &dyn StateSpaceModel) -> &dyn ClosedForms {
        model
            .closed_forms()
            .expect("optimal proposal used on a model without closed forms")
    }
}

impl Proposal for OptimalProposal {
    fn name(&self) -> &'static str {
        "optimal"
    }

    fn sample(
        &self,
        model: &dyn StateSpaceModel,
        prev: Option<&State>,
        y: &State,
        rng: &mut RngStream,
    ) -> State {
        Self::forms(model).sample_optimal(prev, y, rng)
    }

    fn log_density(
        &self,
        model: &dyn StateSpaceModel,
        x: &State,
        prev: Option<&State>,
        y: &State,
    ) -> f64 {
        Self::forms(model).log_optimal(x, prev, y)
    }

    fn supports(&self, model: &dyn StateSpaceModel) -> bool {
        model.closed_forms().is_some()
    }

    /// Exactly the predictive likelihood, independent of `x`.
    fn log_weight_increment(
        &self,
        model: &dyn StateSpaceModel,
        _x: &State,
        prev: Option<&State>,
        y: &State,
    ) -> f64 {
        Self::forms(model).predictive_loglik(y, prev)
    }
}

/// Jointly simulated hidden path and observations, `k = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub observations: Vec<State>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Draws `x_0, y_0, x_1, y_1, ..., x_T, y_T` in that order.
pub fn simulate(model: &dyn StateSpaceModel, horizon: usize, rng: &mut RngStream) -> Trajectory {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon + 1);
    let mut x = model.sample_initial(rng);
    for k in 0..=horizon {
        if k > 0 {
            x = model.sample_transition(&x, rng);
        }
        observations.push(model.sample_observation(&x, rng));
        states.push(x.clone());
    }
    Trajectory {
        states,
        observations,
    }
}
