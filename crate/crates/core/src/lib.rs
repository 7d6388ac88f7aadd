//! Independent-resampling sequential Monte Carlo.
//!
//! The crate is split along the estimation pipeline:
//!
//! - [`sampling`]: seedable random streams, log-domain weight algebra and
//!   multinomial resampling.
//! - [`static_is`]: importance sampling, dependent SIR, independent SIR and
//!   the reweighted variants for a static target, plus an exact enumeration
//!   of the compound proposal on finite supports.
//! - [`models`]: the state-space model abstraction, the benchmark models
//!   and a Kalman filter used as an exact reference.
//! - [`filters`]: classical SIR, independent-resampling SIR (with and
//!   without second-stage weights), APF and fully adapted APF.

pub mod error;
pub mod filters;
pub mod models;
pub mod sampling;
pub mod static_is;

pub use error::{Result, SmcError};
pub use sampling::RngStream;

/// Hidden states and observations are dense column vectors.
pub type State = nalgebra::DVector<f64>;
