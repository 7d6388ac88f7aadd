use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmcError {
    /// Every log-weight is `-inf`: the likelihood collapsed on all particles.
    #[error("all weights are degenerate (every log-weight is -inf)")]
    AllWeightsDegenerate,
    #[error("log-weight at index {index} is NaN")]
    NanWeight { index: usize },
    #[error("enumeration needs {tuples} co-sample tuples, limit is {limit}")]
    SupportTooLarge { tuples: u128, limit: u128 },
    #[error("covariance lost positive definiteness at step {step}")]
    CovarianceNotPd { step: usize },
    #[error("model does not expose a predictive likelihood and optimal proposal")]
    ModelLacksClosedForms,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, SmcError>;
