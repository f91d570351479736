use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {family} parameters: {reason}")]
    InvalidParameter { family: &'static str, reason: String },

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("distribution spec parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("non-finite input {0}")]
    NonFiniteInput(f64),

    #[error("characteristic function of the {0} law is not differentiable at t = 0")]
    NonDifferentiableCf(&'static str),

    #[error("the {0} law has no finite mean")]
    UndefinedMean(&'static str),

    #[error("non-finite integrand value at t = {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("quadrature tolerance not met: error estimate {error:e} (best value {value:?})")]
    ToleranceNotMet { value: Vec<f64>, error: f64 },

    #[error("characteristic function of component {component} vanishes at t = {t}")]
    VanishingCf { component: usize, t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
