use thiserror::Error;

pub type Result<T> = std::result::Result<T, IpiError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IpiError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical blowup at t = {time}")]
    NumericalBlowup { time: f64 },

    #[error("non-finite integrand at substep {index}")]
    NonFinite { index: usize },

    #[error("ill-conditioned system (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("policy is not admissible (spectral abscissa {abscissa})")]
    Inadmissible { abscissa: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("insufficient data: {valid} valid samples, {required} required")]
    InsufficientData { valid: usize, required: usize },

    #[error("no convergence after {iterations} iterations (|v| = {norm:e})")]
    NonConvergence { iterations: usize, norm: f64 },

    #[error("no stabilizing initial gain found")]
    NeedsStabilizer,

    #[error("unbounded action set: use the closed-form (VGB) improvement")]
    RequiresClosedForm,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<IpiError>,
    },
}

impl IpiError {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        IpiError::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
