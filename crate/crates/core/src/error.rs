use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("image leaf over base cell ({i}, {j}) is not a graph over the fiber circle")]
    GraphConditionViolated { i: usize, j: usize },

    #[error("fixed-point iteration did not reach tolerance; last residual {last:.3e} after {} iterations", history.len())]
    NoConvergence { last: f64, history: Vec<f64> },

    #[error("fibration model residual {residual:.3e} is above tolerance {tol:.3e}")]
    ModelNotConverged { residual: f64, tol: f64 },

    #[error("tangent frame norm exceeded 1e300 at iteration {iteration}")]
    NumericalOverflow { iteration: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("no cluster holds at least 5% of the mass (largest {largest:.4})")]
    NoConcentration { largest: f64 },

    #[error("power iteration residual {residual:.3e} above 1e-8 after {iterations} iterations")]
    PowerIterationStalled { residual: f64, iterations: usize },
}

impl Error {
    pub fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidParameter { .. })
    }
}
