use thiserror::Error;

/// Failure modes shared by every computation in the crate.
///
/// The CLI maps `Domain` to exit code 2 and `Accuracy` to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FracError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("accuracy error in {context}: achieved {achieved:.3e}, required {required:.3e}")]
    Accuracy {
        context: String,
        achieved: f64,
        required: f64,
    },
    #[error("newton iteration did not converge at lambda = {lambda} after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        lambda: f64,
        iterations: usize,
        residual: f64,
    },
}

impl FracError {
    pub fn domain(msg: impl Into<String>) -> Self {
        FracError::Domain(msg.into())
    }

    pub fn accuracy(context: impl Into<String>, achieved: f64, required: f64) -> Self {
        FracError::Accuracy {
            context: context.into(),
            achieved,
            required,
        }
    }
}

pub type Result<T> = std::result::Result<T, FracError>;
