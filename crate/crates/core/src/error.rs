use thiserror::Error;

/// Errors produced by chart construction, integration and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart box on axis {axis}")]
    Domain { axis: usize, point: Vec<f64> },

    #[error("singular geometry at node {node:?}: {reason}")]
    SingularGeometry { node: Vec<f64>, reason: String },

    #[error("unsupported exponent p = {0}; the modulus needs p > 1")]
    UnsupportedExponent(f64),

    #[error("shape mismatch: expected {expected} values, got {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "leaf {leaf} did not converge after {iterations} iterations (last objective gap {gap:e})"
    )]
    NonConvergence {
        leaf: usize,
        iterations: usize,
        gap: f64,
    },
}

impl Error {
    pub(crate) fn singular(node: &[f64], reason: impl Into<String>) -> Self {
        Error::SingularGeometry {
            node: node.to_vec(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularGeometry { .. } | Error::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
