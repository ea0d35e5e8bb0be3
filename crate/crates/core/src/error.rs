use thiserror::Error;

/// Errors raised by the propagation model, the numerical kernels and both
/// evaluation engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("path gain is singular at r = {0} km")]
    Singularity(f64),

    #[error("integrand is not finite at node {node} (value {value})")]
    NonFinite { node: f64, value: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error {error}")]
    NonConvergence { estimate: f64, error: f64 },

    #[error("root is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("no crossover distance for r = {0} km within the profile range")]
    OutOfRange(f64),

    #[error("characteristic function inversion produced {0}, outside [0, 1]")]
    InversionFailure(f64),

    #[error("need at least one sample")]
    InsufficientSamples,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
