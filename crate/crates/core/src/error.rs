use alloc::string::String;

/// Errors raised by the model, integrators, analysis and estimators.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown problem `{name}` (valid names: {valid})")]
    UnknownProblem { name: String, valid: &'static str },

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular Newton matrix")]
    SingularMatrix,

    #[error("path {path}, step {step}: {source}")]
    Step {
        path: u64,
        step: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("slope fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_step(self, path: u64, step: usize) -> Self {
        Error::Step {
            path,
            step,
            source: alloc::boxed::Box::new(self),
        }
    }
}
