use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// The requested time step would break positivity of the explicit update.
    #[error("CFL violation: courant number {courant:.6} >= 1 (dt = {dt:e}, dx = {dx:e})")]
    Cfl { courant: f64, dt: f64, dx: f64 },

    #[error("kernel hypothesis {hypothesis} violated: {detail}")]
    KernelHypothesis {
        hypothesis: &'static str,
        detail: String,
    },

    /// Model parameters violate an assumption the solver depends on.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("mass leaked to the domain boundary: {mass:e} exceeds {limit:e}")]
    BoundaryLeak { mass: f64, limit: f64 },

    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("validation failed for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag, used in the CLI's error JSON and by the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::NonFinite(_) => "non_finite",
            Error::Cfl { .. } => "cfl",
            Error::KernelHypothesis { .. } => "kernel_hypothesis",
            Error::Hypothesis(_) => "hypothesis",
            Error::BoundaryLeak { .. } => "boundary_leak",
            Error::Config { .. } => "config",
            Error::Validation { .. } => "validation",
            Error::Context { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(format!("{what} = {x}")))
    }
}
