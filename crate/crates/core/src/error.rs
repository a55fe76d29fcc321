use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid band: {0}")]
    InvalidBand(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("band-limited field is not conjugate symmetric (max |imag| = {imag:e}, max |real| = {real:e})")]
    ConjugateSymmetry { imag: f64, real: f64 },

    #[error("cubic interpolation requires prefiltered coefficients")]
    NotPrefiltered,

    #[error("{equation} diverged at step {step} of {n_t} (max |q| = {magnitude:e}, CFL = {cfl:.3})")]
    Diverged {
        equation: &'static str,
        step: usize,
        n_t: usize,
        magnitude: f64,
        cfl: f64,
    },

    #[error("forward cache built for velocity revision {cache}, got revision {velocity}")]
    StaleCache { cache: u64, velocity: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed field file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("registration failed at outer iteration {iteration}: {source}")]
    Optimization {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error (or its cause) is a transport blow-up.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Diverged { .. } | Error::NonFinite(_) => true,
            Error::Optimization { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}
