use thiserror::Error;

use crate::tomography::MleOutcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not physical: {0}")]
    NotPhysical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trace drifted by {drift:.3e} during integration; reduce the time step")]
    TraceDrift { drift: f64 },

    #[error("integration produced non-finite values")]
    NonFinite,

    #[error("residual f-level population {0:.3e} exceeds the emission threshold")]
    LeakedPopulation(f64),

    #[error("rejection sampler gave up after {0} attempts")]
    SamplerExhausted(usize),

    #[error("basis mismatch: histogram holds {expected:?}, got {found:?}")]
    BasisMismatch {
        expected: crate::Basis,
        found: crate::Basis,
    },

    #[error("histogram edges do not match")]
    EdgeMismatch,

    #[error("no data: {0}")]
    NoData(String),

    #[error("missing moment ({n}, {m}, {sigma})")]
    MissingMoment { n: usize, m: usize, sigma: crate::Sigma },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("maximum-likelihood fit did not converge after {} iterations (chi2 = {:.6e})", .0.iterations, .0.chi2_final)]
    MleNotConverged(Box<MleOutcome>),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
