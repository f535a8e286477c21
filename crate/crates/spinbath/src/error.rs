//! Crate-wide error type.
//!
//! Configuration problems map to CLI exit code 2, everything else
//! (failed invariants, numerics, I/O) to exit code 1.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-coupling on site {0:?} is not allowed")]
    SelfCoupling(Vec<i64>),
    #[error("coupling for pair ({0:?}, {1:?}) given more than once (j = {2} vs {3})")]
    DuplicateCoupling(Vec<i64>, Vec<i64>, f64, f64),
    #[error("unknown site {0:?} in coupling list")]
    UnknownSite(Vec<i64>),
    #[error("duplicate site {0:?} in site list")]
    DuplicateSite(Vec<i64>),
    #[error("site {0:?} has {1} coordinates, expected dimension {2}")]
    DimensionMismatch(Vec<i64>, usize, usize),
    #[error("configuration covers {found} spins, need {needed} for {context}")]
    IncompleteConfiguration {
        context: String,
        needed: usize,
        found: usize,
    },
    #[error("{what} requires n <= {max}, got {n}")]
    SizeGuard {
        what: &'static str,
        n: usize,
        max: usize,
    },
    #[error("inverse temperature must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("Bose occupation pole: energy {energy} <= chemical potential {mu}")]
    BoseDomain { energy: f64, mu: f64 },
    #[error("invalid bath model: {0}")]
    InvalidBath(String),
    #[error("principal-value quadrature did not converge: residual {residual:.3e} at value {value:.6e}")]
    PvNonConverged { value: f64, residual: f64 },
    #[error("operator support {0:?} not contained in target {1:?}")]
    SupportNotContained(Vec<usize>, Vec<usize>),
    #[error("operator is not diagonal in the configuration basis (max off-diagonal {0:.3e})")]
    NonDiagonalInput(f64),
    #[error("closed-form rate disagrees with the generator restriction: max |delta| = {0:.3e}")]
    RateMismatch(f64),
    #[error("detailed balance check requires mu = 0 (only then do the KMS weights balance the channel energies); got mu = {0}")]
    ChemicalPotentialNonzero(f64),
    #[error("non-physical state: {0}")]
    NonPhysicalState(String),
    #[error("integrator step size underflow at t = {0}")]
    StepSizeUnderflow(f64),
    #[error("invariant violated during evolution: {0}")]
    InvariantViolation(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("unknown observable `{0}`")]
    UnknownObservable(String),
    #[error("config error at `{key}`: {message}")]
    ConfigInvalid { key: String, message: String },
    #[error("failed to parse config {path:?}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid { .. } | Error::ConfigParse { .. } => 2,
            _ => 1,
        }
    }
}
