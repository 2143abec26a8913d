use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid cone: {0}")]
    InvalidCone(String),

    #[error("{op} is not supported for {kind} cones")]
    UnsupportedCone {
        op: &'static str,
        kind: &'static str,
    },

    #[error("vector is not in the interior of the cone")]
    NotInterior,

    #[error("invalid step measure: {0}")]
    InvalidMeasure(String),

    #[error("operation requires a probability-mode measure")]
    CountingMode,

    #[error("exponent {exponent:.3} exceeds the overflow guard")]
    Overflow { exponent: f64 },

    #[error("support is contained in a linear hyperplane")]
    H1Violated,

    #[error("support lies in a half-space u^- with u = {witness:?} in the dual cone")]
    Improper { witness: Vec<f64> },

    #[error("no convergence after {iterations} iterations (projected gradient {projected_gradient:.3e})")]
    NoConvergence {
        iterations: usize,
        projected_gradient: f64,
        trace: Vec<f64>,
    },

    #[error("steps are not lattice vectors")]
    NonLattice,

    #[error("starting point {0:?} lies outside the cone")]
    StartOutsideCone(Vec<f64>),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
