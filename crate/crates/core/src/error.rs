use num_complex::Complex64;
use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is numerically singular at s = {0}")]
    SingularAtPoint(Complex64),
    #[error("pencil is not diagonalizable: {0}")]
    NotDiagonalizable(String),
    #[error("more than two coefficient terms and the matrices are not simultaneously diagonalizable")]
    MoreThanTwoTerms,
    #[error("quadratic factor {index} has a repeated root")]
    RepeatedRoot { index: usize },
    #[error("second-order roots collide across indices {first} and {second}")]
    CrossIndexCollision { first: usize, second: usize },
    #[error("leading polynomial coefficient is zero")]
    DegenerateLeadingCoefficient,
    #[error("Lambert W iteration did not converge on branch {branch} at z = {z}")]
    NoConvergence { branch: i64, z: Complex64 },
    #[error("argument {z} is at the Lambert W branch point -1/e")]
    BranchPointSingularity { z: Complex64 },
    #[error("unstable pole {0}")]
    UnstablePole(Complex64),
    #[error("point {c} is not a simple zero of the denominator")]
    NotASimpleZero { c: Complex64 },
    #[error("system is not asymptotically stable (spectral abscissa {0:e})")]
    UnstableSystem(f64),
    #[error("pole sets of indices {first} and {second} are not disjoint")]
    DisjointnessViolation { first: usize, second: usize },
    #[error("delay branch sums did not converge within {cap} branches")]
    TruncationNotConverged { cap: usize },
    #[error("line search failed after {halvings} halvings")]
    LineSearchFailure { halvings: usize },
    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),
    #[error("delay system stability check failed after {attempts} draws")]
    StabilityCheckFailed { attempts: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
