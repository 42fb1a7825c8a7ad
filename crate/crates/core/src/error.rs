use std::fmt;

use thiserror::Error;

/// Named material invariants, reported by [`crate::material::validate_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    Positivity,
    Hermiticity,
    Realness,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Invariant::Positivity => "positivity",
            Invariant::Hermiticity => "hermiticity",
            Invariant::Realness => "realness",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice basis is singular (condition number {condition:.3e})")]
    SingularLattice { condition: f64 },

    #[error("invalid k-path: {0}")]
    InvalidKPath(&'static str),

    #[error("invalid geometry primitive: {0}")]
    InvalidPrimitive(String),

    #[error("primitives {first} and {second} overlap; overwrite precedence is ambiguous")]
    OverlappingPrimitives { first: usize, second: usize },

    #[error("sample at grid location {location:?} is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NonPositiveSample { location: [usize; 3], min_eigenvalue: f64 },

    #[error("material invariant violated: {invariant} ({detail})")]
    InvariantViolated { invariant: Invariant, detail: String },

    #[error("Gram matrix is not positive definite at this truncation")]
    IndefiniteGram,

    #[error("eigensolver failed: {0}")]
    EigenSolver(String),

    #[error("subspace is rank deficient: expected rank {expected}, found {found}")]
    RankDeficient { expected: usize, found: usize },

    #[error("spectral reflection symmetry requires real weights")]
    ComplexWeights,

    #[error("symbol is not linear in k; the two-term Moyal expansion does not terminate")]
    NonLinearSymbol,

    #[error("could not isolate 4 ground-state candidates at t = {t:.3e} (found {found})")]
    SlopeIsolation { t: f64, found: usize },

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::InvalidKPath(_)
            | Error::InvalidPrimitive(_)
            | Error::OverlappingPrimitives { .. }
            | Error::SingularLattice { .. }
            | Error::Inconsistent(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
