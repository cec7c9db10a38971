use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("photon number {n} does not fit in a Fock space of dimension {dim}")]
    CutoffViolation { n: usize, dim: usize },

    /// The truncation is too small for the requested amplitude. The state can
    /// still be built with [`crate::hilbert::coherent_state_unchecked`].
    #[error("cutoff dimension {dim} is inadequate for |alpha|^2 = {mean_photons:.4} (need |alpha|^2 <= dim/4)")]
    CutoffInadequate { mean_photons: f64, dim: usize },

    #[error("subsystem index {index} out of range for a state with {count} subsystems")]
    InvalidSubsystem { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsolvable calibration: {0}")]
    Unsolvable(String),

    #[error("unphysical result: {0}")]
    Unphysical(String),

    #[error("invalid value for `{field}`: {message}")]
    Invariant { field: String, message: String },

    #[error("parse error{}: {message}", location(.line, .column))]
    Parse {
        message: String,
        line: usize,
        column: usize,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

fn location(line: &usize, column: &usize) -> String {
    if *line == 0 {
        String::new()
    } else {
        format!(" at line {line}, column {column}")
    }
}

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad configuration or input files, as opposed
    /// to numeric or data-dependent failures.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Invariant { .. }
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::InvalidArgument(_)
                | Error::ContractViolation(_)
                | Error::CutoffViolation { .. }
                | Error::CutoffInadequate { .. }
                | Error::InvalidSubsystem { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
