//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset ingestion, solvers, subspace training and the
/// evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Subject sets disagree between modality files, or rows cannot be aligned.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A cell could not be parsed as a number.
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// Invalid configuration (unknown target tag, bad axis for a method, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A class is too small for the requested fold count, or classes are missing.
    #[error("stratification error: {0}")]
    Stratification(String),

    /// A train/test split came out empty.
    #[error("split error: {0}")]
    Split(String),

    /// A scalar parameter is out of its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The grid point cannot be solved for this training set (e.g. C < 1/N,
    /// subspace dimension above the embedding rank). Cross-validation skips
    /// these points with a warning.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Matrix/vector dimensions do not agree.
    #[error("shape error: {0}")]
    Shape(String),

    /// The centered kernel has no spectrum above tolerance.
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    /// Subspace training produced non-finite iterates.
    #[error("divergence at iteration {iteration} (eta {eta}): {message}")]
    Divergence {
        iteration: usize,
        eta: f64,
        message: String,
    },

    /// An internal contract was violated by the caller (e.g. alphas not on the simplex).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The cross-validation protocol cannot proceed (e.g. no feasible grid point).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The brute-force oracle was asked for an instance beyond its size limit.
    #[error("oracle scale error: {0}")]
    OracleScale(String),

    /// A model document is well-formed JSON but not a loadable artifact
    /// (wrong format tag, unsupported version, inconsistent payload).
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
