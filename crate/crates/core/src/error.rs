//! Error taxonomy shared by every module.
//!
//! The split matters for callers: `Domain` means the request itself is outside
//! the regime the model is built for (wrong `b`, non-positive weight, empty
//! window), while `Solver` means a well-posed request did not converge and
//! carries enough trace to diagnose why. `Certificate` failures are signals,
//! not bugs: a cost function dipped below its guaranteed floor, and the
//! offending location is reported.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameters outside the admissible regime (validation, not convergence).
    #[error("domain error: {0}")]
    Domain(String),

    /// Bracketing or scanning failed to isolate the requested feature.
    /// `trace` holds the scanned `(x, value)` pairs for post-mortems.
    #[error("bracket failure: {message}")]
    Bracket {
        message: String,
        trace: Vec<(f64, f64)>,
    },

    /// An iterative solver stagnated or exceeded its budget.
    /// `trace` holds `(iteration, gradient_norm, energy)` milestones.
    #[error("solver failure: {message}")]
    Solver {
        message: String,
        trace: Vec<(usize, f64, f64)>,
    },

    /// A sign or positivity certificate failed at a concrete location.
    #[error("certificate failure: {message} (at t = {at})")]
    Certificate { message: String, at: f64 },

    /// Trivial regime: the quadratic form is non-negative and the minimizer
    /// is identically zero, so the requested quantity does not exist.
    #[error("trivial regime: {0}")]
    TrivialRegime(String),

    /// Incompatible shapes or grids between coupled objects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Internal consistency check failed; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
