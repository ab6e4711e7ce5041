use thiserror::Error;

use crate::grid::Interval;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),

    #[error("exponent mismatch at x = {x}: {detail}")]
    ExponentMismatch { x: f64, detail: String },

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("interval [{}, {}] is not in the dyadic family", .0.a(), .0.b())]
    NotInFamily(Interval),

    #[error("root average {average} already exceeds threshold {lambda}")]
    RootAboveThreshold { average: f64, lambda: f64 },

    #[error("scenario `{id}` is invalid: {reason}")]
    ScenarioInvalid { id: String, reason: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
