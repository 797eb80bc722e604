use thiserror::Error;

use crate::convex_order::ConvexOrderCertificate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("representation mismatch: {0}")]
    Representation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("marginal masses differ: {left} vs {right}")]
    Balance { left: f64, right: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("grid alignment: {0}")]
    Alignment(String),

    #[error("infeasible: {label} (residual {residual:e})")]
    Infeasible {
        constraint: usize,
        label: String,
        residual: f64,
    },

    /// Convex dominance fails; the certificate carries a separating convex function.
    #[error("convex order violated by {:e}", .0.violation())]
    OrderViolation(Box<ConvexOrderCertificate>),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
