use thiserror::Error;

/// Errors raised by the geometry, grid, trace and approximation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coverage gap: {0}")]
    CoverageGap(String),

    #[error("isolated node {node} has no inside neighbour along axis {axis}")]
    IsolatedNode { node: usize, axis: usize },

    #[error("chart {chart} unresolved: {detail}")]
    ChartUnresolved { chart: usize, detail: String },

    #[error("function `{function_id}` has W^{{1,p}} norm {norm:e}, too small for a ratio")]
    ZeroNorm { function_id: String, norm: f64 },

    #[error("function is not trace-zero: trace norm {trace_norm:e} exceeds 1e-2 * W^{{1,p}} norm {w1p_norm:e}")]
    NotTraceZero { trace_norm: f64, w1p_norm: f64 },

    #[error("collar too thin: {0}")]
    CollarTooThin(String),

    #[error("exponent mismatch: expected p = {expected}, found p = {found}")]
    ExponentMismatch { expected: f64, found: f64 },

    #[error("invalid exponent p = {0}; need 1 <= p < inf")]
    InvalidExponent(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}
