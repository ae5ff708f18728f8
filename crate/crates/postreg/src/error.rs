//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, synthesis, checking and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor argument violates its contract. `field` names the
    /// offending input.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    /// Plant or regulator configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A leading principal minor vanishes, so the pivot-free LDU step (and
    /// hence the EMU factorization) is not defined.
    #[error("leading principal minor {index} is zero (|Δ_{index}| = {value:.3e})")]
    SingularMinor { index: usize, value: f64 },

    /// A sampled sufficient condition is violated.
    #[error("condition `{name}` violated: {detail}")]
    Condition { name: &'static str, detail: String },

    /// Gain assembly failed (shape mismatch, rank deficiency, ...).
    #[error("gain synthesis error: {0}")]
    Synthesis(String),

    /// A linear system that the theory guarantees solvable turned out
    /// numerically singular.
    #[error("singular system while solving for {what}: {detail}")]
    Singular { what: &'static str, detail: String },

    /// A map returned NaN/Inf during integration.
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    /// The sampled tail is too short for the requested differencing order.
    #[error("trajectory tail too coarse: need at least {needed} samples, got {got}")]
    GridTooCoarse { needed: usize, got: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
