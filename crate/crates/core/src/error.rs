//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by construction, estimation, risk evaluation, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("support upper end must be finite and positive, got {upper}")]
    InvalidSupport { upper: f64 },

    #[error("step function breakpoints must be finite and strictly increasing")]
    BadBreakpoints,

    #[error("step function has {n_breakpoints} breakpoints but {n_values} values")]
    ValueCountMismatch {
        n_breakpoints: usize,
        n_values: usize,
    },

    #[error("non-finite number in {place}")]
    NonFinite { place: &'static str },

    #[error("expected a (sub-)CDF but {reason}")]
    NotACdf { reason: &'static str },

    #[error("operation needs proper CDFs; terminal value {terminal} leaves unassigned mass")]
    UnassignedMass { terminal: f64 },

    #[error("breakpoint {t} lies outside the reward support [0, {upper}]")]
    OutsideSupport { t: f64, upper: f64 },

    #[error("value at risk admits no finite sup-norm Lipschitz constant")]
    NotLipschitz,

    #[error("invalid risk parameter: {reason}")]
    InvalidRiskParameter { reason: String },

    #[error("distortion function invalid: {reason}")]
    InvalidDistortion { reason: String },

    #[error("dataset must contain at least one sample")]
    EmptyDataset,

    #[error("sample {index} invalid: {reason}")]
    InvalidSample { index: usize, reason: String },

    #[error("policy invalid: {reason}")]
    InvalidPolicy { reason: String },

    #[error("policy class invalid: {reason}")]
    InvalidPolicyClass { reason: String },

    #[error("delta must lie in (0, 1), got {delta}")]
    InvalidDelta { delta: f64 },

    #[error("bound configuration invalid: {reason}")]
    InvalidBoundConfig { reason: String },

    #[error("doubly robust estimation requires a conditional CDF model")]
    MissingModel,

    #[error("doubly robust radius requires a bias bound (oracle or asserted)")]
    MissingDrBias,

    #[error(
        "natarajan brute force refused: {n_contexts} contexts / {n_policies} policies exceeds \
         the 12-context / 4096-policy guard"
    )]
    NatarajanGuard {
        n_contexts: usize,
        n_policies: usize,
    },

    #[error("policy index {index} out of range (class has {len} policies)")]
    PolicyIndexOutOfRange { index: usize, len: usize },

    #[error("environment invalid: {reason}")]
    InvalidEnvironment { reason: String },

    #[error("behavior policy invalid: {reason}")]
    InvalidBehavior { reason: String },

    #[error("minimax family invalid: {reason}")]
    InvalidFamily { reason: String },

    #[error("experiment config invalid: {reason}")]
    InvalidExperiment { reason: String },

    #[error("dataset file format: {reason}")]
    DatasetFormat { reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
