//! Crate-wide error type with stable machine-readable codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cloud has zero extent (all points coincide)")]
    DegenerateExtent,
    #[error("k = {k} exceeds cloud size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("plane fit needs at least 3 non-collinear points, got {points}")]
    RankDeficient { points: usize },
    #[error("requested {count} points from a cloud of {size}")]
    CountTooLarge { count: usize, size: usize },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("unsupported PLY property `{property}` on element `{element}`")]
    UnsupportedProperty { element: String, property: String },
    #[error("mesh has zero total surface area")]
    DegenerateMesh,
    #[error("zero-area triangle at index {index}")]
    DegenerateTriangle { index: usize },
    #[error("adaptive mode requires per-point saliency")]
    MissingSaliency,
    #[error("temperature must be positive, got {t}")]
    InvalidTemperature { t: f64 },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("shape mismatch in {op}: {lhs_rows}x{lhs_cols} vs {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("patch of {n} points is smaller than the kNN group size {g}")]
    PatchTooSmall { n: usize, g: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("gradient check failed: max relative error {max_rel_err:.3e} exceeds tolerance {tol:.1e}")]
    GradCheckFailed { max_rel_err: f64, tol: f64 },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier for machine-readable error reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DegenerateExtent => "degenerate-extent",
            Error::KTooLarge { .. } => "k-too-large",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::CountTooLarge { .. } => "count-too-large",
            Error::Malformed { .. } => "malformed",
            Error::UnsupportedProperty { .. } => "unsupported-property",
            Error::DegenerateMesh => "degenerate-mesh",
            Error::DegenerateTriangle { .. } => "degenerate-triangle",
            Error::MissingSaliency => "missing-saliency",
            Error::InvalidTemperature { .. } => "invalid-temperature",
            Error::NonFinite { .. } => "non-finite",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::PatchTooSmall { .. } => "patch-too-small",
            Error::InvalidInput(_) => "invalid-input",
            Error::GradCheckFailed { .. } => "gradcheck-failed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True for failures of numerical origin (as opposed to bad data or usage).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::GradCheckFailed { .. }
        )
    }
}
