use std::fmt;

use thiserror::Error;

/// A single broken invariant of a [`LinearSdeModel`](crate::model::LinearSdeModel).
#[derive(Debug, Clone, PartialEq)]
pub enum ModelViolation {
    EmptyState,
    EmptyNoise,
    DynamicsNotSquare { rows: usize, cols: usize },
    DispersionRows { expected: usize, found: usize },
    WeightShape { expected: usize, rows: usize, cols: usize },
    NonFinite(&'static str),
    WeightNotSymmetric,
    WeightNotPsd { min_eigenvalue: f64 },
    DiffusionNotPsd { min_eigenvalue: f64 },
    Horizon(f64),
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyState => write!(f, "state-dimension: n must be at least 1"),
            Self::EmptyNoise => write!(f, "noise-dimension: m must be at least 1"),
            Self::DynamicsNotSquare { rows, cols } => {
                write!(f, "dynamics-shape: A is {rows}x{cols}, expected square")
            }
            Self::DispersionRows { expected, found } => {
                write!(f, "dispersion-shape: B has {found} rows, expected {expected}")
            }
            Self::WeightShape { expected, rows, cols } => {
                write!(f, "weight-shape: M is {rows}x{cols}, expected {expected}x{expected}")
            }
            Self::NonFinite(name) => write!(f, "non-finite: {name} has non-finite entries"),
            Self::WeightNotSymmetric => write!(f, "weight-not-symmetric: M != M^T"),
            Self::WeightNotPsd { min_eigenvalue } => {
                write!(f, "weight-not-psd: minimum eigenvalue {min_eigenvalue:e}")
            }
            Self::DiffusionNotPsd { min_eigenvalue } => {
                write!(f, "diffusion-not-psd: minimum eigenvalue {min_eigenvalue:e}")
            }
            Self::Horizon(t) => write!(f, "horizon: T = {t} must be finite and positive"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {}", join(.0))]
    InvalidModel(Vec<ModelViolation>),

    #[error("regularity condition fails (gram determinant {0:e}); no optimal grid exists")]
    Irregular(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidInput(_) => "invalid-input",
            Self::Domain(_) => "domain",
            Self::DimensionMismatch(_) => "dimension-mismatch",
            Self::InvalidModel(_) => "invalid-model",
            Self::Irregular(_) => "irregular-model",
            Self::InvalidGrid(_) => "invalid-grid",
            Self::InvalidDensity(_) => "invalid-density",
        }
    }
}

fn join(violations: &[ModelViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
