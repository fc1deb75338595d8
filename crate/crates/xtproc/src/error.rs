use thiserror::Error;

/// Crate-wide error type.
///
/// Every variant maps to a stable machine-readable code via [`Error::code`],
/// which the CLI prints on stderr so scripts can branch on failure causes
/// without parsing prose.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A correlation structure puts distinct sites at |rho| >= 1.
    #[error("degenerate correlation: {0}")]
    DegenerateCorrelation(String),

    /// A matrix required to be symmetric is not, beyond tolerance.
    #[error("matrix not symmetric: largest asymmetry {max_asymmetry:.3e} at ({row}, {col})")]
    NotSymmetric {
        row: usize,
        col: usize,
        max_asymmetry: f64,
    },

    /// A correlation matrix has a diagonal entry away from one.
    #[error("diagonal entry {value} at index {index} is not 1 within 1e-12")]
    NonUnitDiagonal { index: usize, value: f64 },

    /// A correlation matrix fails the positive semi-definiteness check.
    #[error("matrix is not positive semi-definite (factorization failed at jitter {max_jitter:.1e})")]
    NotPositiveSemiDefinite { max_jitter: f64 },

    /// Cholesky factorization failed even after the full jitter ladder.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at column {column}, jitter {jitter:.1e})")]
    NotPositiveDefinite {
        column: usize,
        pivot: f64,
        jitter: f64,
    },

    /// The spectral moment E[(X+)^alpha] does not exist.
    #[error("infinite moment: alpha = {alpha} must be strictly below spectral_nu = {spectral_nu}")]
    InfiniteMoment { alpha: f64, spectral_nu: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for scripting against CLI stderr.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain_error",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::DegenerateCorrelation(_) => "degenerate_correlation",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::NonUnitDiagonal { .. } => "non_unit_diagonal",
            Error::NotPositiveSemiDefinite { .. } => "not_positive_semi_definite",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::InfiniteMoment { .. } => "infinite_moment",
            Error::Io(_) => "io_error",
            Error::Csv(_) => "csv_error",
            Error::Json(_) => "json_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
