use thiserror::Error;

/// Errors raised by the numerical kernel, the generator and the models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeaError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not Hermitian: max|M - M^H| = {asymmetry:.3e} exceeds 1e-12 * max|M| = {scale:.3e}")]
    NotHermitian { asymmetry: f64, scale: f64 },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("density matrix eigenvalue {value:.3e} is below the clamp bound -1e-9")]
    PositivityViolation { value: f64 },

    #[error("rate must be non-negative, got {0}")]
    NegativeRate(f64),

    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("density matrix is rank deficient: rank {rank} of {dim} (logarithm undefined)")]
    RankDeficient { rank: usize, dim: usize },

    #[error("energy variance {sigma2:.3e} is below the degeneracy threshold")]
    DegenerateVariance { sigma2: f64 },

    #[error("time {t} is outside the model domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("degenerate spectrum at t = {t}: gap {gap:.3e}")]
    DegenerateSpectrum { t: f64, gap: f64 },

    #[error("|beta| * spread = {exponent:.3e} exceeds 700; canonical weights would overflow")]
    CanonicalOverflow { exponent: f64 },

    #[error("energy {energy} is not strictly inside the spectral interval ({min}, {max})")]
    NoFiniteBeta { energy: f64, min: f64, max: f64 },

    #[error("invalid projector: {0}")]
    InvalidProjector(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid state vector: {0}")]
    InvalidStateVector(String),
}

pub type Result<T> = std::result::Result<T, SeaError>;
