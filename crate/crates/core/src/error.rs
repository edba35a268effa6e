use thiserror::Error;

/// Errors produced by the lab's validation and numeric guards.
#[derive(Debug, Error)]
pub enum Error {
    #[error("potential block is not symmetric: max asymmetry {defect:e} exceeds {tol:e}")]
    NonSymmetricPotential { defect: f64, tol: f64 },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("wedge index k={k} out of range 1..={max}")]
    WedgeIndexOutOfRange { k: usize, max: usize },

    #[error("degenerate frame: {context}")]
    DegenerateFrame { context: String },

    #[error("frame is not Lagrangian: symplectic defect {defect:e} exceeds {tol:e}")]
    NotLagrangian { defect: f64, tol: f64 },

    #[error("invalid model: {context}")]
    InvalidModel { context: String },

    #[error("invalid parameter: {context}")]
    InvalidParameter { context: String },

    #[error("invalid grid: {context}")]
    InvalidGrid { context: String },

    #[error("evaluation point too close to a singular cell (mass {mass:.3} within one cell)")]
    SingularProximity { mass: f64 },

    #[error("schedule level n={n} too small (minimum {min})")]
    LevelTooSmall { n: usize, min: usize },

    #[error("polynomial weights p_n = n^-s require a bounded potential model")]
    UnboundedModelPolynomialWeight,

    #[error("spectral parameter must have Im z != 0")]
    RealSpectralParameter,

    #[error("unsupported boundary frame: {context}")]
    UnsupportedBoundary { context: String },

    #[error("seed kind does not match the model: {context}")]
    SeedKindMismatch { context: String },

    #[error("numeric failure: {context}")]
    Numeric { context: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>) -> Self {
        Error::DimensionMismatch { context: context.into() }
    }

    pub(crate) fn model(context: impl Into<String>) -> Self {
        Error::InvalidModel { context: context.into() }
    }

    pub(crate) fn param(context: impl Into<String>) -> Self {
        Error::InvalidParameter { context: context.into() }
    }
}
