use thiserror::Error;

/// Errors raised by the density-geometry routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("input does not have zero mean (mean = {mean:e})")]
    NonZeroMean { mean: f64 },

    #[error("density is negative ({value:e}) at node {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("input must be strictly positive; found {value:e} at node {index}")]
    NonPositiveInput { index: usize, value: f64 },

    #[error("densities carry different masses: {0} vs {1}")]
    MassMismatch(f64, f64),

    #[error("kappa vanishes but the initial divergence does not (sup = {sup:e})")]
    InconsistentZeroKappa { sup: f64 },

    #[error("time {t} is at or beyond the blowup time {t_max}")]
    BeyondBlowup { t: f64, t_max: f64 },

    #[error("step too large: {0}")]
    StepTooLarge(String),

    #[error("prescribed Jacobian is not positive ({value:e} at t = {t})")]
    NonPositiveJacobian { t: f64, value: f64 },

    #[error("mass drift {drift:e} at t = {t}")]
    MassDrift { t: f64, drift: f64 },

    #[error("map inversion did not converge (residual {residual:e})")]
    InversionDiverged { residual: f64 },

    #[error("velocity is not tangent to the sphere (<f, fdot> = {0:e})")]
    NotTangent(f64),

    #[error("invalid simplex point: {0}")]
    InvalidSimplexPoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error object and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::GridMismatch => "GridMismatch",
            Error::NonZeroMean { .. } => "NonZeroMean",
            Error::NegativeDensity { .. } => "NegativeDensity",
            Error::NonPositiveInput { .. } => "NonPositiveInput",
            Error::MassMismatch(..) => "MassMismatch",
            Error::InconsistentZeroKappa { .. } => "InconsistentZeroKappa",
            Error::BeyondBlowup { .. } => "BeyondBlowup",
            Error::StepTooLarge(_) => "StepTooLarge",
            Error::NonPositiveJacobian { .. } => "NonPositiveJacobian",
            Error::MassDrift { .. } => "MassDrift",
            Error::InversionDiverged { .. } => "InversionDiverged",
            Error::NotTangent(_) => "NotTangent",
            Error::InvalidSimplexPoint(_) => "InvalidSimplexPoint",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }

    /// True for failures of a numerical run (as opposed to rejected input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InconsistentZeroKappa { .. }
                | Error::BeyondBlowup { .. }
                | Error::StepTooLarge(_)
                | Error::MassDrift { .. }
                | Error::InversionDiverged { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
