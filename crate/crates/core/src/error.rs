use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input data: {0}")]
    InvalidData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit failed after {iterations} iterations: {reason}")]
    FitFailure {
        reason: String,
        iterations: usize,
        /// Best parameter vector reached before giving up, in the
        /// caller-facing parameterisation of the fit that failed.
        best_params: Vec<f64>,
    },

    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),

    #[error("invalid gas coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("unphysical composition: he = {he_amagat} amg, n2 = {n2_amagat} amg")]
    UnphysicalComposition { he_amagat: f64, n2_amagat: f64 },

    #[error("slowing-down factor q = {q} is too small for nuclear spin I = {spin}")]
    InvalidSlowingFactor { spin: f64, q: f64 },

    #[error("tone at {freq_hz} Hz not detected (power SNR {snr:.3} < {threshold})")]
    MissingTone {
        freq_hz: f64,
        snr: f64,
        threshold: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient band: {0}")]
    InsufficientBand(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{name} must be finite and > 0, got {value}"
        )))
    }
}
