use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("piezo voltage {voltage} V exceeds the ±{limit} V actuator range")]
    ActuatorSaturation { voltage: f64, limit: f64 },

    #[error("gauge error: {0}")]
    Gauge(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("controller fault: non-finite error input")]
    ControllerFault,

    #[error("time step {dt} s too large for stable integration (limit {limit} s)")]
    StepSize { dt: f64, limit: f64 },

    #[error(
        "no simultaneous resonance within bounds; nearest approach leaves the slave \
         {nearest_detuning:.3e} Hz from a mode (tolerance {tolerance:.3e} Hz)"
    )]
    Initialization { nearest_detuning: f64, tolerance: f64 },

    #[error("classification error: {0}")]
    Classification(String),

    #[error("weighting error: {0}")]
    Weighting(String),

    #[error("steady state is not unique: kernel dimension {dimension}, decoupled subspace {subspace}")]
    Degenerate { dimension: usize, subspace: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
