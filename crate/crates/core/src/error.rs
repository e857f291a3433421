use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("headway sample must be positive, got {0}")]
    NonPositiveSample(f64),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("table format: {0}")]
    TableFormat(String),

    #[error("configuration: {0}")]
    Config(String),

    /// A run reached a physically impossible state (overlap, NaN). The run
    /// is halted; the message carries the diagnostic.
    #[error("simulation integrity: {0}")]
    Integrity(String),

    #[error("no baseline run for flow {flow} veh/hr, smart share {smart_pct}%")]
    MissingBaseline { flow: f64, smart_pct: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
