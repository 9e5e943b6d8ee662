use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid mismatch profile: {0}")]
    Profile(String),

    #[error("channel index {index} out of range for {channels} channels")]
    ChannelIndex { index: usize, channels: usize },

    #[error("frequency must be finite and non-negative, got {0}")]
    Frequency(f64),

    #[error("length {len} is not a positive multiple of {m} channels")]
    NotMultiple { len: usize, m: usize },

    #[error("channel sequences have unequal lengths")]
    RaggedChannels,

    #[error("degenerate sine-fit input: {0}")]
    DegenerateFit(String),

    #[error("tone at {freq_hz} Hz is not coherent with a {n}-sample record")]
    NonCoherent { freq_hz: f64, n: usize },

    #[error("unreliable measurement at {freq_hz} Hz: {reason}")]
    UnreliableMeasurement { freq_hz: f64, reason: String },

    #[error("invalid measurements: {0}")]
    Measurements(String),

    #[error("invalid design: {0}")]
    Design(String),

    #[error("singular design at omega = {omega:.6} rad/sample (condition number {cond:.3e})")]
    SingularDesign { omega: f64, cond: f64 },

    #[error("capture of {len} samples is too short, need at least {need}")]
    CaptureTooShort { len: usize, need: usize },

    #[error("channel count mismatch: capture has {capture}, bank has {bank}")]
    ChannelMismatch { capture: usize, bank: usize },

    #[error("fundamental not found at {freq_hz} Hz")]
    FundamentalNotFound { freq_hz: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            msg: msg.to_string(),
        }
    }
}
