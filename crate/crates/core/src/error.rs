use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // audio
    #[error("malformed RIFF/WAVE container: {0}")]
    MalformedContainer(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no sample frames")]
    EmptyAudio,
    #[error("sample rate out of range: {0} Hz (minimum 4000 Hz)")]
    RateOutOfRange(u32),

    // dsp
    #[error("input too short: {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("degenerate mel band: {0}")]
    DegenerateBand(String),
    #[error("F0 contour is empty")]
    EmptyContour,

    // nn
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("convolution kernel width must be odd, got {0}")]
    EvenKernel(usize),
    #[error("model dimension {d} is not divisible by {heads} heads")]
    IndivisibleHeads { d: usize, heads: usize },
    #[error("channels {channels} not divisible by scale {scale}")]
    IndivisibleScale { channels: usize, scale: usize },
    #[error("non-finite value: {0}")]
    NonFiniteEvaluation(String),

    // weights
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("unexpected parameters: {}", .0.join(", "))]
    UnexpectedParameters(Vec<String>),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    // evaluation
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("need at least 2 candidates, got {0}")]
    TooFewCandidates(usize),

    // cli / io
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
