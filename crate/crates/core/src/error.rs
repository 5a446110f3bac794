use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported WAV encoding in {path}: {detail}")]
    UnsupportedWav { path: PathBuf, detail: String },

    #[error("{path} has {channels} channels; only mono input is supported (downmix upstream)")]
    MultichannelInput { path: PathBuf, channels: u16 },

    #[error("clip {id:?} is silent over the framed region (zero energy)")]
    SilentClip { id: String },

    #[error("clip {id:?} is shorter than one frame ({samples} samples, frame length {frame_len})")]
    TooShort {
        id: String,
        samples: usize,
        frame_len: usize,
    },

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("frame duration mismatch: {left} s vs {right} s")]
    FrameDurationMismatch { left: f64, right: f64 },

    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed RTTM at {path}:{line}: {detail}")]
    RttmParse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("cleansing failed for clip {id:?}: {detail}")]
    Cleanse { id: String, detail: String },

    #[error("clip {id:?} has no VAD-active frames")]
    NoActiveFrames { id: String },

    #[error("corpus has {available} accepted entries; at least {required} required")]
    CorpusTooSmall { available: usize, required: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{n} singers is too large for permutation enumeration (limit {limit})")]
    TooManySingers { n: usize, limit: usize },

    #[error("score undefined: no reference singer activity inside the evaluation mask")]
    UndefinedScore,

    #[error("manifest error in {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
