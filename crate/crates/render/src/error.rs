use std::process::ExitStatus;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid render configuration: {0}")]
    Config(String),
    #[error("palette line {line}: {msg}")]
    Palette { line: usize, msg: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty trace")]
    EmptyTrace,
    #[error("encoder exited early with {status}")]
    EncoderExited { status: ExitStatus },
    #[error("png encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("png decoding failed: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error(transparent)]
    Core(#[from] dimred::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RenderError>;
