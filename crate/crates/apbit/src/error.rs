use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A value does not fit the requested bit width / encoding.
    #[error("value {value} out of range for {bits}-bit {encoding} tensor")]
    ValueOutOfRange {
        value: i32,
        bits: u8,
        encoding: &'static str,
    },

    /// PlusMinusOne encoding is only defined for 1-bit tensors.
    #[error("plus/minus-one encoding requires 1 bit, got {bits}")]
    BadEncoding { bits: u8 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// No dot-product rule exists for this pair of operand encodings.
    #[error("illegal encoding pair: weights {weights:?} x features {features:?}")]
    IllegalEncodingPair {
        weights: crate::bitplane::Encoding,
        features: crate::bitplane::Encoding,
    },

    #[error("bad tile config: {0}")]
    BadTileConfig(String),

    #[error("bad layout tag: {0}")]
    BadLayoutTag(String),

    #[error("graph shape error: {0}")]
    GraphShapeError(String),

    #[error("unsupported layer: {0}")]
    UnsupportedLayer(String),

    /// Malformed `.bpt` payload or model file.
    #[error("format error: {0}")]
    Format(String),

    /// Model config parse failure with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
