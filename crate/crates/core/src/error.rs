use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {left} is {left_dims}, {right} is {right_dims}")]
    DimensionMismatch {
        left: String,
        left_dims: String,
        right: String,
        right_dims: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: u64, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("flow format error: {0}")]
    FlowFormat(String),

    #[error("flow payload length mismatch: expected {expected} bytes, got {actual}")]
    FlowLength { expected: usize, actual: usize },

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("frame count mismatch: {asset} has {actual} entries, expected {expected}")]
    FrameCount {
        asset: String,
        expected: usize,
        actual: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

/// Fails with [`Error::DimensionMismatch`] unless both sizes agree.
pub(crate) fn ensure_same_size(
    left: &str,
    left_size: (usize, usize),
    right: &str,
    right_size: (usize, usize),
) -> Result<()> {
    if left_size == right_size {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left: left.to_string(),
            left_dims: format!("{}x{}", left_size.0, left_size.1),
            right: right.to_string(),
            right_dims: format!("{}x{}", right_size.0, right_size.1),
        })
    }
}

/// Non-fatal conditions reported alongside a result.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// An input direction was not unit length and has been normalized.
    DirectionRenormalized,
    /// The mask (or normal map) contained no shaded foreground pixel.
    EmptyForeground,
    /// Background channel had zero variance; only its mean was transferred.
    ZeroVarianceBackground { channel: usize },
    /// Most of the frame lacked texture for flow estimation.
    LowConfidenceFlow { fraction: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::DirectionRenormalized => write!(f, "direction renormalized to unit length"),
            Warning::EmptyForeground => write!(f, "no foreground pixels; neutral shading used"),
            Warning::ZeroVarianceBackground { channel } => {
                write!(f, "background channel {channel} has zero variance; mean shift only")
            }
            Warning::LowConfidenceFlow { fraction } => {
                write!(f, "{:.0}% of pixels lack texture for flow", fraction * 100.0)
            }
        }
    }
}

/// A value with the warnings raised while computing it.
#[derive(Debug, Clone)]
pub struct Flagged<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
}

impl<T> Flagged<T> {
    pub fn clean(value: T) -> Self {
        Self {
            value,
            warnings: Vec::new(),
        }
    }

    pub fn with(value: T, warnings: Vec<Warning>) -> Self {
        Self { value, warnings }
    }

    pub fn into_inner(self) -> T {
        self.value
    }

    pub fn has(&self, pred: impl Fn(&Warning) -> bool) -> bool {
        self.warnings.iter().any(pred)
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Flagged<U> {
        Flagged {
            value: f(self.value),
            warnings: self.warnings,
        }
    }
}
