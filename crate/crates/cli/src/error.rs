//! Error categories shared by the command line and the HTTP service.
//!
//! Every failure maps to one category with a fixed process exit code; the
//! service returns the same JSON body the CLI prints with `--json-errors`.

use std::fmt;
use std::path::Path;

use relight_core::Error as CoreError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Missing flag or unreadable input file.
    Usage,
    /// Image sizes or frame counts disagree.
    Dimension,
    /// Malformed spherical-harmonics or request JSON.
    ShJson,
    /// A value outside its accepted range.
    Parameter,
    /// Corrupt PNG or flow payload.
    Decode,
    /// Anything else, such as a failed write.
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Dimension => 3,
            ErrorKind::ShJson => 4,
            ErrorKind::Parameter => 5,
            ErrorKind::Decode => 6,
            ErrorKind::Internal => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Dimension => "dimension_mismatch",
            ErrorKind::ShJson => "invalid_json",
            ErrorKind::Parameter => "invalid_parameter",
            ErrorKind::Decode => "decode_error",
            ErrorKind::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: &'a str,
    exit_code: i32,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn parameter(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Parameter, message)
    }

    pub fn missing_flag(flag: &str) -> Self {
        Self::usage(format!("missing required flag {flag}"))
    }

    pub fn unreadable(flag: &str, path: &Path, err: impl fmt::Display) -> Self {
        Self::usage(format!("cannot read {flag} file {}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorJson {
            error: self.kind.name(),
            message: &self.message,
            exit_code: self.exit_code(),
        })
        .expect("error JSON serializes")
    }

    /// Prefixes the message with the asset it concerns.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::DimensionMismatch { .. } | CoreError::FrameCount { .. } => ErrorKind::Dimension,
            CoreError::Parameter { .. } | CoreError::InvalidInput(_) | CoreError::EmptyMask => ErrorKind::Parameter,
            CoreError::Decode { .. }
            | CoreError::UnsupportedFormat(_)
            | CoreError::FlowFormat(_)
            | CoreError::FlowLength { .. } => ErrorKind::Decode,
            CoreError::Io(_) => ErrorKind::Internal,
        };
        CliError::new(kind, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
