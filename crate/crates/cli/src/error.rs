use std::fmt;

use serde::Serialize;
use shrinkage::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numerical,
            message: message.into(),
        }
    }

    pub fn io(what: &str, e: impl fmt::Display) -> Self {
        Self::usage(format!("{what}: {e}"))
    }

    /// `{"error": {"kind", "message"}, "exit_code"}`
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self, "exit_code": self.kind.exit_code() }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Usage => "usage error",
            ErrorKind::Numerical => "numerical failure",
        };
        write!(f, "{kind}: {}", self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } | Error::InvalidParameter(_) | Error::RankDeficient { .. } => {
                CliError::usage(e.to_string())
            }
            Error::NonFiniteMarginal(_)
            | Error::Convergence { .. }
            | Error::DegenerateMixture
            | Error::LowEffectiveSampleSize { .. }
            | Error::NonFinite(_)
            | Error::Numerical(_) => CliError::numerical(e.to_string()),
        }
    }
}
