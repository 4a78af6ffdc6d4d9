use std::fmt::Write as _;
use std::path::PathBuf;

use strain_cascade_core::cascade::CascadeError;
use strain_cascade_core::simulate::IntegrationError;
use strain_cascade_core::Violation;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}", format_violations(.0))]
    Validation(Vec<Violation>),
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed for seed {seed}: {reason}")]
    VerifyFailed { seed: u64, reason: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Validation(_) | Self::Io { .. } => EXIT_INVALID,
            Self::VerifyFailed { .. } => EXIT_VERIFY_FAILED,
            Self::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    let mut out = format!("{} schema violation(s):", violations.len());
    for v in violations {
        let _ = write!(out, "\n  - {v}");
    }
    out
}

impl From<CascadeError> for CliError {
    fn from(e: CascadeError) -> Self {
        match e {
            CascadeError::InvalidParameters(v) => Self::Validation(v),
            other => Self::Numeric(other.to_string()),
        }
    }
}

impl From<IntegrationError> for CliError {
    fn from(e: IntegrationError) -> Self {
        match e {
            IntegrationError::InvalidParameters(v) => Self::Validation(v),
            IntegrationError::InvalidConfig(_)
            | IntegrationError::DimensionMismatch { .. }
            | IntegrationError::InvalidInitial { .. } => Self::Config(e.to_string()),
            other => {
                let last = other
                    .last_good()
                    .map(|(t, _)| format!(" (last good time {t})"))
                    .unwrap_or_default();
                Self::Numeric(format!("{other}{last}"))
            }
        }
    }
}
