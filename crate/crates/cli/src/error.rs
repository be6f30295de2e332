use thiserror::Error;

use carbonledger::accounting::AccountingError;
use carbonledger::advisor::AdvisorError;
use carbonledger::epochs::EpochError;
use carbonledger::intensity::IntensityError;
use carbonledger::telemetry::TelemetryError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_TELEMETRY: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("telemetry unavailable: {0}")]
    Telemetry(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Io(_) => EXIT_IO,
            Self::Telemetry(_) => EXIT_TELEMETRY,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Self::Io(format!("{context}: {e}"))
    }
}

impl From<EpochError> for CliError {
    fn from(e: EpochError) -> Self {
        match e {
            EpochError::Io { .. } | EpochError::InvalidDocument(_) => Self::Io(e.to_string()),
            EpochError::Telemetry(t) => t.into(),
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<TelemetryError> for CliError {
    fn from(e: TelemetryError) -> Self {
        match e {
            TelemetryError::UnsupportedPlatform(_) => Self::Telemetry(e.to_string()),
            TelemetryError::Io { .. } | TelemetryError::MalformedReplay { .. } => {
                Self::Io(e.to_string())
            }
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<IntensityError> for CliError {
    fn from(e: IntensityError) -> Self {
        match e {
            IntensityError::Io { .. } | IntensityError::MalformedFile { .. } => {
                Self::Io(e.to_string())
            }
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<AdvisorError> for CliError {
    fn from(e: AdvisorError) -> Self {
        Self::Usage(e.to_string())
    }
}
