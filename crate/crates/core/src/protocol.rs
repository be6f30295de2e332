//! Epoch marker wire protocol.
//!
//! Clients send one JSON document per line:
//!
//! ```text
//! {"v":1,"type":"epoch_start","epoch":0,"ts_ms":1700000000000,"run_id":"abc"}
//! ```
//!
//! and read back `{"ok":true}` or `{"ok":false,"error":"<code>"}` for each.
//! A session must open with `hello` and ends with `stop`.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epochs::{EnergyLedger, EpochError};
use crate::scalar::Scalar;
use crate::telemetry::SampleSnapshot;
use crate::TimestampMs;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerType {
    Hello,
    EpochStart,
    EpochEnd,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerMessage {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: MarkerType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    pub ts_ms: TimestampMs,
    pub run_id: String,
}

impl MarkerMessage {
    pub fn new(kind: MarkerType, epoch: Option<usize>, ts_ms: TimestampMs, run_id: &str) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            kind,
            epoch,
            ts_ms,
            run_id: run_id.to_string(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("marker serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Ack {
    pub fn ok() -> Self {
        Self {
            ok: true,
            error: None,
        }
    }

    pub fn error(code: &str) -> Self {
        Self {
            ok: false,
            error: Some(code.to_string()),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("ack serializes")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u32),
    #[error("hello must be the first message")]
    HelloRequired,
    #[error("message for run {got} on a session for {expected}")]
    RunIdMismatch { expected: String, got: String },
    #[error("{kind:?} requires an epoch number")]
    MissingEpoch { kind: MarkerType },
    #[error("epoch {got} where {expected} was expected")]
    UnexpectedEpoch { expected: usize, got: usize },
    #[error("epoch {0} is already open")]
    EpochAlreadyOpen(usize),
    #[error("no epoch is open")]
    NoOpenEpoch,
    #[error("marker timestamp goes backwards")]
    OutOfOrder,
    #[error("session already stopped")]
    Stopped,
    #[error("ledger error: {0}")]
    Ledger(String),
}

impl ProtocolError {
    /// Short code carried in error acks.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Malformed(_) => "malformed",
            Self::UnsupportedVersion(_) => "unsupported-version",
            Self::HelloRequired => "hello-required",
            Self::RunIdMismatch { .. } => "run-id-mismatch",
            Self::MissingEpoch { .. } => "missing-epoch",
            Self::UnexpectedEpoch { .. } => "out-of-order",
            Self::EpochAlreadyOpen(_) => "epoch-already-open",
            Self::NoOpenEpoch => "no-open-epoch",
            Self::OutOfOrder => "out-of-order",
            Self::Stopped => "stopped",
            Self::Ledger(_) => "ledger-error",
        }
    }
}

impl From<EpochError> for ProtocolError {
    fn from(e: EpochError) -> Self {
        match e {
            EpochError::EpochAlreadyOpen(i) => Self::EpochAlreadyOpen(i),
            EpochError::NoOpenEpoch => Self::NoOpenEpoch,
            EpochError::OutOfOrder { .. } => Self::OutOfOrder,
            other => Self::Ledger(other.to_string()),
        }
    }
}

pub fn parse_message(line: &str) -> Result<MarkerMessage, ProtocolError> {
    serde_json::from_str(line.trim()).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEvent {
    Continue,
    /// The client sent `stop`; the run is finished.
    Stop,
}

/// Per-connection protocol state. All sessions of a run share one ledger.
#[derive(Debug, Clone, Default)]
pub struct MarkerSession {
    run_id: Option<String>,
    stopped: bool,
}

impl MarkerSession {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run_id(&self) -> Option<&str> {
        self.run_id.as_deref()
    }

    /// Validates `msg` and applies it to `ledger`. `samples` is only called
    /// when an epoch closes.
    pub fn apply<T: Scalar>(
        &mut self,
        msg: &MarkerMessage,
        ledger: &mut EnergyLedger<T>,
        samples: impl FnOnce() -> SampleSnapshot<T>,
    ) -> Result<SessionEvent, ProtocolError> {
        if msg.v != PROTOCOL_VERSION {
            return Err(ProtocolError::UnsupportedVersion(msg.v));
        }
        if self.stopped {
            return Err(ProtocolError::Stopped);
        }
        match (&self.run_id, msg.kind) {
            (None, MarkerType::Hello) => {
                if msg.run_id != ledger.run_id {
                    return Err(ProtocolError::RunIdMismatch {
                        expected: ledger.run_id.clone(),
                        got: msg.run_id.clone(),
                    });
                }
                self.run_id = Some(msg.run_id.clone());
                return Ok(SessionEvent::Continue);
            }
            (None, _) => return Err(ProtocolError::HelloRequired),
            (Some(expected), _) if *expected != msg.run_id => {
                return Err(ProtocolError::RunIdMismatch {
                    expected: expected.clone(),
                    got: msg.run_id.clone(),
                })
            }
            _ => {}
        }

        match msg.kind {
            MarkerType::Hello => Ok(SessionEvent::Continue),
            MarkerType::EpochStart => {
                let epoch = msg
                    .epoch
                    .ok_or(ProtocolError::MissingEpoch { kind: msg.kind })?;
                if let Some(open) = ledger.open_epoch() {
                    return Err(ProtocolError::EpochAlreadyOpen(open));
                }
                if epoch != ledger.next_index() {
                    return Err(ProtocolError::UnexpectedEpoch {
                        expected: ledger.next_index(),
                        got: epoch,
                    });
                }
                ledger.epoch_start(msg.ts_ms)?;
                Ok(SessionEvent::Continue)
            }
            MarkerType::EpochEnd => {
                let epoch = msg
                    .epoch
                    .ok_or(ProtocolError::MissingEpoch { kind: msg.kind })?;
                let open = ledger.open_epoch().ok_or(ProtocolError::NoOpenEpoch)?;
                if epoch != open {
                    return Err(ProtocolError::UnexpectedEpoch {
                        expected: open,
                        got: epoch,
                    });
                }
                ledger.epoch_end(msg.ts_ms, &samples())?;
                Ok(SessionEvent::Continue)
            }
            MarkerType::Stop => {
                self.stopped = true;
                Ok(SessionEvent::Stop)
            }
        }
    }

    /// Applies a message and renders the ack line.
    pub fn handle_line<T: Scalar>(
        &mut self,
        line: &str,
        ledger: &mut EnergyLedger<T>,
        samples: impl FnOnce() -> SampleSnapshot<T>,
    ) -> (Ack, SessionEvent) {
        match parse_message(line).and_then(|msg| self.apply(&msg, ledger, samples)) {
            Ok(event) => (Ack::ok(), event),
            Err(e) => (Ack::error(e.code()), SessionEvent::Continue),
        }
    }
}

#[derive(Debug, Error)]
#[error("marker line {line}: {error}")]
pub struct ReplayError {
    pub line: usize,
    pub error: ProtocolError,
}

/// Drives a ledger from a recorded marker stream (one message per line).
/// Blank lines are skipped; any rejected marker aborts with its line number.
pub fn replay_markers<T: Scalar, R: BufRead>(
    reader: R,
    ledger: &mut EnergyLedger<T>,
    samples: &SampleSnapshot<T>,
) -> Result<(), ReplayError> {
    let mut session = MarkerSession::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| ReplayError {
            line: line_no,
            error: ProtocolError::Malformed(e.to_string()),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = parse_message(&line)
            .and_then(|msg| session.apply(&msg, ledger, || samples.clone()))
            .map_err(|error| ReplayError {
                line: line_no,
                error,
            })?;
        if event == SessionEvent::Stop {
            break;
        }
    }
    Ok(())
}
