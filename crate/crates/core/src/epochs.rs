//! Epoch segmentation and whole-run prediction.
//!
//! A run is bracketed into epochs by start/end markers. Closing an epoch
//! integrates every component's samples over the epoch window; the ledger of
//! closed epochs is the input to [`EnergyLedger::predict`], which extrapolates
//! the mean per-epoch energy and duration to the full number of epochs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting;
use crate::intensity::CarbonIntensity;
use crate::scalar::Scalar;
use crate::telemetry::{self, EnergySpan, GapPolicy, SampleSnapshot, TelemetryError};
use crate::TimestampMs;

#[derive(Debug, Error)]
pub enum EpochError {
    #[error("epoch {0} is already open")]
    EpochAlreadyOpen(usize),
    #[error("no epoch is open")]
    NoOpenEpoch,
    #[error("marker at {timestamp_ms} precedes {previous_ms}")]
    OutOfOrder {
        timestamp_ms: TimestampMs,
        previous_ms: TimestampMs,
    },
    #[error("ledger has no closed epochs")]
    EmptyLedger,
    #[error("total epochs {total} is less than the {measured} already measured")]
    TotalLessThanMeasured { measured: usize, total: usize },
    #[error("invalid ledger document: {0}")]
    InvalidDocument(String),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord<T> {
    pub index: usize,
    pub start_ms: TimestampMs,
    pub end_ms: TimestampMs,
    pub energy: EnergySpan<T>,
    pub duration_s: T,
    /// Part of the epoch was not covered by samples.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct OpenEpoch {
    index: usize,
    start_ms: TimestampMs,
}

/// Per-epoch energy totals of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger<T> {
    pub run_id: String,
    pub pue: T,
    pub gap_policy: GapPolicy,
    epochs: Vec<EpochRecord<T>>,
    open: Option<OpenEpoch>,
}

impl<T: Scalar> EnergyLedger<T> {
    pub fn new(run_id: impl Into<String>, pue: T) -> Result<Self, EpochError> {
        if !(pue >= T::one()) || !pue.is_finite() {
            return Err(TelemetryError::InvalidPue(pue.as_f64()).into());
        }
        Ok(Self {
            run_id: run_id.into(),
            pue,
            gap_policy: GapPolicy::NONE,
            epochs: Vec::new(),
            open: None,
        })
    }

    pub fn with_gap_policy(mut self, policy: GapPolicy) -> Self {
        self.gap_policy = policy;
        self
    }

    pub fn epochs(&self) -> &[EpochRecord<T>] {
        &self.epochs
    }

    pub fn open_epoch(&self) -> Option<usize> {
        self.open.map(|o| o.index)
    }

    pub fn next_index(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_degraded(&self) -> bool {
        self.epochs.iter().any(|e| e.degraded)
    }

    fn last_marker_ms(&self) -> Option<TimestampMs> {
        self.open
            .map(|o| o.start_ms)
            .or_else(|| self.epochs.last().map(|e| e.end_ms))
    }

    /// Opens the next epoch at `timestamp_ms`; returns its index.
    pub fn epoch_start(&mut self, timestamp_ms: TimestampMs) -> Result<usize, EpochError> {
        if let Some(open) = self.open {
            return Err(EpochError::EpochAlreadyOpen(open.index));
        }
        if let Some(previous_ms) = self.last_marker_ms() {
            if timestamp_ms < previous_ms {
                return Err(EpochError::OutOfOrder {
                    timestamp_ms,
                    previous_ms,
                });
            }
        }
        let index = self.next_index();
        self.open = Some(OpenEpoch {
            index,
            start_ms: timestamp_ms,
        });
        Ok(index)
    }

    /// Closes the open epoch, integrating every component in `samples` over
    /// the epoch window. Components without enough samples count as zero and
    /// mark the epoch degraded.
    pub fn epoch_end(
        &mut self,
        timestamp_ms: TimestampMs,
        samples: &SampleSnapshot<T>,
    ) -> Result<&EpochRecord<T>, EpochError> {
        let open = self.open.ok_or(EpochError::NoOpenEpoch)?;
        if timestamp_ms < open.start_ms {
            return Err(EpochError::OutOfOrder {
                timestamp_ms,
                previous_ms: open.start_ms,
            });
        }
        let window = telemetry::integrate_window(
            samples,
            open.start_ms,
            timestamp_ms,
            self.pue,
            self.gap_policy,
        )?;
        self.open = None;
        self.epochs.push(EpochRecord {
            index: open.index,
            start_ms: open.start_ms,
            end_ms: timestamp_ms,
            energy: window.span,
            duration_s: T::from_ms(timestamp_ms - open.start_ms) / T::lit(1000.0),
            degraded: window.degraded,
        });
        Ok(self.epochs.last().expect("just pushed"))
    }

    /// Appends an already-measured epoch (e.g. loaded from disk).
    pub fn push_record(&mut self, record: EpochRecord<T>) -> Result<(), EpochError> {
        if self.open.is_some() {
            return Err(EpochError::EpochAlreadyOpen(self.next_index()));
        }
        if record.index != self.next_index() {
            return Err(EpochError::InvalidDocument(format!(
                "epoch index {} where {} was expected",
                record.index,
                self.next_index()
            )));
        }
        if record.end_ms < record.start_ms {
            return Err(EpochError::OutOfOrder {
                timestamp_ms: record.end_ms,
                previous_ms: record.start_ms,
            });
        }
        if let Some(previous_ms) = self.last_marker_ms() {
            if record.start_ms < previous_ms {
                return Err(EpochError::OutOfOrder {
                    timestamp_ms: record.start_ms,
                    previous_ms,
                });
            }
        }
        self.epochs.push(record);
        Ok(())
    }

    pub fn total_kwh(&self) -> T {
        self.epochs
            .iter()
            .fold(T::zero(), |acc, e| acc + e.energy.total_kwh)
    }

    pub fn total_duration_s(&self) -> T {
        self.epochs
            .iter()
            .fold(T::zero(), |acc, e| acc + e.duration_s)
    }

    /// Device energy per component summed over all epochs (before PUE).
    pub fn kwh_by_component(&self) -> BTreeMap<String, T> {
        let mut out: BTreeMap<String, T> = BTreeMap::new();
        for e in &self.epochs {
            for (c, &kwh) in &e.energy.per_component_kwh {
                *out.entry(c.clone()).or_insert_with(T::zero) += kwh;
            }
        }
        out
    }

    /// Extrapolates the run to `total_epochs`.
    pub fn predict(
        &self,
        total_epochs: usize,
        intensity: &CarbonIntensity<T>,
        options: PredictOptions,
    ) -> Result<Prediction<T>, EpochError> {
        let measured = self.epochs.len();
        if measured == 0 {
            return Err(EpochError::EmptyLedger);
        }
        if total_epochs < measured {
            return Err(EpochError::TotalLessThanMeasured {
                measured,
                total: total_epochs,
            });
        }

        let reference = if options.exclude_warmup && measured >= 3 {
            &self.epochs[1..]
        } else {
            &self.epochs[..]
        };
        let energies: Vec<T> = reference.iter().map(|e| e.energy.total_kwh).collect();
        let durations: Vec<T> = reference.iter().map(|e| e.duration_s).collect();
        let mean_kwh = mean(&energies);
        let mean_duration = mean(&durations);

        let (predicted_kwh, predicted_duration_s) = match options.mode {
            PredictionMode::IncludeMeasured => {
                let remaining = T::from_usize(total_epochs - measured).unwrap_or_else(T::infinity);
                (
                    self.total_kwh() + mean_kwh * remaining,
                    self.total_duration_s() + mean_duration * remaining,
                )
            }
            PredictionMode::Reextrapolate => {
                let total = T::from_usize(total_epochs).unwrap_or_else(T::infinity);
                (mean_kwh * total, mean_duration * total)
            }
        };

        Ok(Prediction {
            measured_epochs: measured,
            total_epochs,
            predicted_kwh,
            predicted_duration_s,
            predicted_kgco2: accounting::emissions(predicted_kwh, intensity),
            intensity_used: intensity.clone(),
            energy_cv: coefficient_of_variation(&energies),
            mode: options.mode,
        })
    }

    pub fn to_document(&self) -> LedgerDocument {
        LedgerDocument {
            run_id: self.run_id.clone(),
            epochs: self
                .epochs
                .iter()
                .map(|e| EpochDocument {
                    index: e.index,
                    start_ms: e.start_ms,
                    end_ms: e.end_ms,
                    kwh_by_component: e
                        .energy
                        .per_component_kwh
                        .iter()
                        .map(|(c, v)| (c.clone(), v.as_f64()))
                        .collect(),
                    kwh_total: e.energy.total_kwh.as_f64(),
                })
                .collect(),
            pue: self.pue.as_f64(),
        }
    }

    pub fn from_document(doc: &LedgerDocument) -> Result<Self, EpochError> {
        let mut ledger = Self::new(doc.run_id.clone(), T::lit(doc.pue))?;
        for e in &doc.epochs {
            let per_component = e
                .kwh_by_component
                .iter()
                .map(|(c, &v)| {
                    if v >= 0.0 && v.is_finite() {
                        Ok((c.clone(), T::lit(v)))
                    } else {
                        Err(EpochError::InvalidDocument(format!(
                            "epoch {}: {c} has invalid energy {v}",
                            e.index
                        )))
                    }
                })
                .collect::<Result<BTreeMap<_, _>, _>>()?;
            let span = EnergySpan::new(e.start_ms, e.end_ms, per_component, ledger.pue)?;
            let expected = span.total_kwh.as_f64();
            if (expected - e.kwh_total).abs() > 1e-9 * expected.abs().max(e.kwh_total.abs()) + 1e-12
            {
                return Err(EpochError::InvalidDocument(format!(
                    "epoch {}: kwh_total {} disagrees with pue x sum of components = {expected}",
                    e.index, e.kwh_total
                )));
            }
            ledger.push_record(EpochRecord {
                index: e.index,
                start_ms: e.start_ms,
                end_ms: e.end_ms,
                energy: span,
                duration_s: T::from_ms(e.end_ms - e.start_ms) / T::lit(1000.0),
                degraded: false,
            })?;
        }
        Ok(ledger)
    }

    pub fn save(&self, path: &Path) -> Result<(), EpochError> {
        let json = serde_json::to_string_pretty(&self.to_document())
            .map_err(|e| EpochError::InvalidDocument(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|source| EpochError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EpochError> {
        let text = fs::read_to_string(path).map_err(|source| EpochError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let doc: LedgerDocument = serde_json::from_str(&text)
            .map_err(|e| EpochError::InvalidDocument(format!("{}: {e}", path.display())))?;
        Self::from_document(&doc)
    }
}

fn mean<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let n = T::from_usize(values.len()).unwrap_or_else(T::one);
    values.iter().fold(T::zero(), |acc, &v| acc + v) / n
}

/// Population standard deviation over mean; zero for a zero mean.
pub fn coefficient_of_variation<T: Scalar>(values: &[T]) -> T {
    let m = mean(values);
    if m == T::zero() {
        return T::zero();
    }
    let var = mean(
        &values
            .iter()
            .map(|&v| (v - m) * (v - m))
            .collect::<Vec<_>>(),
    );
    var.sqrt() / m
}

/// Whether the measured epochs are kept verbatim in the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    /// measured total + mean x remaining epochs
    #[default]
    IncludeMeasured,
    /// mean x all epochs
    Reextrapolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictOptions {
    /// Drop epoch 0 from the mean when at least three epochs are measured.
    pub exclude_warmup: bool,
    pub mode: PredictionMode,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            exclude_warmup: true,
            mode: PredictionMode::IncludeMeasured,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    pub measured_epochs: usize,
    pub total_epochs: usize,
    pub predicted_kwh: T,
    pub predicted_duration_s: T,
    pub predicted_kgco2: T,
    pub intensity_used: CarbonIntensity<T>,
    /// Spread of the per-epoch energies the extrapolation was based on.
    pub energy_cv: T,
    pub mode: PredictionMode,
}

/// On-disk ledger: `{run_id, epochs:[{index, start_ms, end_ms, kwh_by_component, kwh_total}], pue}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerDocument {
    pub run_id: String,
    pub epochs: Vec<EpochDocument>,
    pub pue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochDocument {
    pub index: usize,
    pub start_ms: TimestampMs,
    pub end_ms: TimestampMs,
    pub kwh_by_component: BTreeMap<String, f64>,
    pub kwh_total: f64,
}
