//! Power sampling and energy integration.
//!
//! Sources produce [`PowerSample`]s (one instantaneous reading for one
//! component). Samples from several sources land in a shared [`SampleLog`];
//! energy is obtained by integrating a component's readings over a time
//! window with the trapezoidal rule and converting watt-seconds to kWh.

mod gpu;
mod rapl;
mod sources;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Scalar, JOULES_PER_KWH};
use crate::TimestampMs;

pub use gpu::{parse_nvidia_smi, NvidiaSmiSource};
pub use rapl::PowercapSource;
pub use sources::{
    open_live_source, open_source, read_replay, write_samples_csv, PowerSource, SampleStream,
    SourceConfig, SourceKind, SyntheticSource, DEFAULT_INTERVAL_MS,
};

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("unsupported platform: {0}")]
    UnsupportedPlatform(String),
    #[error("malformed replay file at line {line}: {reason}")]
    MalformedReplay { line: u64, reason: String },
    #[error("insufficient samples for {component}: {available} usable, need at least 2")]
    InsufficientSamples { component: String, available: usize },
    #[error("invalid pue {0}: must be >= 1.0")]
    InvalidPue(f64),
    #[error("invalid window: start {start} is after end {end}")]
    InvalidWindow {
        start: TimestampMs,
        end: TimestampMs,
    },
    #[error("invalid power reading {watts} W for {component}")]
    InvalidPower { component: String, watts: f64 },
    #[error("sample for {component} at {timestamp_ms} does not advance its stream")]
    OutOfOrderSample {
        component: String,
        timestamp_ms: TimestampMs,
    },
    #[error("samples from more than one component passed to integrate")]
    MixedComponents,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One timestamped instantaneous power reading for one hardware component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSample<T> {
    pub timestamp_ms: TimestampMs,
    pub component: String,
    pub watts: T,
}

impl<T: Scalar> PowerSample<T> {
    pub fn new(
        timestamp_ms: TimestampMs,
        component: impl Into<String>,
        watts: T,
    ) -> Result<Self, TelemetryError> {
        let component = component.into();
        if !(watts >= T::zero()) || !watts.is_finite() {
            return Err(TelemetryError::InvalidPower {
                component,
                watts: watts.as_f64(),
            });
        }
        Ok(Self {
            timestamp_ms,
            component,
            watts,
        })
    }
}

/// Energy over a time window, split by component, with the facility overhead
/// multiplier already folded into `total_kwh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpan<T> {
    pub start_ms: TimestampMs,
    pub end_ms: TimestampMs,
    pub per_component_kwh: BTreeMap<String, T>,
    pub total_kwh: T,
    pub pue: T,
}

impl<T: Scalar> EnergySpan<T> {
    pub fn new(
        start_ms: TimestampMs,
        end_ms: TimestampMs,
        per_component_kwh: BTreeMap<String, T>,
        pue: T,
    ) -> Result<Self, TelemetryError> {
        if end_ms < start_ms {
            return Err(TelemetryError::InvalidWindow {
                start: start_ms,
                end: end_ms,
            });
        }
        check_pue(pue)?;
        let device: T = per_component_kwh
            .values()
            .fold(T::zero(), |acc, &kwh| acc + kwh);
        Ok(Self {
            start_ms,
            end_ms,
            per_component_kwh,
            total_kwh: pue * device,
            pue,
        })
    }

    /// A zero-energy span, used for windows that could not be measured.
    pub fn empty(start_ms: TimestampMs, end_ms: TimestampMs, pue: T) -> Self {
        Self {
            start_ms,
            end_ms,
            per_component_kwh: BTreeMap::new(),
            total_kwh: T::zero(),
            pue,
        }
    }

    /// Sum of the per-component device energy, before the PUE multiplier.
    pub fn device_kwh(&self) -> T {
        self.per_component_kwh
            .values()
            .fold(T::zero(), |acc, &kwh| acc + kwh)
    }
}

fn check_pue<T: Scalar>(pue: T) -> Result<(), TelemetryError> {
    if pue >= T::one() && pue.is_finite() {
        Ok(())
    } else {
        Err(TelemetryError::InvalidPue(pue.as_f64()))
    }
}

/// Scales the span's total by `pue`. Per-component device energy is left as
/// measured and the span's recorded multiplier accumulates, so applying it
/// twice scales twice.
pub fn apply_pue<T: Scalar>(span: &EnergySpan<T>, pue: T) -> Result<EnergySpan<T>, TelemetryError> {
    check_pue(pue)?;
    Ok(EnergySpan {
        start_ms: span.start_ms,
        end_ms: span.end_ms,
        per_component_kwh: span.per_component_kwh.clone(),
        total_kwh: span.total_kwh * pue,
        pue: span.pue * pue,
    })
}

/// How holes in a sample stream are bridged.
///
/// Consecutive samples further apart than `max_gap_ms` are not interpolated:
/// the earlier reading is held across the gap and the result is flagged as
/// degraded. With `max_gap_ms = None` every pair is interpolated linearly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GapPolicy {
    pub max_gap_ms: Option<i64>,
}

impl GapPolicy {
    pub const NONE: GapPolicy = GapPolicy { max_gap_ms: None };

    /// Gaps longer than ten sampling intervals are held rather than interpolated.
    pub fn from_interval(interval_ms: i64) -> Self {
        Self {
            max_gap_ms: Some(interval_ms.saturating_mul(10)),
        }
    }

    fn is_gap(&self, span_ms: i64) -> bool {
        self.max_gap_ms.is_some_and(|max| span_ms > max)
    }
}

/// Result of integrating one component over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub kwh: T,
    /// Part of the window was bridged by holding a value across a gap or
    /// beyond the sampled range.
    pub degraded: bool,
}

/// Trapezoidal energy (kWh) of one component's samples over `[start, end]`.
///
/// Readings are interpolated linearly at the window edges. Outside the
/// sampled range the nearest reading is held.
pub fn integrate<T: Scalar>(
    samples: &[PowerSample<T>],
    start: TimestampMs,
    end: TimestampMs,
) -> Result<T, TelemetryError> {
    integrate_with(samples, start, end, GapPolicy::NONE).map(|i| i.kwh)
}

pub fn integrate_with<T: Scalar>(
    samples: &[PowerSample<T>],
    start: TimestampMs,
    end: TimestampMs,
    policy: GapPolicy,
) -> Result<Integral<T>, TelemetryError> {
    if end < start {
        return Err(TelemetryError::InvalidWindow { start, end });
    }
    let component = samples
        .first()
        .map(|s| s.component.as_str())
        .unwrap_or_default();
    for pair in samples.windows(2) {
        if pair[1].component != pair[0].component {
            return Err(TelemetryError::MixedComponents);
        }
        if pair[1].timestamp_ms <= pair[0].timestamp_ms {
            return Err(TelemetryError::OutOfOrderSample {
                component: pair[1].component.clone(),
                timestamp_ms: pair[1].timestamp_ms,
            });
        }
    }

    // Samples inside the window plus one bracketing sample on either side.
    let first_inside = samples.partition_point(|s| s.timestamp_ms < start);
    let after_end = samples.partition_point(|s| s.timestamp_ms <= end);
    let lo = first_inside.saturating_sub(1);
    let hi = (after_end + 1).min(samples.len());
    let usable = &samples[lo..hi];
    if usable.len() < 2 {
        return Err(TelemetryError::InsufficientSamples {
            component: component.to_string(),
            available: usable.len(),
        });
    }

    let mut watt_ms = T::zero();
    let mut degraded = false;

    // Edges outside the sampled range hold the nearest reading.
    let first = &usable[0];
    let last = &usable[usable.len() - 1];
    if start < first.timestamp_ms {
        let covered_until = end.min(first.timestamp_ms);
        let len = covered_until - start;
        watt_ms += first.watts * T::from_ms(len);
        degraded |= edge_is_gap(&policy, len);
    }
    if end > last.timestamp_ms {
        let from = start.max(last.timestamp_ms);
        let len = end - from;
        watt_ms += last.watts * T::from_ms(len);
        degraded |= edge_is_gap(&policy, len);
    }

    for pair in usable.windows(2) {
        let (left, right) = (&pair[0], &pair[1]);
        let a = start.max(left.timestamp_ms);
        let b = end.min(right.timestamp_ms);
        if b <= a {
            continue;
        }
        let seg_len = right.timestamp_ms - left.timestamp_ms;
        if policy.is_gap(seg_len) {
            watt_ms += left.watts * T::from_ms(b - a);
            degraded = true;
            continue;
        }
        let at = |t: TimestampMs| {
            left.watts
                + (right.watts - left.watts) * T::from_ms(t - left.timestamp_ms)
                    / T::from_ms(seg_len)
        };
        watt_ms += (at(a) + at(b)) * T::from_ms(b - a) / T::lit(2.0);
    }

    Ok(Integral {
        kwh: watt_ms / T::lit(JOULES_PER_KWH * 1000.0),
        degraded,
    })
}

fn edge_is_gap(policy: &GapPolicy, len: i64) -> bool {
    match policy.max_gap_ms {
        Some(max) => len > max,
        None => len > 0,
    }
}

/// Energy of every component in `snapshot` over `[start, end]`.
#[derive(Debug, Clone)]
pub struct WindowEnergy<T> {
    pub span: EnergySpan<T>,
    pub degraded: bool,
    /// Components that had fewer than two usable samples; recorded as zero.
    pub unmeasured: Vec<String>,
}

pub fn integrate_window<T: Scalar>(
    snapshot: &SampleSnapshot<T>,
    start: TimestampMs,
    end: TimestampMs,
    pue: T,
    policy: GapPolicy,
) -> Result<WindowEnergy<T>, TelemetryError> {
    let mut per_component = BTreeMap::new();
    let mut degraded = false;
    let mut unmeasured = Vec::new();
    for (component, samples) in snapshot.iter() {
        match integrate_with(samples, start, end, policy) {
            Ok(integral) => {
                degraded |= integral.degraded;
                per_component.insert(component.clone(), integral.kwh);
            }
            Err(TelemetryError::InsufficientSamples { .. }) => {
                unmeasured.push(component.clone());
            }
            Err(e) => return Err(e),
        }
    }
    if per_component.is_empty() {
        degraded = true;
    }
    Ok(WindowEnergy {
        span: EnergySpan::new(start, end, per_component, pue)?,
        degraded: degraded || !unmeasured.is_empty(),
        unmeasured,
    })
}

/// Immutable view of a [`SampleLog`] at one instant.
pub type SampleSnapshot<T> = Arc<BTreeMap<String, Vec<PowerSample<T>>>>;

/// Append-only, per-component sample store shared by every sampling thread.
///
/// Readers take cheap snapshots; writers never wait on integration.
#[derive(Debug, Clone)]
pub struct SampleLog<T> {
    inner: Arc<RwLock<SampleSnapshot<T>>>,
}

impl<T: Scalar> Default for SampleLog<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> SampleLog<T> {
    pub fn new() -> Self {
        Self {
            inner: Arc::new(RwLock::new(Arc::new(BTreeMap::new()))),
        }
    }

    /// Appends one sample. Timestamps must strictly increase per component.
    pub fn append(&self, sample: PowerSample<T>) -> Result<(), TelemetryError> {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        // Copy-on-write: outstanding snapshots keep the old map.
        let map = Arc::make_mut(&mut guard);
        let stream = map.entry(sample.component.clone()).or_default();
        if let Some(last) = stream.last() {
            if sample.timestamp_ms <= last.timestamp_ms {
                return Err(TelemetryError::OutOfOrderSample {
                    component: sample.component,
                    timestamp_ms: sample.timestamp_ms,
                });
            }
        }
        stream.push(sample);
        Ok(())
    }

    pub fn extend(
        &self,
        samples: impl IntoIterator<Item = PowerSample<T>>,
    ) -> Result<(), TelemetryError> {
        samples.into_iter().try_for_each(|s| self.append(s))
    }

    pub fn snapshot(&self) -> SampleSnapshot<T> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
