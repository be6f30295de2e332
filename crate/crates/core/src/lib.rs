//! Energy and carbon accounting for long-running compute jobs.
//!
//! The crate samples component power ([`telemetry`]), segments the resulting
//! energy by training epochs and extrapolates partial runs ([`epochs`]),
//! resolves regional carbon intensity through a layered provider chain
//! ([`intensity`]), converts energy into emissions and interpretable
//! equivalents ([`accounting`]) and recommends low-carbon start times
//! ([`advisor`]). [`protocol`] holds the newline-delimited epoch marker
//! protocol spoken by training-loop clients.
//!
//! All numeric kernels are generic over [`Scalar`]; the aliases at the crate
//! root fix the scalar to `f64`, which is what the CLI and file formats use.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod advisor;
pub mod epochs;
pub mod intensity;
pub mod protocol;
pub mod scalar;
pub mod telemetry;

pub use scalar::Scalar;

/// Milliseconds since the Unix epoch (UTC).
pub type TimestampMs = i64;

pub type PowerSample = telemetry::PowerSample<f64>;
pub type EnergySpan = telemetry::EnergySpan<f64>;
pub type SampleLog = telemetry::SampleLog<f64>;
pub type EpochRecord = epochs::EpochRecord<f64>;
pub type EnergyLedger = epochs::EnergyLedger<f64>;
pub type Prediction = epochs::Prediction<f64>;
pub type CarbonIntensity = intensity::CarbonIntensity<f64>;
pub type IntensityForecast = intensity::IntensityForecast<f64>;
pub type IntensityResolver = intensity::IntensityResolver<f64>;
pub type EmissionsReport = accounting::EmissionsReport<f64>;
pub type AggregateEstimate = accounting::AggregateEstimate<f64>;
pub type AggregateEmissions = accounting::AggregateEmissions<f64>;
pub type ScheduleAdvice = advisor::ScheduleAdvice<f64>;
