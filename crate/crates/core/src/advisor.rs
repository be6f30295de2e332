//! Carbon-aware start time selection over an intensity forecast.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intensity::IntensityForecast;
use crate::scalar::Scalar;
use crate::TimestampMs;

/// Window integrals within this relative distance of the minimum are ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AdvisorError {
    #[error("job duration must be positive, got {0} ms")]
    InvalidDuration(i64),
    #[error(
        "forecast covers {covered_from}..{covered_to} but {needed_from}..{needed_to} is needed"
    )]
    ForecastTooShort {
        covered_from: TimestampMs,
        covered_to: TimestampMs,
        needed_from: TimestampMs,
        needed_to: TimestampMs,
    },
    #[error("no feasible start in {earliest}..{latest}")]
    EmptyFeasibleSet {
        earliest: TimestampMs,
        latest: TimestampMs,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAdvice<T> {
    pub start_ms: TimestampMs,
    pub end_ms: TimestampMs,
    pub mean_g_per_kwh: T,
    /// Reduction against starting at `earliest`.
    pub savings_vs_now: T,
}

/// Running trapezoid integral of a forecast, in g/kWh x ms.
struct CumulativeIntensity<'a, T> {
    points: &'a [(TimestampMs, T)],
    prefix: Vec<T>,
}

impl<'a, T: Scalar> CumulativeIntensity<'a, T> {
    fn new(points: &'a [(TimestampMs, T)]) -> Self {
        let mut prefix = Vec::with_capacity(points.len());
        let mut acc = T::zero();
        prefix.push(acc);
        for w in points.windows(2) {
            acc += (w[0].1 + w[1].1) * T::from_ms(w[1].0 - w[0].0) / T::lit(2.0);
            prefix.push(acc);
        }
        Self { points, prefix }
    }

    /// Integral from the first point to `t` (which must lie inside the forecast).
    fn at(&self, t: TimestampMs) -> T {
        let i = self.points.partition_point(|&(ts, _)| ts <= t);
        // i >= 1 because t >= first timestamp
        let (t0, g0) = self.points[i - 1];
        if t == t0 || i == self.points.len() {
            return self.prefix[i - 1];
        }
        let (t1, g1) = self.points[i];
        let g_t = g0 + (g1 - g0) * T::from_ms(t - t0) / T::from_ms(t1 - t0);
        self.prefix[i - 1] + (g0 + g_t) * T::from_ms(t - t0) / T::lit(2.0)
    }
}

/// Start in `[earliest, latest]` minimising the integrated forecast over
/// `[start, start + duration_ms]`.
///
/// Candidates are `earliest` and every forecast timestamp up to `latest`.
/// Ties (within [`TIE_TOLERANCE`]) go to the earliest start.
pub fn best_window<T: Scalar>(
    forecast: &IntensityForecast<T>,
    duration_ms: i64,
    earliest: TimestampMs,
    latest: TimestampMs,
) -> Result<ScheduleAdvice<T>, AdvisorError> {
    if duration_ms <= 0 {
        return Err(AdvisorError::InvalidDuration(duration_ms));
    }
    if latest < earliest {
        return Err(AdvisorError::EmptyFeasibleSet { earliest, latest });
    }
    let points = forecast.points();
    let needed_to = latest.saturating_add(duration_ms);
    let (covered_from, covered_to) = match (points.first(), points.last()) {
        (Some(first), Some(last)) => (first.0, last.0),
        _ => (0, -1),
    };
    if points.len() < 2 || covered_from > earliest || covered_to < needed_to {
        return Err(AdvisorError::ForecastTooShort {
            covered_from,
            covered_to,
            needed_from: earliest,
            needed_to,
        });
    }

    let cumulative = CumulativeIntensity::new(points);
    let window = |start: TimestampMs| cumulative.at(start + duration_ms) - cumulative.at(start);

    let candidates: Vec<(TimestampMs, T)> = std::iter::once(earliest)
        .chain(
            points
                .iter()
                .map(|&(t, _)| t)
                .filter(|&t| t > earliest && t <= latest),
        )
        .map(|start| (start, window(start)))
        .collect();

    let (start_ms, integral) = pick_earliest_minimum(&candidates)
        .ok_or(AdvisorError::EmptyFeasibleSet { earliest, latest })?;
    let now = candidates[0].1;
    let savings_vs_now = if now > T::zero() {
        (T::one() - integral / now).max(T::zero())
    } else {
        T::zero()
    };

    Ok(ScheduleAdvice {
        start_ms,
        end_ms: start_ms + duration_ms,
        mean_g_per_kwh: integral / T::from_ms(duration_ms),
        savings_vs_now,
    })
}

/// First `(start, value)` whose value is within [`TIE_TOLERANCE`] of the minimum.
pub fn pick_earliest_minimum<T: Scalar>(
    candidates: &[(TimestampMs, T)],
) -> Option<(TimestampMs, T)> {
    let min = candidates
        .iter()
        .map(|&(_, v)| v)
        .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.min(v))))?;
    let slack = T::lit(TIE_TOLERANCE) * min.abs();
    candidates.iter().copied().find(|&(_, v)| v <= min + slack)
}
