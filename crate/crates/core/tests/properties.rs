use carbonledger::advisor::{best_window, pick_earliest_minimum};
use carbonledger::telemetry::{apply_pue, integrate};
use carbonledger::{EnergySpan, IntensityForecast, PowerSample};
use proptest::prelude::*;
use std::collections::BTreeMap;

/// Power at `t` for a piecewise-linear trace, evaluated directly.
fn power_at(trace: &[(i64, f64)], t: f64) -> f64 {
    let i = trace
        .iter()
        .rposition(|&(ts, _)| (ts as f64) <= t)
        .unwrap_or(0);
    if i + 1 >= trace.len() {
        return trace[trace.len() - 1].1;
    }
    let (t0, w0) = (trace[i].0 as f64, trace[i].1);
    let (t1, w1) = (trace[i + 1].0 as f64, trace[i + 1].1);
    w0 + (w1 - w0) * (t - t0) / (t1 - t0)
}

/// Midpoint Riemann sum with 1000 sub-steps inside every sample interval, in kWh.
fn riemann_kwh(trace: &[(i64, f64)], start: i64, end: i64) -> f64 {
    let mut edges: Vec<f64> = trace
        .iter()
        .map(|&(t, _)| t as f64)
        .filter(|&t| t > start as f64 && t < end as f64)
        .collect();
    edges.insert(0, start as f64);
    edges.push(end as f64);
    let mut joules_ms = 0.0;
    for pair in edges.windows(2) {
        let h = (pair[1] - pair[0]) / 1000.0;
        joules_ms += (0..1000)
            .map(|k| power_at(trace, pair[0] + (k as f64 + 0.5) * h) * h)
            .sum::<f64>();
    }
    joules_ms / 3.6e9
}

fn samples(trace: &[(i64, f64)]) -> Vec<PowerSample> {
    trace
        .iter()
        .map(|&(t, w)| PowerSample::new(t, "gpu:0", w).unwrap())
        .collect()
}

fn trace_strategy() -> impl Strategy<Value = Vec<(i64, f64)>> {
    prop::collection::vec((1i64..120_000, 0.0f64..400.0), 2..12).prop_map(|steps| {
        let mut t = 0;
        steps
            .into_iter()
            .map(|(dt, w)| {
                t += dt;
                (t, w)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trapezoid_matches_riemann_oracle(trace in trace_strategy()) {
        let (start, end) = (trace[0].0, trace[trace.len() - 1].0);
        let kwh = integrate(&samples(&trace), start, end).unwrap();
        let oracle = riemann_kwh(&trace, start, end);
        prop_assert!((kwh - oracle).abs() <= 1e-6 * oracle.max(1e-12), "{kwh} vs {oracle}");
    }

    #[test]
    fn integration_is_additive(trace in trace_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let s = samples(&trace);
        let (lo, hi) = (trace[0].0, trace[trace.len() - 1].0);
        let mut cuts = [a, b];
        cuts.sort_by(f64::total_cmp);
        let mid1 = lo + ((hi - lo) as f64 * cuts[0]) as i64;
        let mid2 = lo + ((hi - lo) as f64 * cuts[1]) as i64;
        let whole = integrate(&s, lo, mid2).unwrap();
        let parts = integrate(&s, lo, mid1).unwrap() + integrate(&s, mid1, mid2).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-9 * whole.abs().max(1e-300) + 1e-18);
        // Monotone in window length for non-negative power.
        prop_assert!(integrate(&s, lo, mid2).unwrap() >= integrate(&s, lo, mid1).unwrap() - 1e-18);
        prop_assert!(whole >= 0.0);
    }

    #[test]
    fn pue_is_linear(kwh in 0.0f64..1e4, pue in 1.0f64..3.0) {
        let mut per = BTreeMap::new();
        per.insert("cpu:0".to_string(), kwh);
        let span = EnergySpan::new(0, 1, per, 1.0).unwrap();
        let scaled = apply_pue(&span, pue).unwrap();
        prop_assert!((scaled.total_kwh - pue * span.total_kwh).abs() <= 1e-12 * (1.0 + scaled.total_kwh));
        prop_assert!((scaled.total_kwh - scaled.pue * scaled.device_kwh()).abs() <= 1e-9 * (1.0 + scaled.total_kwh));
    }
}

const HOUR: i64 = 3_600_000;

fn forecast(values: &[f64]) -> IntensityForecast {
    IntensityForecast::new(
        "X",
        values
            .iter()
            .enumerate()
            .map(|(i, &g)| (i as i64 * HOUR, g))
            .collect(),
    )
    .unwrap()
}

/// Direct trapezoid sum over the hourly grid for a grid-aligned window.
fn brute_force_start(values: &[f64], window_hours: usize, last_start: usize) -> i64 {
    let candidates: Vec<(i64, f64)> = (0..=last_start)
        .map(|s| {
            let integral: f64 = (s..s + window_hours)
                .map(|i| (values[i] + values[i + 1]) / 2.0 * HOUR as f64)
                .sum();
            (s as i64 * HOUR, integral)
        })
        .collect();
    pick_earliest_minimum(&candidates).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn advisor_matches_exhaustive_search(
        values in prop::collection::vec(0u32..800, 8..200),
        window in 1usize..6,
        offset in 0u32..1000,
        scale_pow in -3i32..4,
    ) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        prop_assume!(values.len() > window + 1);
        let last_start = values.len() - 1 - window;
        let f = forecast(&values);
        let advice = best_window(&f, window as i64 * HOUR, 0, last_start as i64 * HOUR).unwrap();
        prop_assert_eq!(advice.start_ms, brute_force_start(&values, window, last_start));
        prop_assert_eq!(advice.end_ms - advice.start_ms, window as i64 * HOUR);

        let shifted = f.map_values(|g| g + f64::from(offset)).unwrap();
        let a = best_window(&shifted, window as i64 * HOUR, 0, last_start as i64 * HOUR).unwrap();
        prop_assert_eq!(a.start_ms, advice.start_ms);

        let k = 2f64.powi(scale_pow) * 1.5;
        let scaled = f.map_values(|g| g * k).unwrap();
        let a = best_window(&scaled, window as i64 * HOUR, 0, last_start as i64 * HOUR).unwrap();
        prop_assert_eq!(a.start_ms, advice.start_ms);
    }
}
