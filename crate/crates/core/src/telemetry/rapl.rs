// Package energy counters exposed by the Linux powercap framework, e.g.
// /sys/class/powercap/intel-rapl:0/energy_uj. Counters are cumulative
// microjoules that wrap at max_energy_range_uj; power is the counter delta
// divided by the elapsed time between two polls.

use std::fs;
use std::path::{Path, PathBuf};

use super::sources::PowerSource;
use super::{PowerSample, TelemetryError};
use crate::scalar::Scalar;
use crate::TimestampMs;

#[derive(Debug)]
struct Zone {
    component: String,
    energy_path: PathBuf,
    max_range_uj: u64,
    last: Option<(TimestampMs, u64)>,
}

#[derive(Debug)]
pub struct PowercapSource {
    zones: Vec<Zone>,
}

impl PowercapSource {
    /// Finds top-level package zones (`<driver>:<n>`) with a readable counter.
    pub fn discover(root: &Path) -> Result<Self, TelemetryError> {
        let entries = fs::read_dir(root).map_err(|e| {
            TelemetryError::UnsupportedPlatform(format!(
                "powercap interface not available at {}: {e}",
                root.display()
            ))
        })?;

        let mut packages: Vec<(u32, PathBuf)> = entries
            .filter_map(Result::ok)
            .filter_map(|entry| {
                let name = entry.file_name().to_string_lossy().into_owned();
                let (driver, index) = name.split_once(':')?;
                if driver.is_empty() || index.contains(':') {
                    return None;
                }
                Some((index.parse().ok()?, entry.path()))
            })
            .collect();
        packages.sort();

        let mut zones = Vec::new();
        for (index, path) in packages {
            let energy_path = path.join("energy_uj");
            if read_u64(&energy_path).is_none() {
                continue;
            }
            let max_range_uj = read_u64(&path.join("max_energy_range_uj")).unwrap_or(u64::MAX);
            zones.push(Zone {
                component: format!("cpu:{index}"),
                energy_path,
                max_range_uj,
                last: None,
            });
        }

        if zones.is_empty() {
            return Err(TelemetryError::UnsupportedPlatform(format!(
                "no readable energy counters under {}",
                root.display()
            )));
        }
        Ok(Self { zones })
    }
}

impl<T: Scalar> PowerSource<T> for PowercapSource {
    fn components(&self) -> Vec<String> {
        self.zones.iter().map(|z| z.component.clone()).collect()
    }

    fn poll(&mut self, timestamp_ms: TimestampMs) -> Result<Vec<PowerSample<T>>, TelemetryError> {
        let mut out = Vec::with_capacity(self.zones.len());
        for zone in &mut self.zones {
            let Some(now_uj) = read_u64(&zone.energy_path) else {
                return Err(TelemetryError::UnsupportedPlatform(format!(
                    "energy counter {} became unreadable",
                    zone.energy_path.display()
                )));
            };
            if let Some((then_ms, then_uj)) = zone.last {
                let elapsed_ms = timestamp_ms - then_ms;
                if elapsed_ms > 0 {
                    let delta_uj = counter_delta(then_uj, now_uj, zone.max_range_uj);
                    // uJ / ms = mW
                    let watts = delta_uj as f64 / elapsed_ms as f64 / 1000.0;
                    out.push(PowerSample::new(
                        timestamp_ms,
                        zone.component.clone(),
                        T::lit(watts),
                    )?);
                }
            }
            zone.last = Some((timestamp_ms, now_uj));
        }
        Ok(out)
    }
}

fn counter_delta(then: u64, now: u64, max_range: u64) -> u64 {
    if now >= then {
        now - then
    } else {
        // wrapped
        max_range.saturating_sub(then).saturating_add(now)
    }
}

fn read_u64(path: &Path) -> Option<u64> {
    fs::read_to_string(path).ok()?.trim().parse().ok()
}
