use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::gpu::NvidiaSmiSource;
use super::rapl::PowercapSource;
use super::{PowerSample, TelemetryError};
use crate::scalar::Scalar;
use crate::TimestampMs;

/// Default sampling interval (1 Hz).
pub const DEFAULT_INTERVAL_MS: i64 = 1_000;

const REPLAY_HEADER: [&str; 3] = ["ts_ms", "component", "watts"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    CpuCounter,
    GpuCounter,
    Replay,
    SyntheticConstant,
}

impl std::str::FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu-counter" | "cpu" => Ok(Self::CpuCounter),
            "gpu-counter" | "gpu" => Ok(Self::GpuCounter),
            "replay" => Ok(Self::Replay),
            "synthetic-constant" | "synthetic" => Ok(Self::SyntheticConstant),
            other => Err(format!("unknown source kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceConfig {
    pub interval_ms: i64,
    /// CSV file for [`SourceKind::Replay`].
    pub replay_path: Option<PathBuf>,
    pub synthetic_watts: f64,
    pub synthetic_component: String,
    /// First timestamp of a finite synthetic stream.
    pub synthetic_start_ms: TimestampMs,
    /// Length of a finite synthetic stream; `None` makes it pace in real time.
    pub synthetic_duration_ms: Option<i64>,
    pub powercap_root: PathBuf,
    /// Command printing `index, power.draw` lines, one per GPU.
    pub gpu_query: Vec<String>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            interval_ms: DEFAULT_INTERVAL_MS,
            replay_path: None,
            synthetic_watts: 100.0,
            synthetic_component: "synthetic:0".to_string(),
            synthetic_start_ms: 0,
            synthetic_duration_ms: None,
            powercap_root: PathBuf::from("/sys/class/powercap"),
            gpu_query: NvidiaSmiSource::default_query(),
        }
    }
}

/// A live power source polled by a sampling loop.
pub trait PowerSource<T>: Send {
    /// Component identifiers this source reports.
    fn components(&self) -> Vec<String>;

    /// Reads the current power of every component, stamped `timestamp_ms`.
    /// Counter-based sources may return nothing on their first poll.
    fn poll(&mut self, timestamp_ms: TimestampMs) -> Result<Vec<PowerSample<T>>, TelemetryError>;
}

/// Fixed power for one component, e.g. for tests or machines without counters.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub component: String,
    pub watts: f64,
}

impl<T: Scalar> PowerSource<T> for SyntheticSource {
    fn components(&self) -> Vec<String> {
        vec![self.component.clone()]
    }

    fn poll(&mut self, timestamp_ms: TimestampMs) -> Result<Vec<PowerSample<T>>, TelemetryError> {
        Ok(vec![PowerSample::new(
            timestamp_ms,
            self.component.clone(),
            T::lit(self.watts),
        )?])
    }
}

/// Opens a pollable source. Replay files are not live; use [`open_source`].
pub fn open_live_source<T: Scalar>(
    kind: SourceKind,
    config: &SourceConfig,
) -> Result<Box<dyn PowerSource<T>>, TelemetryError> {
    match kind {
        SourceKind::CpuCounter => Ok(Box::new(PowercapSource::discover(&config.powercap_root)?)),
        SourceKind::GpuCounter => Ok(Box::new(NvidiaSmiSource::probe(config.gpu_query.clone())?)),
        SourceKind::SyntheticConstant => Ok(Box::new(SyntheticSource {
            component: config.synthetic_component.clone(),
            watts: config.synthetic_watts,
        })),
        SourceKind::Replay => Err(TelemetryError::UnsupportedPlatform(
            "replay files are read with open_source, not polled".to_string(),
        )),
    }
}

/// Stream of samples from any source kind.
///
/// Replay streams yield the file's samples in order. A synthetic stream with a
/// configured duration yields `duration / interval` samples without sleeping.
/// Counter streams (and open-ended synthetic ones) pace themselves at the
/// configured interval and never end on their own.
pub enum SampleStream<T> {
    Finite(std::vec::IntoIter<PowerSample<T>>),
    Live {
        source: Box<dyn PowerSource<T>>,
        interval: Duration,
        pending: std::vec::IntoIter<PowerSample<T>>,
        first: bool,
    },
}

impl<T: Scalar> Iterator for SampleStream<T> {
    type Item = Result<PowerSample<T>, TelemetryError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            SampleStream::Finite(it) => it.next().map(Ok),
            SampleStream::Live {
                source,
                interval,
                pending,
                first,
            } => loop {
                if let Some(s) = pending.next() {
                    return Some(Ok(s));
                }
                if !*first {
                    thread::sleep(*interval);
                }
                *first = false;
                match source.poll(now_ms()) {
                    Ok(batch) => *pending = batch.into_iter(),
                    Err(e) => return Some(Err(e)),
                }
            },
        }
    }
}

pub fn open_source<T: Scalar>(
    kind: SourceKind,
    config: &SourceConfig,
) -> Result<SampleStream<T>, TelemetryError> {
    if config.interval_ms <= 0 {
        return Err(TelemetryError::UnsupportedPlatform(format!(
            "sampling interval must be positive, got {} ms",
            config.interval_ms
        )));
    }
    match kind {
        SourceKind::Replay => {
            let path =
                config
                    .replay_path
                    .as_deref()
                    .ok_or_else(|| TelemetryError::MalformedReplay {
                        line: 0,
                        reason: "no replay file configured".to_string(),
                    })?;
            Ok(SampleStream::Finite(read_replay(path)?.into_iter()))
        }
        SourceKind::SyntheticConstant if config.synthetic_duration_ms.is_some() => {
            let duration = config.synthetic_duration_ms.unwrap_or_default();
            let count = duration / config.interval_ms;
            let samples = (0..count)
                .map(|i| {
                    PowerSample::new(
                        config.synthetic_start_ms + i * config.interval_ms,
                        config.synthetic_component.clone(),
                        T::lit(config.synthetic_watts),
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SampleStream::Finite(samples.into_iter()))
        }
        _ => Ok(SampleStream::Live {
            source: open_live_source(kind, config)?,
            interval: Duration::from_millis(config.interval_ms as u64),
            pending: Vec::new().into_iter(),
            first: true,
        }),
    }
}

/// Parses a replay CSV (`ts_ms,component,watts`).
pub fn read_replay<T: Scalar>(path: &Path) -> Result<Vec<PowerSample<T>>, TelemetryError> {
    let file = File::open(path).map_err(|source| TelemetryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_replay(file)
}

pub(crate) fn parse_replay<T: Scalar, R: io::Read>(
    reader: R,
) -> Result<Vec<PowerSample<T>>, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let mut records = rdr.records();
    let malformed = |line: u64, reason: String| TelemetryError::MalformedReplay { line, reason };

    match records.next() {
        Some(Ok(header)) if header.iter().eq(REPLAY_HEADER) => {}
        Some(Ok(header)) => {
            return Err(malformed(
                1,
                format!(
                    "expected header `ts_ms,component,watts`, found `{}`",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ))
        }
        Some(Err(e)) => return Err(malformed(1, e.to_string())),
        None => return Err(malformed(1, "empty file".to_string())),
    }

    let mut last_ts: HashMap<String, TimestampMs> = HashMap::new();
    let mut out = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(malformed(
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let ts: TimestampMs = record[0]
            .parse()
            .map_err(|_| malformed(line, format!("ts_ms `{}` is not an integer", &record[0])))?;
        let component = record[1].to_string();
        if component.is_empty() {
            return Err(malformed(line, "empty component".to_string()));
        }
        let watts: f64 = record[2]
            .parse()
            .map_err(|_| malformed(line, format!("watts `{}` is not a decimal", &record[2])))?;
        let sample = PowerSample::new(ts, component, T::lit(watts))
            .map_err(|e| malformed(line, e.to_string()))?;
        if let Some(prev) = last_ts.insert(sample.component.clone(), ts) {
            if ts <= prev {
                return Err(malformed(
                    line,
                    format!("timestamp {ts} does not advance {}", sample.component),
                ));
            }
        }
        out.push(sample);
    }
    Ok(out)
}

/// Writes samples in the replay CSV format.
pub fn write_samples_csv<T: Scalar, W: Write>(
    mut writer: W,
    samples: &[PowerSample<T>],
) -> io::Result<()> {
    writeln!(writer, "{}", REPLAY_HEADER.join(","))?;
    for s in samples {
        writeln!(
            writer,
            "{},{},{}",
            s.timestamp_ms,
            s.component,
            s.watts.as_f64()
        )?;
    }
    Ok(())
}

pub(crate) fn now_ms() -> TimestampMs {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as TimestampMs)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_constant_yields_fixed_samples() {
        let config = SourceConfig {
            synthetic_watts: 100.0,
            synthetic_duration_ms: Some(10_000),
            ..SourceConfig::default()
        };
        let samples: Vec<PowerSample<f64>> = open_source(SourceKind::SyntheticConstant, &config)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(samples.len(), 10);
        assert!(samples.iter().all(|s| s.watts == 100.0));
        assert!(samples
            .windows(2)
            .all(|w| w[1].timestamp_ms - w[0].timestamp_ms == 1_000));
    }

    #[test]
    fn replay_yields_file_samples_in_order() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(
            f,
            "ts_ms,component,watts\n0,cpu:0,10.5\n1000,cpu:0,11\n1000,gpu:0,200.25\n"
        )
        .unwrap();
        let config = SourceConfig {
            replay_path: Some(f.path().to_path_buf()),
            ..SourceConfig::default()
        };
        let a: Vec<PowerSample<f64>> = open_source(SourceKind::Replay, &config)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0], PowerSample::new(0, "cpu:0", 10.5).unwrap());
        assert_eq!(a[2], PowerSample::new(1000, "gpu:0", 200.25).unwrap());
        let b: Vec<PowerSample<f64>> = open_source(SourceKind::Replay, &config)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_replay_reports_line() {
        let cases = [
            ("ts,component,watts\n", 1),
            ("ts_ms,component,watts\n0,cpu:0,1\nabc,cpu:0,2\n", 3),
            ("ts_ms,component,watts\n0,cpu:0,1\n1,cpu:0,1,9\n", 3),
            ("ts_ms,component,watts\n0,cpu:0,1\n5,cpu:0,1,\n", 3),
            ("ts_ms,component,watts\n0,cpu:0,1\n0,cpu:0,2\n", 3),
            ("ts_ms,component,watts\n0,cpu:0,1\n1,cpu:0,-2\n", 3),
            ("ts_ms,component,watts\n0,cpu:0,1,5\n", 2),
            ("ts_ms,component,watts\n0,cpu:0,1e\n", 2),
        ];
        for (text, expected_line) in cases {
            match parse_replay::<f64, _>(text.as_bytes()) {
                Err(TelemetryError::MalformedReplay { line, .. }) => {
                    assert_eq!(line, expected_line, "{text:?}")
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_replay_is_io_error() {
        let config = SourceConfig {
            replay_path: Some(PathBuf::from("/nonexistent/replay.csv")),
            ..SourceConfig::default()
        };
        assert!(matches!(
            open_source::<f64>(SourceKind::Replay, &config),
            Err(TelemetryError::Io { .. })
        ));
    }

    #[test]
    fn csv_writer_round_trips() {
        let samples = vec![
            PowerSample::new(0, "cpu:0", 12.5).unwrap(),
            PowerSample::new(1000, "cpu:0", 13.0).unwrap(),
        ];
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &samples).unwrap();
        let back: Vec<PowerSample<f64>> = parse_replay(buf.as_slice()).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn cpu_counter_without_powercap_is_unsupported() {
        let config = SourceConfig {
            powercap_root: PathBuf::from("/nonexistent/powercap"),
            ..SourceConfig::default()
        };
        assert!(matches!(
            open_source::<f64>(SourceKind::CpuCounter, &config),
            Err(TelemetryError::UnsupportedPlatform(_))
        ));
    }

    #[test]
    fn gpu_counter_without_tool_is_unsupported() {
        let config = SourceConfig {
            gpu_query: vec!["/nonexistent/nvidia-smi".to_string()],
            ..SourceConfig::default()
        };
        assert!(matches!(
            open_source::<f64>(SourceKind::GpuCounter, &config),
            Err(TelemetryError::UnsupportedPlatform(_))
        ));
    }

    #[test]
    fn live_synthetic_stream_paces() {
        let config = SourceConfig {
            interval_ms: 20,
            ..SourceConfig::default()
        };
        let start = std::time::Instant::now();
        let samples: Vec<PowerSample<f64>> = open_source(SourceKind::SyntheticConstant, &config)
            .unwrap()
            .take(3)
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(samples.len(), 3);
        assert!(start.elapsed() >= Duration::from_millis(40));
    }
}
