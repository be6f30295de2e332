use std::process::{Command, Stdio};

use super::sources::PowerSource;
use super::{PowerSample, TelemetryError};
use crate::scalar::Scalar;
use crate::TimestampMs;

/// GPU board power read through the vendor management CLI.
#[derive(Debug)]
pub struct NvidiaSmiSource {
    query: Vec<String>,
    components: Vec<String>,
}

impl NvidiaSmiSource {
    pub fn default_query() -> Vec<String> {
        [
            "nvidia-smi",
            "--query-gpu=index,power.draw",
            "--format=csv,noheader,nounits",
        ]
        .map(String::from)
        .to_vec()
    }

    /// Runs the query once; a missing tool or zero GPUs is unsupported.
    pub fn probe(query: Vec<String>) -> Result<Self, TelemetryError> {
        let readings = run_query(&query)?;
        if readings.is_empty() {
            return Err(TelemetryError::UnsupportedPlatform(
                "no GPU power readings reported".to_string(),
            ));
        }
        let components = readings.into_iter().map(|(c, _)| c).collect();
        Ok(Self { query, components })
    }
}

impl<T: Scalar> PowerSource<T> for NvidiaSmiSource {
    fn components(&self) -> Vec<String> {
        self.components.clone()
    }

    fn poll(&mut self, timestamp_ms: TimestampMs) -> Result<Vec<PowerSample<T>>, TelemetryError> {
        run_query(&self.query)?
            .into_iter()
            .map(|(component, watts)| PowerSample::new(timestamp_ms, component, T::lit(watts)))
            .collect()
    }
}

fn run_query(query: &[String]) -> Result<Vec<(String, f64)>, TelemetryError> {
    let (program, args) = query.split_first().ok_or_else(|| {
        TelemetryError::UnsupportedPlatform("empty GPU query command".to_string())
    })?;
    let output = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stderr(Stdio::null())
        .output()
        .map_err(|e| TelemetryError::UnsupportedPlatform(format!("{program}: {e}")))?;
    if !output.status.success() {
        return Err(TelemetryError::UnsupportedPlatform(format!(
            "{program} exited with {}",
            output.status
        )));
    }
    Ok(parse_nvidia_smi(&String::from_utf8_lossy(&output.stdout)))
}

/// Parses `index, power.draw` lines. Rows without a numeric reading
/// (`[N/A]`, `[Not Supported]`) are skipped.
pub fn parse_nvidia_smi(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .filter_map(|line| {
            let (index, watts) = line.split_once(',')?;
            let index: u32 = index.trim().parse().ok()?;
            let watts: f64 = watts.trim().parse().ok()?;
            (watts.is_finite() && watts >= 0.0).then(|| (format!("gpu:{index}"), watts))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_query_output() {
        let out = "0, 71.23\n1, [N/A]\n2, 250.00\n";
        assert_eq!(
            parse_nvidia_smi(out),
            vec![("gpu:0".to_string(), 71.23), ("gpu:2".to_string(), 250.0)]
        );
    }

    #[test]
    fn polls_through_a_query_command() {
        let query = vec!["printf".to_string(), "0, 42.5\\n".to_string()];
        let mut src = NvidiaSmiSource::probe(query).unwrap();
        let samples: Vec<PowerSample<f64>> = src.poll(7).unwrap();
        assert_eq!(samples, vec![PowerSample::new(7, "gpu:0", 42.5).unwrap()]);
    }

    #[test]
    fn failing_query_is_unsupported() {
        assert!(matches!(
            NvidiaSmiSource::probe(vec!["false".to_string()]),
            Err(TelemetryError::UnsupportedPlatform(_))
        ));
    }
}
