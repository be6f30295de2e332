//! Carbon intensity (gCO2/kWh) lookup.
//!
//! [`IntensityResolver::resolve`] walks a provider chain and reports which
//! layer answered: a fresh cached realtime value, the realtime endpoint, the
//! static regional table, and finally an optional global default.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::TimestampMs;

pub const DEFAULT_CACHE_TTL: Duration = Duration::from_secs(300);
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum IntensityError {
    #[error("region code is empty")]
    EmptyRegion,
    #[error("unknown region `{0}` and no global default configured")]
    UnknownRegionNoDefault(String),
    #[error("no realtime endpoint configured")]
    NoEndpoint,
    #[error("realtime request timed out after {0:?}")]
    NetworkTimeout(Duration),
    #[error("realtime endpoint returned HTTP {0}")]
    HttpStatus(u16),
    #[error("realtime transport error: {0}")]
    Transport(String),
    #[error("malformed realtime response: {0}")]
    MalformedResponse(String),
    #[error("invalid intensity {0}: must be a non-negative number")]
    InvalidIntensity(f64),
    #[error("{path} line {line}: {reason}")]
    MalformedFile {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntensitySource {
    Realtime,
    Cache,
    StaticTable,
    Override,
    GlobalDefault,
}

impl std::fmt::Display for IntensitySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Realtime => "realtime",
            Self::Cache => "cache",
            Self::StaticTable => "static-table",
            Self::Override => "override",
            Self::GlobalDefault => "global-default",
        })
    }
}

/// When an intensity value was observed: a concrete instant or an average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservedAt {
    At(TimestampMs),
    Average,
}

impl Serialize for ObservedAt {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::At(ts) => serializer.serialize_i64(*ts),
            Self::Average => serializer.serialize_str("average"),
        }
    }
}

impl<'de> Deserialize<'de> for ObservedAt {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            At(TimestampMs),
            Label(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::At(ts) => Ok(Self::At(ts)),
            Raw::Label(s) if s == "average" => Ok(Self::Average),
            Raw::Label(s) => Err(serde::de::Error::custom(format!(
                "expected a timestamp or \"average\", found `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensity<T> {
    pub region: String,
    pub g_per_kwh: T,
    pub observed_at: ObservedAt,
    pub source: IntensitySource,
}

impl<T: Scalar> CarbonIntensity<T> {
    pub fn new(
        region: impl Into<String>,
        g_per_kwh: T,
        observed_at: ObservedAt,
        source: IntensitySource,
    ) -> Result<Self, IntensityError> {
        if !(g_per_kwh >= T::zero()) || !g_per_kwh.is_finite() {
            return Err(IntensityError::InvalidIntensity(g_per_kwh.as_f64()));
        }
        Ok(Self {
            region: region.into(),
            g_per_kwh,
            observed_at,
            source,
        })
    }

    /// A user-supplied value that bypasses the provider chain.
    pub fn override_value(region: impl Into<String>, g_per_kwh: T) -> Result<Self, IntensityError> {
        Self::new(
            region,
            g_per_kwh,
            ObservedAt::Average,
            IntensitySource::Override,
        )
    }
}

/// Time-varying intensity for one region, consumed by the scheduling advisor.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityForecast<T> {
    pub region: String,
    points: Vec<(TimestampMs, T)>,
}

impl<T: Scalar> IntensityForecast<T> {
    pub fn new(
        region: impl Into<String>,
        points: Vec<(TimestampMs, T)>,
    ) -> Result<Self, IntensityError> {
        if let Some(pair) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(IntensityError::MalformedResponse(format!(
                "forecast timestamps must strictly increase ({} then {})",
                pair[0].0, pair[1].0
            )));
        }
        if let Some(&(_, g)) = points
            .iter()
            .find(|(_, g)| !(*g >= T::zero()) || !g.is_finite())
        {
            return Err(IntensityError::InvalidIntensity(g.as_f64()));
        }
        Ok(Self {
            region: region.into(),
            points,
        })
    }

    pub fn points(&self) -> &[(TimestampMs, T)] {
        &self.points
    }

    /// Same timestamps, values mapped through `f`.
    pub fn map_values(&self, f: impl Fn(T) -> T) -> Result<Self, IntensityError> {
        Self::new(
            self.region.clone(),
            self.points.iter().map(|&(t, g)| (t, f(g))).collect(),
        )
    }
}

/// Reads a forecast CSV (`ts_ms,g_per_kwh`).
pub fn read_forecast<T: Scalar>(
    path: &Path,
    region: &str,
) -> Result<IntensityForecast<T>, IntensityError> {
    let file = File::open(path).map_err(|source| IntensityError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut points = Vec::new();
    read_csv(path, file, &["ts_ms", "g_per_kwh"], |line, rec| {
        let ts: TimestampMs = rec[0]
            .parse()
            .map_err(|_| format!("ts_ms `{}` is not an integer", &rec[0]))?;
        let g = parse_intensity(&rec[1])?;
        if let Some(&(prev, _)) = points.last() {
            if ts <= prev {
                return Err(format!("timestamp {ts} does not advance (line {line})"));
            }
        }
        points.push((ts, T::lit(g)));
        Ok(())
    })?;
    IntensityForecast::new(region, points)
}

fn parse_intensity(text: &str) -> Result<f64, String> {
    let g: f64 = text
        .parse()
        .map_err(|_| format!("g_per_kwh `{text}` is not a decimal"))?;
    if g >= 0.0 && g.is_finite() {
        Ok(g)
    } else {
        Err(format!("g_per_kwh {g} must be non-negative"))
    }
}

fn read_csv<R: io::Read>(
    path: &Path,
    reader: R,
    header: &[&str],
    mut row: impl FnMut(u64, &csv::StringRecord) -> Result<(), String>,
) -> Result<(), IntensityError> {
    let malformed = |line: u64, reason: String| IntensityError::MalformedFile {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    match records.next() {
        Some(Ok(h)) if h.iter().eq(header.iter().copied()) => {}
        Some(Ok(_)) | None => {
            return Err(malformed(
                1,
                format!("expected header `{}`", header.join(",")),
            ))
        }
        Some(Err(e)) => return Err(malformed(1, e.to_string())),
    }
    for record in records {
        let record = record
            .map_err(|e| malformed(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        row(line, &record).map_err(|reason| malformed(line, reason))?;
    }
    Ok(())
}

/// One row of the regional table.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionEntry {
    pub g_per_kwh: f64,
    pub source_note: String,
}

/// The shipped regional averages (gCO2/kWh).
///
/// `EST` and `WOR` are inferred from the ratios between the published
/// per-region car distances and the Danish average; `DNK_RLT_SNAPSHOT` is a
/// single realtime reading, not an average.
pub fn static_table() -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("DNK_AVG", 193.0),
        ("DNK_RLT_SNAPSHOT", 266.0),
        ("EST", 634.6),
        ("WOR", 344.7),
    ])
}

/// Region lookup table: the shipped values plus any overrides from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTable {
    entries: BTreeMap<String, RegionEntry>,
}

impl Default for RegionTable {
    fn default() -> Self {
        Self::shipped()
    }
}

impl RegionTable {
    pub fn shipped() -> Self {
        let note = |region: &str| match region {
            "DNK_AVG" => "2018 Danish annual average",
            "DNK_RLT_SNAPSHOT" => "Danish realtime snapshot during experiments",
            "EST" => "derived from regional distance ratios",
            "WOR" => "derived from regional distance ratios",
            _ => "",
        };
        Self {
            entries: static_table()
                .into_iter()
                .map(|(region, g)| {
                    (
                        region.to_string(),
                        RegionEntry {
                            g_per_kwh: g,
                            source_note: note(region).to_string(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn get(&self, region: &str) -> Option<&RegionEntry> {
        self.entries.get(region)
    }

    pub fn insert(&mut self, region: impl Into<String>, entry: RegionEntry) {
        self.entries.insert(region.into(), entry);
    }

    pub fn regions(&self) -> impl Iterator<Item = (&str, &RegionEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Merges a `region,g_per_kwh,source_note` CSV over this table.
    pub fn merge_file(&mut self, path: &Path) -> Result<(), IntensityError> {
        let file = File::open(path).map_err(|source| IntensityError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut rows = Vec::new();
        read_csv(
            path,
            file,
            &["region", "g_per_kwh", "source_note"],
            |_, rec| {
                if rec[0].is_empty() {
                    return Err("empty region".to_string());
                }
                rows.push((
                    rec[0].to_string(),
                    RegionEntry {
                        g_per_kwh: parse_intensity(&rec[1])?,
                        source_note: rec[2].to_string(),
                    },
                ));
                Ok(())
            },
        )?;
        self.entries.extend(rows);
        Ok(())
    }
}

/// Realtime endpoint. `{region}` and `{ts_ms}` in the URL are substituted.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url_template: String,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn new(url_template: impl Into<String>) -> Self {
        Self {
            url_template: url_template.into(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    fn url(&self, region: &str, at: TimestampMs) -> String {
        self.url_template
            .replace("{region}", region)
            .replace("{ts_ms}", &at.to_string())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RealtimeBody {
    g_per_kwh: f64,
    ts_ms: TimestampMs,
}

/// Parses a realtime response body: `{"g_per_kwh": <number>, "ts_ms": <integer>}`.
pub fn parse_realtime_body<T: Scalar>(
    region: &str,
    body: &str,
) -> Result<CarbonIntensity<T>, IntensityError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| IntensityError::MalformedResponse(e.to_string()))?;
    if !value.is_object() {
        return Err(IntensityError::MalformedResponse(
            "response body is not a JSON object".to_string(),
        ));
    }
    let parsed: RealtimeBody = serde_json::from_value(value)
        .map_err(|e| IntensityError::MalformedResponse(e.to_string()))?;
    if !(parsed.g_per_kwh >= 0.0) || !parsed.g_per_kwh.is_finite() {
        return Err(IntensityError::MalformedResponse(format!(
            "g_per_kwh {} must be non-negative",
            parsed.g_per_kwh
        )));
    }
    CarbonIntensity::new(
        region,
        T::lit(parsed.g_per_kwh),
        ObservedAt::At(parsed.ts_ms),
        IntensitySource::Realtime,
    )
}

/// One HTTP GET against the realtime endpoint, bounded by its timeout.
pub fn fetch_realtime<T: Scalar>(
    region: &str,
    at: TimestampMs,
    endpoint: &EndpointConfig,
) -> Result<CarbonIntensity<T>, IntensityError> {
    let agent = ureq::AgentBuilder::new().timeout(endpoint.timeout).build();
    let started = Instant::now();
    let response = agent
        .get(&endpoint.url(region, at))
        .call()
        .map_err(|e| match e {
            ureq::Error::Status(code, _) => IntensityError::HttpStatus(code),
            ureq::Error::Transport(t) => {
                if started.elapsed() >= endpoint.timeout || is_timeout(&t) {
                    IntensityError::NetworkTimeout(endpoint.timeout)
                } else {
                    IntensityError::Transport(t.to_string())
                }
            }
        })?;
    let body = response.into_string().map_err(|e| {
        if matches!(
            e.kind(),
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
        ) {
            IntensityError::NetworkTimeout(endpoint.timeout)
        } else {
            IntensityError::MalformedResponse(e.to_string())
        }
    })?;
    parse_realtime_body(region, &body)
}

fn is_timeout(t: &ureq::Transport) -> bool {
    let mut source = std::error::Error::source(t);
    while let Some(err) = source {
        if let Some(io) = err.downcast_ref::<io::Error>() {
            if matches!(
                io.kind(),
                io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
            ) {
                return true;
            }
        }
        source = err.source();
    }
    t.to_string().contains("timed out")
}

#[derive(Debug, Clone)]
pub struct ResolverConfig {
    pub realtime: Option<EndpointConfig>,
    pub cache_ttl: Duration,
    pub table: RegionTable,
    pub global_default: Option<f64>,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        Self {
            realtime: None,
            cache_ttl: DEFAULT_CACHE_TTL,
            table: RegionTable::shipped(),
            global_default: None,
        }
    }
}

struct CacheEntry<T> {
    value: CarbonIntensity<T>,
    fetched: Instant,
}

/// Layered intensity provider. Safe to share between threads; concurrent
/// misses for one region coalesce into a single realtime request.
pub struct IntensityResolver<T> {
    config: ResolverConfig,
    cache: RwLock<HashMap<String, CacheEntry<T>>>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    network_calls: AtomicUsize,
}

impl<T: Scalar> IntensityResolver<T> {
    pub fn new(config: ResolverConfig) -> Self {
        Self {
            config,
            cache: RwLock::new(HashMap::new()),
            inflight: Mutex::new(HashMap::new()),
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &ResolverConfig {
        &self.config
    }

    /// Number of realtime requests issued so far.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn resolve(
        &self,
        region: &str,
        at: TimestampMs,
    ) -> Result<CarbonIntensity<T>, IntensityError> {
        if region.is_empty() {
            return Err(IntensityError::EmptyRegion);
        }
        if let Some(endpoint) = &self.config.realtime {
            if let Some(hit) = self.cached(region) {
                return Ok(hit);
            }
            let gate = self.gate(region);
            let _in_flight = gate.lock().unwrap_or_else(|e| e.into_inner());
            // Another caller may have filled the cache while we waited.
            if let Some(hit) = self.cached(region) {
                return Ok(hit);
            }
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match fetch_realtime::<T>(region, at, endpoint) {
                Ok(value) => {
                    self.cache
                        .write()
                        .unwrap_or_else(|e| e.into_inner())
                        .insert(
                            region.to_string(),
                            CacheEntry {
                                value: value.clone(),
                                fetched: Instant::now(),
                            },
                        );
                    return Ok(value);
                }
                Err(e) => warn!("realtime intensity for {region} unavailable, falling back: {e}"),
            }
        }
        self.fallback(region)
    }

    /// Static table, then global default.
    pub fn fallback(&self, region: &str) -> Result<CarbonIntensity<T>, IntensityError> {
        if let Some(entry) = self.config.table.get(region) {
            return CarbonIntensity::new(
                region,
                T::lit(entry.g_per_kwh),
                ObservedAt::Average,
                IntensitySource::StaticTable,
            );
        }
        match self.config.global_default {
            Some(g) => CarbonIntensity::new(
                region,
                T::lit(g),
                ObservedAt::Average,
                IntensitySource::GlobalDefault,
            ),
            None => Err(IntensityError::UnknownRegionNoDefault(region.to_string())),
        }
    }

    fn cached(&self, region: &str) -> Option<CarbonIntensity<T>> {
        let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
        let entry = cache.get(region)?;
        if entry.fetched.elapsed() <= self.config.cache_ttl {
            let mut value = entry.value.clone();
            value.source = IntensitySource::Cache;
            Some(value)
        } else {
            None
        }
    }

    fn gate(&self, region: &str) -> Arc<Mutex<()>> {
        self.inflight
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(region.to_string())
            .or_default()
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn shipped_table_values() {
        let t = static_table();
        assert_eq!(t["DNK_AVG"], 193.0);
        assert_eq!(t["DNK_RLT_SNAPSHOT"], 266.0);
        assert_eq!(t["EST"], 634.6);
        assert_eq!(t["WOR"], 344.7);
        assert!(!t.contains_key("EU-27"));
    }

    #[test]
    fn derived_table_entries_match_distance_ratios() {
        // (DNK_AVG km, EST km, WOR km) per dataset row of the regional table.
        let rows = [
            (66.8, 219.6, 119.3),
            (108.1, 355.1, 192.9),
            (146.1, 479.8, 260.4),
        ];
        let t = static_table();
        for (dnk, est, wor) in rows {
            let est_oracle = 193.0 * est / dnk;
            let wor_oracle = 193.0 * wor / dnk;
            assert!(((t["EST"] - est_oracle) / est_oracle).abs() < 0.005);
            assert!(((t["WOR"] - wor_oracle) / wor_oracle).abs() < 0.005);
        }
    }

    #[test]
    fn static_layer_reports_its_source() {
        let r: IntensityResolver<f64> = IntensityResolver::new(ResolverConfig::default());
        let i = r.resolve("DNK_AVG", 0).unwrap();
        assert_eq!(i.g_per_kwh, 193.0);
        assert_eq!(i.source, IntensitySource::StaticTable);
        assert_eq!(i.observed_at, ObservedAt::Average);
        assert_eq!(r.network_calls(), 0);
    }

    #[test]
    fn unknown_region_without_default_errors() {
        let r: IntensityResolver<f64> = IntensityResolver::new(ResolverConfig::default());
        assert!(matches!(
            r.resolve("XX", 0),
            Err(IntensityError::UnknownRegionNoDefault(_))
        ));
        assert!(matches!(r.resolve("", 0), Err(IntensityError::EmptyRegion)));

        let r: IntensityResolver<f64> = IntensityResolver::new(ResolverConfig {
            global_default: Some(475.0),
            ..ResolverConfig::default()
        });
        let i = r.resolve("XX", 0).unwrap();
        assert_eq!(i.g_per_kwh, 475.0);
        assert_eq!(i.source, IntensitySource::GlobalDefault);
    }

    #[test]
    fn realtime_body_parsing() {
        let i: CarbonIntensity<f64> =
            parse_realtime_body("DNK", r#"{"g_per_kwh": 266.0, "ts_ms": 1700000000000}"#).unwrap();
        assert_eq!(i.g_per_kwh, 266.0);
        assert_eq!(i.source, IntensitySource::Realtime);
        assert_eq!(i.observed_at, ObservedAt::At(1_700_000_000_000));

        for bad in [
            r#"{"g_per_kwh": 266.0}"#,
            r#"{"g_per_kwh": "266", "ts_ms": 1}"#,
            r#"{"g_per_kwh": 266.0, "ts_ms": 1.5}"#,
            r#"{"g_per_kwh": 266.0, "ts_ms": 1, "extra": true}"#,
            r#"{"g_per_kwh": -1.0, "ts_ms": 1}"#,
            r#"[266.0, 1]"#,
            "not json",
        ] {
            assert!(
                matches!(
                    parse_realtime_body::<f64>("DNK", bad),
                    Err(IntensityError::MalformedResponse(_))
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn unreachable_endpoint_falls_back_to_table() {
        // Port 9 on localhost is almost certainly closed: connection refused.
        let r: IntensityResolver<f64> = IntensityResolver::new(ResolverConfig {
            realtime: Some(EndpointConfig {
                url_template: "http://127.0.0.1:9/{region}".to_string(),
                timeout: Duration::from_millis(500),
            }),
            ..ResolverConfig::default()
        });
        let i = r.resolve("DNK_AVG", 0).unwrap();
        assert_eq!(i.g_per_kwh, 193.0);
        assert_eq!(i.source, IntensitySource::StaticTable);
        assert_eq!(r.network_calls(), 1);
    }

    #[test]
    fn url_template_substitution() {
        let e = EndpointConfig::new("http://h/ci?zone={region}&at={ts_ms}");
        assert_eq!(e.url("DNK", 42), "http://h/ci?zone=DNK&at=42");
    }

    #[test]
    fn region_table_file_overrides_and_extends() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(
            f,
            "region,g_per_kwh,source_note\nEU-27,255.2,manual\nWOR,487.0,alt reading\n"
        )
        .unwrap();
        let mut table = RegionTable::shipped();
        table.merge_file(f.path()).unwrap();
        assert_eq!(table.get("EU-27").unwrap().g_per_kwh, 255.2);
        assert_eq!(table.get("WOR").unwrap().source_note, "alt reading");
        assert_eq!(table.get("DNK_AVG").unwrap().g_per_kwh, 193.0);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        write!(bad, "region,g_per_kwh,source_note\nX,abc,n\n").unwrap();
        match RegionTable::shipped().merge_file(bad.path()) {
            Err(IntensityError::MalformedFile { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forecast_file_parsing() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "ts_ms,g_per_kwh\n0,500\n3600000,100.5\n").unwrap();
        let fc: IntensityForecast<f64> = read_forecast(f.path(), "DNK").unwrap();
        assert_eq!(fc.points(), &[(0, 500.0), (3_600_000, 100.5)]);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        write!(bad, "ts_ms,g_per_kwh\n10,1\n5,1\n").unwrap();
        assert!(matches!(
            read_forecast::<f64>(bad.path(), "DNK"),
            Err(IntensityError::MalformedFile { line: 3, .. })
        ));
    }

    #[test]
    fn forecast_invariants() {
        assert!(IntensityForecast::new("X", vec![(0, 1.0), (0, 2.0)]).is_err());
        assert!(IntensityForecast::new("X", vec![(0, -1.0)]).is_err());
        assert!(IntensityForecast::new("X", vec![(0, 1.0), (1, 2.0)]).is_ok());
    }

    #[test]
    fn observed_at_serde() {
        let i =
            CarbonIntensity::new("DNK", 1.0, ObservedAt::At(5), IntensitySource::Realtime).unwrap();
        let json = serde_json::to_string(&i).unwrap();
        assert!(json.contains("\"observed_at\":5"));
        assert!(json.contains("\"source\":\"realtime\""));
        let back: CarbonIntensity<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, i);
        let avg = CarbonIntensity::override_value("DNK", 1.0).unwrap();
        let json = serde_json::to_string(&avg).unwrap();
        assert!(json.contains("\"observed_at\":\"average\""));
    }
}
