mod common;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use carbonledger::intensity::{
    fetch_realtime, EndpointConfig, IntensityError, IntensitySource, ObservedAt, ResolverConfig,
};
use carbonledger::{CarbonIntensity, IntensityResolver};
use common::{Behaviour, StubServer};

fn resolver(url: &str, ttl: Duration, timeout: Duration) -> IntensityResolver {
    IntensityResolver::new(ResolverConfig {
        realtime: Some(EndpointConfig {
            url_template: format!("{url}/intensity/{{region}}"),
            timeout,
        }),
        cache_ttl: ttl,
        ..ResolverConfig::default()
    })
}

#[test]
fn realtime_value_wins_over_table() {
    let server = StubServer::start(Behaviour::Json(
        r#"{"g_per_kwh": 266.0, "ts_ms": 1700000000000}"#.to_string(),
    ));
    let r = resolver(
        &server.url,
        Duration::from_secs(300),
        Duration::from_secs(5),
    );
    let i = r.resolve("DNK", 1_700_000_000_000).unwrap();
    assert_eq!(i.g_per_kwh, 266.0);
    assert_eq!(i.source, IntensitySource::Realtime);
    assert_eq!(i.observed_at, ObservedAt::At(1_700_000_000_000));
}

#[test]
fn cache_suppresses_second_call_within_ttl() {
    let server = StubServer::start(Behaviour::Json(
        r#"{"g_per_kwh": 266.0, "ts_ms": 1}"#.to_string(),
    ));
    let r = resolver(
        &server.url,
        Duration::from_secs(300),
        Duration::from_secs(5),
    );
    assert_eq!(
        r.resolve("DNK", 0).unwrap().source,
        IntensitySource::Realtime
    );
    let second = r.resolve("DNK", 0).unwrap();
    assert_eq!(second.source, IntensitySource::Cache);
    assert_eq!(second.g_per_kwh, 266.0);
    assert_eq!(server.hits(), 1);
    assert_eq!(r.network_calls(), 1);
}

#[test]
fn expired_cache_refetches() {
    let server = StubServer::start(Behaviour::Json(
        r#"{"g_per_kwh": 266.0, "ts_ms": 1}"#.to_string(),
    ));
    let r = resolver(&server.url, Duration::ZERO, Duration::from_secs(5));
    r.resolve("DNK", 0).unwrap();
    thread::sleep(Duration::from_millis(5));
    assert_eq!(
        r.resolve("DNK", 0).unwrap().source,
        IntensitySource::Realtime
    );
    assert_eq!(server.hits(), 2);
}

#[test]
fn concurrent_misses_coalesce() {
    let server = StubServer::start(Behaviour::Json(
        r#"{"g_per_kwh": 120.5, "ts_ms": 1}"#.to_string(),
    ));
    let r = Arc::new(resolver(
        &server.url,
        Duration::from_secs(300),
        Duration::from_secs(5),
    ));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let r = r.clone();
            thread::spawn(move || r.resolve("DNK", 0).unwrap().g_per_kwh)
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), 120.5);
    }
    assert_eq!(server.hits(), 1);
}

#[test]
fn http_500_falls_back_to_static_table() {
    let server = StubServer::start(Behaviour::Status(500));
    let endpoint = EndpointConfig::new(format!("{}/x", server.url));
    assert!(matches!(
        fetch_realtime::<f64>("DNK_AVG", 0, &endpoint),
        Err(IntensityError::HttpStatus(500))
    ));
    let r = resolver(
        &server.url,
        Duration::from_secs(300),
        Duration::from_secs(5),
    );
    let i = r.resolve("DNK_AVG", 0).unwrap();
    assert_eq!(i.g_per_kwh, 193.0);
    assert_eq!(i.source, IntensitySource::StaticTable);
}

#[test]
fn malformed_body_falls_back() {
    let server = StubServer::start(Behaviour::Json(r#"{"intensity": 266}"#.to_string()));
    let endpoint = EndpointConfig::new(server.url.clone());
    assert!(matches!(
        fetch_realtime::<f64>("DNK_AVG", 0, &endpoint),
        Err(IntensityError::MalformedResponse(_))
    ));
    let r = resolver(
        &server.url,
        Duration::from_secs(300),
        Duration::from_secs(5),
    );
    assert_eq!(
        r.resolve("DNK_AVG", 0).unwrap().source,
        IntensitySource::StaticTable
    );
}

#[test]
fn hanging_endpoint_times_out_within_bound() {
    let server = StubServer::start(Behaviour::Hang(Duration::from_secs(10)));
    let timeout = Duration::from_millis(500);
    let endpoint = EndpointConfig {
        url_template: server.url.clone(),
        timeout,
    };
    let started = Instant::now();
    let err = fetch_realtime::<f64>("DNK", 0, &endpoint).unwrap_err();
    let elapsed = started.elapsed();
    assert!(matches!(err, IntensityError::NetworkTimeout(_)), "{err:?}");
    assert!(
        elapsed < timeout + Duration::from_millis(500),
        "{elapsed:?}"
    );

    let r = resolver(&server.url, Duration::from_secs(300), timeout);
    let started = Instant::now();
    let i = r.resolve("DNK_AVG", 0).unwrap();
    assert_eq!(i.g_per_kwh, 193.0);
    assert!(started.elapsed() < timeout + Duration::from_millis(500));
}

#[test]
fn endpoint_down_unknown_region_uses_default_or_errors() {
    let r = resolver(
        "http://127.0.0.1:9",
        Duration::from_secs(300),
        Duration::from_millis(300),
    );
    assert!(matches!(
        r.resolve("XX", 0),
        Err(IntensityError::UnknownRegionNoDefault(_))
    ));
}

#[test]
fn generic_scalar_f32_resolves() {
    let r: carbonledger::intensity::IntensityResolver<f32> =
        carbonledger::intensity::IntensityResolver::new(ResolverConfig::default());
    let i = r.resolve("EST", 0).unwrap();
    assert!((i.g_per_kwh - 634.6f32).abs() < 1e-3);
    let _: CarbonIntensity = CarbonIntensity::override_value("X", 1.0).unwrap();
}
