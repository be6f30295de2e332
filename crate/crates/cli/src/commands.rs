use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, ValueEnum};
use serde::Serialize;

use carbonledger::accounting::{self, people_phrase, to_person_years};
use carbonledger::advisor::best_window;
use carbonledger::epochs::{PredictOptions, PredictionMode};
use carbonledger::intensity::{read_forecast, EndpointConfig, RegionTable, ResolverConfig};
use carbonledger::{
    CarbonIntensity, EmissionsReport, EnergyLedger, IntensityForecast, IntensityResolver,
    Prediction, TimestampMs,
};

use crate::error::CliError;
use crate::{plot, EquivalenceArgs, Format, IntensityArgs};

pub fn now_ms() -> TimestampMs {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as TimestampMs)
        .unwrap_or_default()
}

/// Resolves the intensity for `args.region`, honouring `--intensity`.
pub fn resolve_intensity(
    args: &IntensityArgs,
    at: TimestampMs,
) -> Result<CarbonIntensity, CliError> {
    if let Some(g) = args.intensity {
        return Ok(CarbonIntensity::override_value(args.region.clone(), g)?);
    }
    let mut table = RegionTable::shipped();
    if let Some(path) = &args.region_table {
        table.merge_file(path)?;
    }
    let resolver = IntensityResolver::new(ResolverConfig {
        realtime: args.intensity_url.as_ref().map(|url| EndpointConfig {
            url_template: url.clone(),
            timeout: args.intensity_timeout,
        }),
        table,
        global_default: args.fallback_intensity,
        ..ResolverConfig::default()
    });
    Ok(resolver.resolve(&args.region, at)?)
}

pub fn load_ledger(path: &Path) -> Result<EnergyLedger, CliError> {
    Ok(EnergyLedger::load(path)?)
}

pub fn build_report(
    kwh: f64,
    intensity: &CarbonIntensity,
    eq: &EquivalenceArgs,
) -> Result<EmissionsReport, CliError> {
    Ok(EmissionsReport::new(
        kwh,
        intensity,
        eq.car_factor,
        eq.per_capita,
    )?)
}

pub fn render_report(report: &EmissionsReport, format: Format) -> String {
    match format {
        Format::Text => report.render_text(),
        Format::Json => json_line(&report.document()),
    }
}

pub fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Ledger JSON written by `track`.
    pub ledger: PathBuf,
    /// Number of epochs of the full run.
    #[arg(long, short = 'e')]
    pub epochs_total: usize,
    #[command(flatten)]
    pub intensity: IntensityArgs,
    /// Keep epoch 0 in the per-epoch mean even when three or more epochs are measured.
    #[arg(long)]
    pub no_warmup_exclusion: bool,
    /// Predict mean x total epochs instead of keeping the measured epochs verbatim.
    #[arg(long)]
    pub reextrapolate: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

pub fn run_prediction(ledger: &EnergyLedger, args: &PredictArgs) -> Result<Prediction, CliError> {
    let intensity = resolve_intensity(&args.intensity, now_ms())?;
    let options = PredictOptions {
        exclude_warmup: !args.no_warmup_exclusion,
        mode: if args.reextrapolate {
            PredictionMode::Reextrapolate
        } else {
            PredictionMode::IncludeMeasured
        },
    };
    Ok(ledger.predict(args.epochs_total, &intensity, options)?)
}

pub fn render_prediction(p: &Prediction, format: Format) -> String {
    match format {
        Format::Json => json_line(p),
        Format::Text => {
            let i = &p.intensity_used;
            format!(
                "measured epochs:      {} of {}\n\
                 predicted energy:     {:.3} kWh\n\
                 predicted duration:   {}\n\
                 predicted emissions:  {:.3} kgCO2eq ({} at {:.1} gCO2/kWh, {})\n\
                 per-epoch energy CV:  {:.3}\n",
                p.measured_epochs,
                p.total_epochs,
                p.predicted_kwh,
                humantime::format_duration(Duration::from_secs(
                    p.predicted_duration_s.round() as u64
                )),
                p.predicted_kgco2,
                i.region,
                i.g_per_kwh,
                i.source,
                p.energy_cv,
            )
        }
    }
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let ledger = load_ledger(&args.ledger)?;
    let prediction = run_prediction(&ledger, &args)?;
    print!("{}", render_prediction(&prediction, args.format));
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Ledger JSON written by `track`.
    #[arg(required_unless_present = "compare")]
    pub ledger: Option<PathBuf>,
    /// Compare two ledgers (e.g. mixed vs full precision) instead.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "ledger")]
    pub compare: Option<Vec<PathBuf>>,
    #[command(flatten)]
    pub intensity: IntensityArgs,
    #[command(flatten)]
    pub equivalence: EquivalenceArgs,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Serialize)]
struct ComparisonDocument {
    a: accounting::ReportDocument,
    b: accounting::ReportDocument,
    delta_kwh: f64,
    delta_kg_co2eq: f64,
    delta_km_car: f64,
    relative_kwh: f64,
}

pub fn report(args: ReportArgs) -> Result<(), CliError> {
    let intensity = resolve_intensity(&args.intensity, now_ms())?;
    if let Some(paths) = &args.compare {
        let (a, b) = (load_ledger(&paths[0])?, load_ledger(&paths[1])?);
        let ra = build_report(a.total_kwh(), &intensity, &args.equivalence)?;
        let rb = build_report(b.total_kwh(), &intensity, &args.equivalence)?;
        let relative = if ra.kwh > 0.0 {
            (rb.kwh - ra.kwh) / ra.kwh
        } else {
            0.0
        };
        match args.format {
            Format::Json => print!(
                "{}",
                json_line(&ComparisonDocument {
                    a: ra.document(),
                    b: rb.document(),
                    delta_kwh: round3(rb.kwh - ra.kwh),
                    delta_kg_co2eq: round3(rb.kg_co2eq - ra.kg_co2eq),
                    delta_km_car: round3(rb.km_car - ra.km_car),
                    relative_kwh: round3(relative),
                })
            ),
            Format::Text => {
                println!(
                    "{:<12}{:>14}{:>16}{:>14}",
                    "run", "kWh", "kgCO2eq", "km by car"
                );
                for (label, r) in [(&a.run_id, &ra), (&b.run_id, &rb)] {
                    println!(
                        "{label:<12}{:>14.3}{:>16.3}{:>14.3}",
                        r.kwh, r.kg_co2eq, r.km_car
                    );
                }
                println!(
                    "{:<12}{:>+14.3}{:>+16.3}{:>+14.3}",
                    "delta",
                    rb.kwh - ra.kwh,
                    rb.kg_co2eq - ra.kg_co2eq,
                    rb.km_car - ra.km_car
                );
                println!("relative energy change: {:+.1}%", relative * 100.0);
            }
        }
        return Ok(());
    }

    let path = args.ledger.as_ref().expect("clap requires ledger");
    let ledger = load_ledger(path)?;
    let report = build_report(ledger.total_kwh(), &intensity, &args.equivalence)?;
    print!("{}", render_report(&report, args.format));
    Ok(())
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum EstimateUnit {
    #[default]
    Km,
    Kg,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Number of papers.
    #[arg(short = 'n', long)]
    pub papers: u64,
    /// Training folds per paper.
    #[arg(short = 'k', long, default_value_t = 1)]
    pub folds: u64,
    /// Car distance (km) or emissions (kg) per training fold.
    #[arg(short = 'd', long)]
    pub per_fold: f64,
    /// Acceptance ratio in (0, 1].
    #[arg(short = 'a', long)]
    pub acceptance: f64,
    #[arg(long, value_enum, default_value_t)]
    pub unit: EstimateUnit,
    /// Per-capita footprint used for the kg person-year comparison.
    #[arg(long, default_value_t = accounting::DEFAULT_PER_CAPITA_KG)]
    pub per_capita: f64,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

pub fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    match args.unit {
        EstimateUnit::Km => {
            let e = accounting::aggregate_estimate(
                args.papers,
                args.folds,
                args.per_fold,
                args.acceptance,
            )?;
            match args.format {
                Format::Json => print!("{}", json_line(&e)),
                Format::Text => println!(
                    "Total distance by car: {:.1} km ({} papers x {} folds x {} km / acceptance {})",
                    e.total_km, e.n_papers, e.k_folds, e.per_fold_km, e.acceptance_ratio
                ),
            }
        }
        EstimateUnit::Kg => {
            let e = accounting::aggregate_emissions(
                args.papers,
                args.folds,
                args.per_fold,
                args.acceptance,
            )?;
            let people = to_person_years(e.total_kg, args.per_capita)?;
            match args.format {
                Format::Json => print!("{}", json_line(&e)),
                Format::Text => println!(
                    "Total emissions: {:.1} kgCO2eq ({} papers x {} folds x {} kg / acceptance {}), \
                     the annual carbon footprint of {}",
                    e.total_kg,
                    e.n_papers,
                    e.k_folds,
                    e.per_fold_kg,
                    e.acceptance_ratio,
                    people_phrase(people)
                ),
            }
        }
    }
    Ok(())
}

fn parse_span(text: &str) -> Result<Duration, String> {
    match text.parse::<u64>() {
        Ok(secs) => Ok(Duration::from_secs(secs)),
        Err(_) => humantime::parse_duration(text).map_err(|e| e.to_string()),
    }
}

#[derive(Args, Debug)]
pub struct AdviseArgs {
    /// Forecast CSV (`ts_ms,g_per_kwh`).
    pub forecast: PathBuf,
    /// Job duration (seconds, or e.g. `3h`, `90m`).
    #[arg(long, value_parser = parse_span)]
    pub duration: Duration,
    /// Latest acceptable start, relative to the earliest (default: as late as the forecast allows).
    #[arg(long, value_parser = parse_span)]
    pub horizon: Option<Duration>,
    /// Earliest start (ms since epoch); defaults to the first forecast point.
    #[arg(long)]
    pub earliest: Option<TimestampMs>,
    #[arg(long, env = "CARBONLEDGER_REGION", default_value = "WOR")]
    pub region: String,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

pub fn advise(args: AdviseArgs) -> Result<(), CliError> {
    let forecast: IntensityForecast = read_forecast(&args.forecast, &args.region)?;
    let (first, last) = match (forecast.points().first(), forecast.points().last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => {
            return Err(CliError::Usage(format!(
                "{}: forecast is empty",
                args.forecast.display()
            )))
        }
    };
    let duration_ms = args.duration.as_millis() as i64;
    let earliest = args.earliest.unwrap_or(first);
    let latest = match args.horizon {
        Some(h) => earliest + h.as_millis() as i64,
        None => last - duration_ms,
    };
    let advice = best_window(&forecast, duration_ms, earliest, latest)?;
    match args.format {
        Format::Json => print!("{}", json_line(&advice)),
        Format::Text => println!(
            "start at {} (ms), end at {}: mean {:.1} gCO2/kWh, {:.1}% below starting now",
            advice.start_ms,
            advice.end_ms,
            advice.mean_g_per_kwh,
            advice.savings_vs_now * 100.0
        ),
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Ledger JSON: plots energy per epoch.
    #[arg(long, required_unless_present = "forecast")]
    pub ledger: Option<PathBuf>,
    /// Forecast CSV: plots the intensity timeline.
    #[arg(long, conflicts_with = "ledger")]
    pub forecast: Option<PathBuf>,
    /// Output SVG file.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

pub fn plot(args: PlotArgs) -> Result<(), CliError> {
    let svg = if let Some(path) = &args.ledger {
        plot::epoch_energy_svg(&load_ledger(path)?)
    } else {
        let path = args.forecast.as_ref().expect("clap requires one input");
        let forecast: IntensityForecast = read_forecast(path, "")?;
        plot::intensity_svg(&forecast)
    };
    fs::write(&args.out, svg).map_err(|e| CliError::io(args.out.display(), e))
}
