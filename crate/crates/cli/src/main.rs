mod commands;
mod daemon;
mod error;
mod plot;
mod track;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use carbonledger::accounting::{DEFAULT_CAR_FACTOR, DEFAULT_PER_CAPITA_KG};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "carbonledger",
    version,
    about = "Energy and carbon accounting for compute jobs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample power while a command runs (or while a marker client drives epochs).
    Track(track::TrackArgs),
    /// Extrapolate a partial run to its full number of epochs.
    Predict(commands::PredictArgs),
    /// Render the emissions report of a ledger.
    Report(commands::ReportArgs),
    /// Community-wide extrapolation: N x K x per-fold / acceptance ratio.
    Estimate(commands::EstimateArgs),
    /// Recommend the lowest-carbon start time from an intensity forecast.
    Advise(commands::AdviseArgs),
    /// Write SVG plots of per-epoch energy or an intensity forecast.
    Plot(commands::PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// Flags shared by every command that needs a carbon intensity.
#[derive(Args, Debug, Clone)]
pub struct IntensityArgs {
    /// Region code looked up in the intensity table.
    #[arg(long, env = "CARBONLEDGER_REGION", default_value = "WOR")]
    pub region: String,
    /// Realtime endpoint; `{region}` and `{ts_ms}` are substituted.
    #[arg(long, env = "CARBONLEDGER_INTENSITY_URL")]
    pub intensity_url: Option<String>,
    /// Fixed intensity in gCO2/kWh, bypassing every lookup.
    #[arg(long)]
    pub intensity: Option<f64>,
    /// Extra `region,g_per_kwh,source_note` table merged over the shipped one.
    #[arg(long)]
    pub region_table: Option<PathBuf>,
    /// Intensity for regions missing from the table.
    #[arg(long)]
    pub fallback_intensity: Option<f64>,
    /// Realtime request timeout.
    #[arg(long, value_parser = humantime::parse_duration, default_value = "5s")]
    pub intensity_timeout: Duration,
}

/// Car-distance and per-capita conversion factors.
#[derive(Args, Debug, Clone)]
pub struct EquivalenceArgs {
    /// kgCO2 per km driven (0.08725 reproduces the regional distance table).
    #[arg(long, default_value_t = DEFAULT_CAR_FACTOR)]
    pub car_factor: f64,
    /// Annual per-capita footprint in kgCO2eq.
    #[arg(long, default_value_t = DEFAULT_PER_CAPITA_KG)]
    pub per_capita: f64,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Track(args) => track::run(args),
        Command::Predict(args) => commands::predict(args).map(|()| 0),
        Command::Report(args) => commands::report(args).map(|()| 0),
        Command::Estimate(args) => commands::estimate(args).map(|()| 0),
        Command::Advise(args) => commands::advise(args).map(|()| 0),
        Command::Plot(args) => commands::plot(args).map(|()| 0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code.clamp(0, 255) as u8),
        Err(e) => {
            eprintln!("carbonledger: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
