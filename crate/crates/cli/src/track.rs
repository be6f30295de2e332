use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use clap::{Args, ValueEnum};
use log::{debug, info, warn};

use carbonledger::epochs::PredictOptions;
use carbonledger::protocol::replay_markers;
use carbonledger::telemetry::{
    open_live_source, read_replay, GapPolicy, PowerSource, SampleSnapshot, SourceConfig,
    SourceKind, DEFAULT_INTERVAL_MS,
};
use carbonledger::{EnergyLedger, SampleLog, TimestampMs};

use crate::commands::{build_report, json_line, now_ms, render_report, resolve_intensity};
use crate::daemon::MarkerDaemon;
use crate::error::CliError;
use crate::{plot, EquivalenceArgs, Format, IntensityArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceChoice {
    /// CPU and GPU counters, whichever are present.
    Auto,
    Cpu,
    Gpu,
    /// Constant power; see `--synthetic-watts`.
    Synthetic,
    /// Samples from a `ts_ms,component,watts` file, no command is run.
    Replay,
}

#[derive(Args, Debug)]
pub struct TrackArgs {
    /// Run identifier; also the prefix of every output file.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Facility overhead multiplier (>= 1).
    #[arg(long, default_value_t = 1.0)]
    pub pue: f64,
    /// Total epochs of the full run; writes a prediction alongside the report.
    #[arg(long, short = 'e')]
    pub epochs_total: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SourceChoice::Auto)]
    pub source: SourceChoice,
    /// Fall back to the synthetic source when no counters are found.
    #[arg(long)]
    pub allow_synthetic: bool,
    #[arg(long, default_value_t = 100.0)]
    pub synthetic_watts: f64,
    #[arg(long, default_value_t = DEFAULT_INTERVAL_MS)]
    pub interval_ms: i64,
    /// Serve epoch markers on this socket path.
    #[arg(long)]
    pub listen: Option<PathBuf>,
    /// Sample file for `--source replay`.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Recorded marker stream applied to the replayed samples.
    #[arg(long, requires = "replay")]
    pub markers: Option<PathBuf>,
    #[arg(long, hide = true, default_value = "/sys/class/powercap")]
    pub powercap_root: PathBuf,
    #[command(flatten)]
    pub intensity: IntensityArgs,
    #[command(flatten)]
    pub equivalence: EquivalenceArgs,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Command to run; without one, tracking lasts until a client sends `stop`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub command: Vec<String>,
}

#[derive(Debug)]
enum RunCommand {
    Spawn(Vec<String>),
    External,
    Replay {
        samples: PathBuf,
        markers: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct RunManifest {
    run_id: String,
    command: RunCommand,
    pue: f64,
    epochs_total: Option<usize>,
    output_dir: PathBuf,
}

impl RunManifest {
    fn from_args(args: &TrackArgs, started_ms: TimestampMs) -> Result<Self, CliError> {
        if !(1.0..f64::INFINITY).contains(&args.pue) {
            return Err(CliError::Usage(format!(
                "--pue must be at least 1, got {}",
                args.pue
            )));
        }
        if args.interval_ms <= 0 {
            return Err(CliError::Usage("--interval-ms must be positive".into()));
        }
        let command = match (args.source, &args.replay) {
            (SourceChoice::Replay, Some(path)) => {
                if !args.command.is_empty() {
                    return Err(CliError::Usage(
                        "a replayed run cannot also run a command".into(),
                    ));
                }
                RunCommand::Replay {
                    samples: path.clone(),
                    markers: args.markers.clone(),
                }
            }
            (SourceChoice::Replay, None) => {
                return Err(CliError::Usage(
                    "--source replay needs --replay FILE".into(),
                ))
            }
            (_, Some(_)) => return Err(CliError::Usage("--replay needs --source replay".into())),
            _ if !args.command.is_empty() => RunCommand::Spawn(args.command.clone()),
            _ if args.listen.is_some() => RunCommand::External,
            _ => {
                return Err(CliError::Usage(
                    "nothing to track: give a command or --listen SOCKET".into(),
                ))
            }
        };
        let run_id = args
            .run_id
            .clone()
            .unwrap_or_else(|| format!("run-{started_ms}-{}", std::process::id()));
        if run_id.is_empty() || run_id.contains(['/', '\\']) {
            return Err(CliError::Usage(format!("invalid run id `{run_id}`")));
        }
        Ok(Self {
            run_id,
            command,
            pue: args.pue,
            epochs_total: args.epochs_total,
            output_dir: args.out.clone(),
        })
    }

    fn output(&self, suffix: &str) -> PathBuf {
        self.output_dir.join(format!("{}.{suffix}", self.run_id))
    }
}

pub fn run(args: TrackArgs) -> Result<i32, CliError> {
    let started_ms = now_ms();
    let manifest = RunManifest::from_args(&args, started_ms)?;
    fs::create_dir_all(&manifest.output_dir)
        .map_err(|e| CliError::io(manifest.output_dir.display(), e))?;
    let ledger_path = manifest.output("ledger.json");
    if ledger_path.exists() {
        return Err(CliError::Usage(format!(
            "{} already exists; pick another --run-id",
            ledger_path.display()
        )));
    }

    let (ledger, exit_code) = match &manifest.command {
        RunCommand::Replay { samples, markers } => {
            (replay_run(&manifest, samples, markers.as_deref())?, 0)
        }
        _ => live_run(&manifest, &args)?,
    };

    ledger.save(&ledger_path)?;
    write_file(
        &manifest.output("epochs.svg"),
        &plot::epoch_energy_svg(&ledger),
    )?;
    info!("ledger written to {}", ledger_path.display());

    let intensity = match resolve_intensity(&args.intensity, now_ms()) {
        Ok(i) => i,
        Err(e) => {
            warn!(
                "no carbon intensity for {}: {e}; only the ledger was written",
                args.intensity.region
            );
            return Ok(exit_code);
        }
    };
    let report = build_report(ledger.total_kwh(), &intensity, &args.equivalence)?;
    write_file(&manifest.output("report.txt"), &report.render_text())?;
    write_file(
        &manifest.output("report.json"),
        &json_line(&report.document()),
    )?;
    if let Some(total) = manifest.epochs_total {
        match ledger.predict(total, &intensity, PredictOptions::default()) {
            Ok(p) => write_file(&manifest.output("prediction.json"), &json_line(&p))?,
            Err(e) => warn!("no prediction: {e}"),
        }
    }
    let degraded = ledger.epochs().iter().filter(|e| e.degraded).count();
    if degraded > 0 {
        eprintln!(
            "carbonledger: {degraded} epoch(s) were not fully covered by samples; their energy is approximate"
        );
    }
    print!("{}", render_report(&report, args.format));
    Ok(exit_code)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn replay_run(
    manifest: &RunManifest,
    samples_path: &Path,
    markers: Option<&Path>,
) -> Result<EnergyLedger, CliError> {
    let samples = read_replay::<f64>(samples_path)?;
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (a.timestamp_ms, b.timestamp_ms),
        _ => {
            return Err(CliError::Io(format!(
                "{}: no samples",
                samples_path.display()
            )));
        }
    };
    let interval = median_interval(&samples.iter().map(|s| s.timestamp_ms).collect::<Vec<_>>());
    let log = SampleLog::new();
    log.extend(samples)?;
    let snapshot = log.snapshot();
    let mut ledger = EnergyLedger::new(manifest.run_id.clone(), manifest.pue)?
        .with_gap_policy(GapPolicy::from_interval(interval));
    if let Some(path) = markers {
        let file = File::open(path).map_err(|e| CliError::io(path.display(), e))?;
        replay_markers(BufReader::new(file), &mut ledger, &snapshot)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    close_run(&mut ledger, first, last, &snapshot)?;
    Ok(ledger)
}

fn median_interval(timestamps: &[TimestampMs]) -> i64 {
    let mut deltas: Vec<i64> = timestamps
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0)
        .collect();
    if deltas.is_empty() {
        return DEFAULT_INTERVAL_MS;
    }
    deltas.sort_unstable();
    deltas[deltas.len() / 2]
}

/// Closes a dangling epoch at `end_ms`, or records the whole run as one epoch
/// when no markers arrived.
fn close_run(
    ledger: &mut EnergyLedger,
    start_ms: TimestampMs,
    end_ms: TimestampMs,
    snapshot: &SampleSnapshot<f64>,
) -> Result<(), CliError> {
    if ledger.open_epoch().is_some() {
        ledger.epoch_end(end_ms, snapshot)?;
    } else if ledger.epochs().is_empty() {
        ledger.epoch_start(start_ms)?;
        ledger.epoch_end(end_ms, snapshot)?;
    }
    Ok(())
}

fn open_sources(args: &TrackArgs) -> Result<Vec<Box<dyn PowerSource<f64>>>, CliError> {
    let config = SourceConfig {
        interval_ms: args.interval_ms,
        synthetic_watts: args.synthetic_watts,
        powercap_root: args.powercap_root.clone(),
        ..SourceConfig::default()
    };
    let explicit = match args.source {
        SourceChoice::Cpu => Some(SourceKind::CpuCounter),
        SourceChoice::Gpu => Some(SourceKind::GpuCounter),
        SourceChoice::Synthetic => Some(SourceKind::SyntheticConstant),
        SourceChoice::Auto | SourceChoice::Replay => None,
    };
    if let Some(kind) = explicit {
        return Ok(vec![open_live_source(kind, &config)?]);
    }
    let mut sources = Vec::new();
    let mut reasons = Vec::new();
    for kind in [SourceKind::CpuCounter, SourceKind::GpuCounter] {
        match open_live_source::<f64>(kind, &config) {
            Ok(s) => sources.push(s),
            Err(e) => {
                debug!("{kind:?} unavailable: {e}");
                reasons.push(e.to_string());
            }
        }
    }
    if sources.is_empty() {
        if args.allow_synthetic {
            warn!(
                "no power counters found; using a constant {} W",
                args.synthetic_watts
            );
            return Ok(vec![open_live_source(
                SourceKind::SyntheticConstant,
                &config,
            )?]);
        }
        return Err(CliError::Telemetry(format!(
            "{} (pass --allow-synthetic to track with a constant power)",
            reasons.join("; ")
        )));
    }
    Ok(sources)
}

struct Sampler {
    stop: mpsc::Sender<TimestampMs>,
    handle: JoinHandle<()>,
}

fn spawn_sampler(
    mut source: Box<dyn PowerSource<f64>>,
    log: SampleLog,
    interval: Duration,
    start_ms: TimestampMs,
) -> Sampler {
    let (stop, stop_rx): (_, Receiver<TimestampMs>) = mpsc::channel();
    let handle = thread::spawn(move || {
        let mut record = |ts: TimestampMs| match source.poll(ts) {
            Ok(batch) => {
                for sample in batch {
                    if let Err(e) = log.append(sample) {
                        debug!("sample dropped: {e}");
                    }
                }
            }
            Err(e) => warn!("power poll failed: {e}"),
        };
        record(start_ms);
        loop {
            match stop_rx.recv_timeout(interval) {
                Ok(end_ms) => {
                    record(end_ms);
                    break;
                }
                Err(RecvTimeoutError::Timeout) => record(now_ms()),
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
    });
    Sampler { stop, handle }
}

fn live_run(manifest: &RunManifest, args: &TrackArgs) -> Result<(EnergyLedger, i32), CliError> {
    let sources = open_sources(args)?;
    let log = SampleLog::new();
    let ledger = Arc::new(Mutex::new(
        EnergyLedger::new(manifest.run_id.clone(), manifest.pue)?
            .with_gap_policy(GapPolicy::from_interval(args.interval_ms)),
    ));
    let (stopped_tx, stopped_rx) = mpsc::channel();
    let daemon = match &args.listen {
        Some(path) => Some(
            MarkerDaemon::spawn(path, ledger.clone(), log.clone(), stopped_tx)
                .map_err(|e| CliError::io(path.display(), e))?,
        ),
        None => None,
    };

    let start_ms = now_ms();
    let interval = Duration::from_millis(args.interval_ms as u64);
    let samplers: Vec<Sampler> = sources
        .into_iter()
        .map(|s| spawn_sampler(s, log.clone(), interval, start_ms))
        .collect();

    let outcome = match &manifest.command {
        RunCommand::Spawn(argv) => {
            let mut cmd = Command::new(&argv[0]);
            cmd.args(&argv[1..])
                .env("CARBONLEDGER_RUN_ID", &manifest.run_id);
            if let Some(path) = &args.listen {
                cmd.env("CARBONLEDGER_SOCKET", path);
            }
            cmd.status()
                .map(|status| exit_code(&status))
                .map_err(|e| CliError::io(format!("cannot run `{}`", argv[0]), e))
        }
        _ => {
            let _ = stopped_rx.recv();
            Ok(0)
        }
    };

    let end_ms = now_ms().max(start_ms + 1);
    for sampler in &samplers {
        let _ = sampler.stop.send(end_ms);
    }
    for sampler in samplers {
        let _ = sampler.handle.join();
    }
    if let Some(daemon) = daemon {
        daemon.shutdown();
    }
    let code = outcome?;

    let mut ledger = Arc::try_unwrap(ledger)
        .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()))
        .unwrap_or_else(|shared| clone_ledger(&shared));
    close_run(&mut ledger, start_ms, end_ms, &log.snapshot())?;
    Ok((ledger, code))
}

fn clone_ledger(shared: &Mutex<EnergyLedger>) -> EnergyLedger {
    shared.lock().unwrap_or_else(|e| e.into_inner()).clone()
}

fn exit_code(status: &ExitStatus) -> i32 {
    use std::os::unix::process::ExitStatusExt;
    status
        .code()
        .or_else(|| status.signal().map(|s| 128 + s))
        .unwrap_or(1)
}
