//! Command-line front end: `simulate`, `sweep`, `replay`, `validate`, `schema`.
//!
//! Exit codes: 0 success, 1 unreadable or unparsable input, 2 invalid
//! configuration or arguments, 3 runtime failure.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{self, MetricsError, RunSummary};
use crate::pipeline::Mode;
use crate::segmentation::{BridgeClient, BridgeEndpoint, SegmentationProvider};
use crate::simulator::{self, FrameBundle, RunOptions, SceneConfig, SimError, Trace};

/// Environment variable selecting an external segmentation bridge
/// (`host:port` or `stdio:<command>`).
pub const BRIDGE_ENV: &str = "AQUAFUSE_BRIDGE";
pub const BRIDGE_TIMEOUT: Duration = Duration::from_secs(10);

pub const SCENE_SCHEMA: &str = include_str!("../data/schema/scene.schema.json");
pub const CALIBRATION_SCHEMA: &str = include_str!("../data/schema/calibration.schema.json");
pub const WIRE_SCHEMA: &str = include_str!("../data/schema/wire.schema.json");

#[derive(Debug, Parser)]
#[command(name = "aquafuse", version, about = "Stereo and ultrasonic target localization simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ranging,
    Ekf,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ranging => Mode::Ranging,
            ModeArg::Ekf => Mode::Ekf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemaKind {
    Scene,
    Calibration,
    Wire,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scene and write its trace CSV and summary JSON.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        /// Defaults to the scene's pipeline mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Defaults to the scene's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the input bundles as NDJSON for `replay`.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Compute realized mask IoU (slower).
        #[arg(long)]
        iou: bool,
    },
    /// Repeat a scene over several illuminance values and seeds.
    Sweep {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lux: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline over recorded NDJSON bundles.
    Replay {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scene file.
    Validate {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Print the JSON schemas of the input formats.
    Schema {
        #[arg(value_enum, default_value_t = SchemaKind::All)]
        kind: SchemaKind,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(_) | SimError::Parse(_) => CliError::Input(e.to_string()),
            SimError::Validation { .. } => CliError::Invalid(e.to_string()),
            SimError::OutOfWindow { .. } | SimError::Runtime { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::TooFewLuxValues(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let bridge = bridge_from_env()?;
    match command {
        Command::Simulate { scene, mode, seed, out: dir, record, iou } => {
            let scene = SceneConfig::load(&scene)?;
            let options = options(&scene, mode, seed, iou);
            if let Some(path) = record {
                record_bundles(&scene, options.seed, &path)?;
            }
            let trace = run_one(&scene, &options, bridge.as_ref())?;
            report(&trace, &dir, out)
        }
        Command::Sweep { scene, lux, runs, seed, mode, out: dir } => {
            let scene = SceneConfig::load(&scene)?;
            if runs == 0 {
                return Err(CliError::Invalid("--runs must be at least 1".into()));
            }
            if lux.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                return Err(CliError::Invalid("--lux values must be positive".into()));
            }
            let base = seed.unwrap_or(scene.seed);
            let jobs: Vec<(f64, u64)> = lux.iter().flat_map(|&l| (0..runs).map(move |i| (l, base + i))).collect();
            let results: Vec<Result<(Trace, RunSummary), CliError>> = jobs
                .par_iter()
                .map(|&(l, s)| {
                    let mut sc = scene.clone();
                    sc.lux = l;
                    sc.validate()?;
                    let trace = run_one(&sc, &options(&sc, mode, Some(s), true), bridge.as_ref())?;
                    let summary = metrics::summarize(&trace)?;
                    metrics::write_run(&dir, &trace, &summary)?;
                    Ok((trace, summary))
                })
                .collect();
            let mut summaries = Vec::with_capacity(results.len());
            for r in results {
                let (trace, summary) = r?;
                writeln!(out, "{}", summary_line(&trace, &summary, None)).map_err(io_err)?;
                summaries.push(summary);
            }
            let report = metrics::sweep_report(&summaries)?;
            let stem = format!("{}_sweep_{base}", scene.name);
            let csv_path = dir.join(format!("{stem}.csv"));
            let json_path = dir.join(format!("{stem}.json"));
            metrics::write_atomic(&csv_path, report.to_csv()?.as_bytes())?;
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            metrics::write_atomic(&json_path, json.as_bytes())?;
            writeln!(out, "sweep={} rows={} csv={} json={}", scene.name, report.rows.len(), csv_path.display(), json_path.display())
                .map_err(io_err)
        }
        Command::Replay { scene, bundles, mode, seed, out: dir } => {
            let scene = SceneConfig::load(&scene)?;
            let options = options(&scene, mode, seed, false);
            let bundles = read_bundles(&bundles)?;
            let mut provider = provider_for(&scene, options.seed, bridge.as_ref());
            let trace = simulator::replay(&scene, &options, bundles.into_iter().map(Ok), &mut provider)?;
            report(&trace, &dir, out)
        }
        Command::Validate { scene } => {
            SceneConfig::load(&scene)?;
            writeln!(out, "OK").map_err(io_err)
        }
        Command::Schema { kind } => {
            let text = match kind {
                SchemaKind::Scene => SCENE_SCHEMA.to_string(),
                SchemaKind::Calibration => CALIBRATION_SCHEMA.to_string(),
                SchemaKind::Wire => WIRE_SCHEMA.to_string(),
                SchemaKind::All => {
                    let all = serde_json::json!({
                        "scene": serde_json::from_str::<serde_json::Value>(SCENE_SCHEMA).expect("schema is json"),
                        "calibration": serde_json::from_str::<serde_json::Value>(CALIBRATION_SCHEMA).expect("schema is json"),
                        "wire": serde_json::from_str::<serde_json::Value>(WIRE_SCHEMA).expect("schema is json"),
                    });
                    serde_json::to_string_pretty(&all).expect("json")
                }
            };
            writeln!(out, "{}", text.trim_end()).map_err(io_err)
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn options(scene: &SceneConfig, mode: Option<ModeArg>, seed: Option<u64>, compute_iou: bool) -> RunOptions {
    RunOptions {
        mode: mode.map(Mode::from).or(scene.pipeline.mode).unwrap_or(Mode::Ranging),
        seed: seed.unwrap_or(scene.seed),
        compute_iou,
    }
}

fn bridge_from_env() -> Result<Option<BridgeEndpoint>, CliError> {
    match std::env::var(BRIDGE_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .parse::<BridgeEndpoint>()
            .map(Some)
            .map_err(|e| CliError::Invalid(format!("{BRIDGE_ENV}: {e}"))),
        _ => Ok(None),
    }
}

fn provider_for(scene: &SceneConfig, seed: u64, bridge: Option<&BridgeEndpoint>) -> Box<dyn SegmentationProvider> {
    match bridge {
        Some(ep) => Box::new(BridgeClient::new(ep.clone(), BRIDGE_TIMEOUT)),
        None => Box::new(simulator::oracle_for(scene, seed)),
    }
}

fn run_one(scene: &SceneConfig, options: &RunOptions, bridge: Option<&BridgeEndpoint>) -> Result<Trace, CliError> {
    let mut provider = provider_for(scene, options.seed, bridge);
    Ok(simulator::run_with(scene, options, &mut provider)?)
}

fn report(trace: &Trace, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let summary = metrics::summarize(trace)?;
    let paths = metrics::write_run(dir, trace, &summary)?;
    writeln!(out, "{}", summary_line(trace, &summary, Some(paths))).map_err(io_err)
}

fn num(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "na".into())
}

/// Machine-readable `key=value` summary of one run.
pub fn summary_line(trace: &Trace, s: &RunSummary, paths: Option<(PathBuf, PathBuf)>) -> String {
    let mode = match trace.mode {
        Mode::Ranging => "ranging",
        Mode::Ekf => "ekf",
    };
    let mut line = format!(
        "scene={} lux={} seed={} mode={} ticks={} camera_err_pct={} acoustic_err_pct={} fused_err_pct={} failure_rate={} pz_reduction_pct={} provider_errors={}",
        trace.scene,
        trace.lux,
        trace.seed,
        mode,
        s.ticks,
        num(s.camera_error_pct.mean),
        num(s.acoustic_error_pct.mean),
        num(s.fused_error_pct.mean),
        num(s.failure.rate),
        num(s.state_errors.reduction_pct[2]),
        s.provider_errors,
    );
    if let Some((csv, json)) = paths {
        line.push_str(&format!(" csv={} json={}", csv.display(), json.display()));
    }
    line
}

/// Writes the bundle stream of a scene as NDJSON.
pub fn record_bundles(scene: &SceneConfig, seed: u64, path: &Path) -> Result<(), CliError> {
    let mut sc = scene.clone();
    sc.seed = seed;
    let world = simulator::World::new(sc)?;
    let mut text = String::new();
    for b in world.bundles() {
        text.push_str(&serde_json::to_string(&b?).expect("bundle serializes"));
        text.push('\n');
    }
    metrics::write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Reads NDJSON bundles, skipping blank lines.
pub fn read_bundles(path: &Path) -> Result<Vec<FrameBundle>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let b: FrameBundle = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(b);
    }
    Ok(out)
}
