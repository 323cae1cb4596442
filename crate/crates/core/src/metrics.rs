//! Run summaries, illumination sweep tables and report files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pipeline::Mode;
use crate::simulator::{SceneConfig, Trace, TraceRow};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub const STATE_COMPONENTS: [&str; 6] = ["px", "py", "pz", "vx", "vy", "vz"];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace has no ticks")]
    EmptyTrace,
    #[error("a sweep needs at least two illuminance values, got {0}")]
    TooFewLuxValues(usize),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Mean and sample standard deviation with the sample count. Empty samples
/// give `null` statistics, a single sample has no spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

impl Stat {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: None, std: None, count: 0 };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { mean: Some(mean), std, count: n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub events: usize,
    pub count: usize,
    pub rate: Option<f64>,
}

impl Rate {
    pub fn new(events: usize, count: usize) -> Self {
        Self { events, count, rate: (count > 0).then(|| events as f64 / count as f64) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateErrors {
    pub prior: [Stat; 6],
    pub posterior: [Stat; 6],
    /// `(prior - posterior) / prior` of the mean absolute error, percent.
    pub reduction_pct: [Option<f64>; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: u32,
    pub scene: String,
    pub seed: u64,
    pub lux: f64,
    pub mode: Mode,
    pub alpha: f64,
    pub config_hash: String,
    pub ticks: u64,
    pub rows: usize,
    /// Percentage depth errors over measured (non-extrapolated) samples.
    pub camera_error_pct: Stat,
    pub acoustic_error_pct: Stat,
    pub fused_error_pct: Stat,
    pub failure: Rate,
    pub iou: Stat,
    pub state_errors: StateErrors,
    pub provider_errors: u64,
}

/// SHA-256 over the scene's canonical JSON and the run mode.
pub fn config_hash(scene: &SceneConfig, mode: Mode) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(scene).expect("scene serializes"));
    h.update(serde_json::to_vec(&mode).expect("mode serializes"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn pct(z: f64, truth: f64) -> f64 {
    (z - truth).abs() / truth * 100.0
}

/// Percentage error series `(t, error)` of one depth channel, measured
/// samples only.
pub fn error_series(rows: &[TraceRow], channel: Channel) -> Vec<(f64, f64)> {
    rows.iter()
        .filter_map(|r| {
            let truth = r.truth_pz()?;
            let z = match channel {
                Channel::Camera if !r.flags.extrapolated_segmentation => r.zb?,
                Channel::Acoustic if !r.flags.extrapolated_range => r.zr?,
                Channel::Fused if r.flags.ok() => r.zf?,
                _ => return None,
            };
            Some((r.t, pct(z, truth)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Camera,
    Acoustic,
    Fused,
}

/// Bins a series into `period`-second buckets and averages each bucket.
/// Returns `(bucket start, mean)` in time order.
pub fn resample(series: &[(f64, f64)], period: f64) -> Vec<(f64, f64)> {
    let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for &(t, x) in series {
        let e = bins.entry((t / period + 1e-9).floor() as i64).or_insert((0.0, 0));
        e.0 += x;
        e.1 += 1;
    }
    bins.into_iter().map(|(k, (s, n))| (k as f64 * period, s / n as f64)).collect()
}

/// The 1 Hz resampling used for error-over-time plots.
pub fn resample_1hz(series: &[(f64, f64)]) -> Vec<(f64, f64)> {
    resample(series, 1.0)
}

pub fn summarize(trace: &Trace) -> Result<RunSummary, MetricsError> {
    if trace.ticks == 0 {
        return Err(MetricsError::EmptyTrace);
    }
    let values = |c| error_series(&trace.rows, c).into_iter().map(|(_, e)| e).collect::<Vec<_>>();
    let failures = trace.segmentation.iter().filter(|s| s.failed).count();
    let ious: Vec<f64> = trace.segmentation.iter().filter_map(|s| s.iou).collect();

    let mut prior: [Vec<f64>; 6] = Default::default();
    let mut post: [Vec<f64>; 6] = Default::default();
    for r in &trace.rows {
        let (Some(truth), Some(p), Some(q)) = (r.truth, r.prior, r.posterior) else { continue };
        for i in 0..6 {
            prior[i].push((p[i] - truth[i]).abs());
            post[i].push((q[i] - truth[i]).abs());
        }
    }
    let prior = prior.map(|v| Stat::of(&v));
    let posterior = post.map(|v| Stat::of(&v));
    let mut reduction_pct = [None; 6];
    for i in 0..6 {
        if let (Some(a), Some(b)) = (prior[i].mean, posterior[i].mean) {
            reduction_pct[i] = (a > 0.0).then(|| (a - b) / a * 100.0);
        }
    }

    Ok(RunSummary {
        schema: SUMMARY_SCHEMA_VERSION,
        scene: trace.scene.clone(),
        seed: trace.seed,
        lux: trace.lux,
        mode: trace.mode,
        alpha: trace.alpha,
        config_hash: trace.config_hash.clone(),
        ticks: trace.ticks,
        rows: trace.rows.len(),
        camera_error_pct: Stat::of(&values(Channel::Camera)),
        acoustic_error_pct: Stat::of(&values(Channel::Acoustic)),
        fused_error_pct: Stat::of(&values(Channel::Fused)),
        failure: Rate::new(failures, trace.segmentation.len()),
        iou: Stat::of(&ious),
        state_errors: StateErrors { prior, posterior, reduction_pct },
        provider_errors: trace.provider_errors,
    })
}

pub const TRACE_COLUMNS: [&str; 19] = [
    "t", "target_id", "truth_pz", "zb", "zr", "zf", "flag", "prior_px", "prior_py", "prior_pz", "prior_vx", "prior_vy",
    "prior_vz", "post_px", "post_py", "post_pz", "post_vx", "post_vy", "post_vz",
];

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// The trace as CSV, one row per track per tick. Missing values are empty.
pub fn trace_csv(trace: &Trace) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.rows {
        let mut rec = vec![r.t.to_string(), r.track_id.to_string(), cell(r.truth_pz()), cell(r.zb), cell(r.zr), cell(r.zf), r.flags.label()];
        for s in [r.prior, r.posterior] {
            for i in 0..6 {
                rec.push(cell(s.map(|x| x[i])));
            }
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| MetricsError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lux: f64,
    pub runs: usize,
    pub failure: Rate,
    /// Spread of the per-run failure rates.
    pub failure_rate_std: Option<f64>,
    pub iou: Stat,
    pub depth_error_pct: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: u32,
    pub scene: String,
    pub rows: Vec<SweepRow>,
}

/// Pools run summaries per illuminance into one table row each.
pub fn sweep_report(summaries: &[RunSummary]) -> Result<SweepReport, MetricsError> {
    let mut by_lux: Vec<(f64, Vec<&RunSummary>)> = Vec::new();
    for s in summaries {
        match by_lux.iter_mut().find(|(l, _)| *l == s.lux) {
            Some((_, v)) => v.push(s),
            None => by_lux.push((s.lux, vec![s])),
        }
    }
    if by_lux.len() < 2 {
        return Err(MetricsError::TooFewLuxValues(by_lux.len()));
    }
    by_lux.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows = by_lux
        .into_iter()
        .map(|(lux, runs)| {
            let events = runs.iter().map(|s| s.failure.events).sum();
            let count = runs.iter().map(|s| s.failure.count).sum();
            let rates: Vec<f64> = runs.iter().filter_map(|s| s.failure.rate).collect();
            SweepRow {
                lux,
                runs: runs.len(),
                failure: Rate::new(events, count),
                failure_rate_std: Stat::of(&rates).std,
                iou: pooled(runs.iter().map(|s| &s.iou)),
                depth_error_pct: pooled(runs.iter().map(|s| &s.camera_error_pct)),
            }
        })
        .collect();
    Ok(SweepReport { schema: SUMMARY_SCHEMA_VERSION, scene: summaries[0].scene.clone(), rows })
}

/// Combines per-run statistics as if their samples were pooled.
fn pooled<'a>(stats: impl Iterator<Item = &'a Stat>) -> Stat {
    let (mut n, mut sum, mut sumsq) = (0usize, 0.0, 0.0);
    for s in stats {
        let Some(m) = s.mean else { continue };
        let var = s.std.unwrap_or(0.0).powi(2);
        sum += m * s.count as f64;
        sumsq += var * (s.count.saturating_sub(1)) as f64 + m * m * s.count as f64;
        n += s.count;
    }
    if n == 0 {
        return Stat { mean: None, std: None, count: 0 };
    }
    let mean = sum / n as f64;
    let std = (n > 1).then(|| ((sumsq - n as f64 * mean * mean).max(0.0) / (n - 1) as f64).sqrt());
    Stat { mean: Some(mean), std, count: n }
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["lux", "runs", "failure_rate", "failure_rate_std", "iou_mean", "iou_std", "depth_error_pct", "depth_error_std"])?;
        for r in &self.rows {
            w.write_record([
                r.lux.to_string(),
                r.runs.to_string(),
                cell(r.failure.rate),
                cell(r.failure_rate_std),
                cell(r.iou.mean),
                cell(r.iou.std),
                cell(r.depth_error_pct.mean),
                cell(r.depth_error_pct.std),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| MetricsError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// `{scene}_{lux}_{seed}`.
pub fn output_stem(scene: &str, lux: f64, seed: u64) -> String {
    format!("{scene}_{lux}_{seed}")
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), MetricsError> {
    let io = |source| MetricsError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Writes the trace CSV and summary JSON of one run into `dir`.
/// Returns the two paths.
pub fn write_run(dir: &Path, trace: &Trace, summary: &RunSummary) -> Result<(PathBuf, PathBuf), MetricsError> {
    let stem = output_stem(&trace.scene, trace.lux, trace.seed);
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_atomic(&csv_path, trace_csv(trace)?.as_bytes())?;
    let mut json = serde_json::to_string_pretty(summary).expect("summary serializes");
    json.push('\n');
    write_atomic(&json_path, json.as_bytes())?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Flags;
    use crate::simulator::SegmentationRecord;

    fn row(t: f64, zb: f64, prior: f64, post: f64) -> TraceRow {
        TraceRow {
            tick: (t * 10.0) as u64,
            t,
            track_id: 0,
            confirmed: true,
            truth_id: Some(0),
            truth: Some([0.0, 0.0, 0.5, 0.0, 0.0, 0.0]),
            zb: Some(zb),
            zr: Some(0.5),
            zf: Some(0.5),
            flags: Flags::default(),
            prior: Some([prior, prior, 0.5 + prior, prior, prior, prior]),
            posterior: Some([post, post, 0.5 + post, post, post, post]),
        }
    }

    fn trace(rows: Vec<TraceRow>) -> Trace {
        Trace {
            scene: "unit".into(),
            seed: 7,
            lux: 4.0,
            mode: Mode::Ekf,
            alpha: 0.24,
            config_hash: String::new(),
            ticks: rows.len() as u64,
            rows,
            segmentation: vec![SegmentationRecord { tick: 0, truth_id: 0, failed: true, iou: None }],
            provider_errors: 0,
        }
    }

    #[test]
    fn constant_camera_error() {
        let t = trace((0..10).map(|i| row(i as f64 * 0.1, 0.52, 0.1, 0.05)).collect());
        let s = summarize(&t).unwrap();
        assert!((s.camera_error_pct.mean.unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(s.camera_error_pct.count, 10);
        assert_eq!(s.fused_error_pct.mean, Some(0.0));
        assert_eq!(s.failure.rate, Some(1.0));
        assert_eq!(s.iou.mean, None);
        assert!(s.state_errors.reduction_pct.iter().all(|r| r.unwrap() >= 0.0));
    }

    #[test]
    fn extrapolated_samples_are_excluded() {
        let mut r = row(0.0, 0.6, 0.0, 0.0);
        r.flags.extrapolated_segmentation = true;
        let s = summarize(&trace(vec![r, row(0.1, 0.5, 0.0, 0.0)])).unwrap();
        assert_eq!(s.camera_error_pct.count, 1);
        assert_eq!(s.fused_error_pct.count, 1);
        assert_eq!(s.acoustic_error_pct.count, 2);
    }

    #[test]
    fn empty_trace_is_an_error() {
        let mut t = trace(vec![]);
        t.ticks = 0;
        assert!(matches!(summarize(&t), Err(MetricsError::EmptyTrace)));
    }

    #[test]
    fn stat_edge_cases() {
        assert_eq!(Stat::of(&[]), Stat { mean: None, std: None, count: 0 });
        assert_eq!(Stat::of(&[2.0]), Stat { mean: Some(2.0), std: None, count: 1 });
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let json = serde_json::to_string(&Stat::of(&[])).unwrap();
        assert_eq!(json, r#"{"mean":null,"std":null,"count":0}"#);
    }

    #[test]
    fn pooled_matches_direct() {
        let a = [1.0, 2.0, 4.0];
        let b = [3.0, 9.0];
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let p = pooled([Stat::of(&a), Stat::of(&b)].iter());
        let d = Stat::of(&all);
        assert!((p.mean.unwrap() - d.mean.unwrap()).abs() < 1e-12);
        assert!((p.std.unwrap() - d.std.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn resampling_averages_buckets() {
        let s = [(0.0, 1.0), (0.5, 3.0), (1.0, 5.0), (2.9, 7.0)];
        assert_eq!(resample_1hz(&s), vec![(0.0, 2.0), (1.0, 5.0), (2.0, 7.0)]);
    }

    #[test]
    fn sweep_needs_two_lux_values() {
        let s = summarize(&trace(vec![row(0.0, 0.5, 0.0, 0.0)])).unwrap();
        assert!(matches!(sweep_report(std::slice::from_ref(&s)), Err(MetricsError::TooFewLuxValues(1))));
        let mut s2 = s.clone();
        s2.lux = 8.0;
        let r = sweep_report(&[s2, s.clone(), s]).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].lux, 4.0);
        assert_eq!(r.rows[0].runs, 2);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn csv_layout() {
        let mut r = row(0.1, 0.5, 0.0, 0.0);
        r.prior = None;
        r.flags.extrapolated_range = true;
        let csv = trace_csv(&trace(vec![r])).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "0.1,0,0.5,0.5,0.5,0.5,extrapolated_range,,,,,,,0,0,0.5,0,0,0");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
