use serde::{Deserialize, Serialize};

use crate::geometry::PixelPoint;
use crate::pipeline::{Flags, Mode, Pipeline, TickResult};
use crate::segmentation::{iou, Mask, OracleConfig, OracleSegmenter, SegmentationProvider, SyntheticTarget, View};

use super::world::{FrameBundle, TruthPose, World};
use super::{SceneConfig, SimError};

/// Truth targets farther than this from a track centre are not attributed.
pub const ATTRIBUTION_RADIUS_PX: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub seed: u64,
    /// Realized IoU per segmented target (rasterizes masks; slower).
    pub compute_iou: bool,
}

/// One track estimate on one tick, with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub t: f64,
    pub track_id: u32,
    pub confirmed: bool,
    pub truth_id: Option<u32>,
    pub truth: Option<[f64; 6]>,
    pub zb: Option<f64>,
    pub zr: Option<f64>,
    pub zf: Option<f64>,
    pub flags: Flags,
    pub prior: Option<[f64; 6]>,
    pub posterior: Option<[f64; 6]>,
}

impl TraceRow {
    pub fn truth_pz(&self) -> Option<f64> {
        self.truth.map(|s| s[2])
    }
}

/// Segmentation outcome for one prompted truth target on one camera tick.
/// `iou` is only measured for successful segmentations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRecord {
    pub tick: u64,
    pub truth_id: u32,
    pub failed: bool,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scene: String,
    pub seed: u64,
    pub lux: f64,
    pub mode: Mode,
    pub alpha: f64,
    pub config_hash: String,
    pub ticks: u64,
    pub rows: Vec<TraceRow>,
    pub segmentation: Vec<SegmentationRecord>,
    pub provider_errors: u64,
}

/// Oracle segmenter configured from the scene.
pub fn oracle_for(scene: &SceneConfig, seed: u64) -> OracleSegmenter {
    OracleSegmenter::new(OracleConfig {
        illumination: scene.illumination(),
        degradation: scene.noise.degradation,
        pixel_jitter_px: scene.noise.pixel_jitter_px,
        seed,
    })
}

/// Runs `scene` through the pipeline with the built-in oracle segmenter.
pub fn run(scene: &SceneConfig, options: &RunOptions) -> Result<Trace, SimError> {
    let mut oracle = oracle_for(scene, options.seed);
    run_with(scene, options, &mut oracle)
}

/// Runs `scene` through the pipeline with an arbitrary segmentation provider.
pub fn run_with<P: SegmentationProvider + ?Sized>(
    scene: &SceneConfig,
    options: &RunOptions,
    provider: &mut P,
) -> Result<Trace, SimError> {
    let mut scene = scene.clone();
    scene.seed = options.seed;
    let world = World::new(scene.clone())?;
    let bundles = world.bundles();
    process_bundles(&scene, options, &world, bundles, provider)
}

/// Replays pre-recorded bundles (e.g. from an NDJSON file).
pub fn replay<P, I>(scene: &SceneConfig, options: &RunOptions, bundles: I, provider: &mut P) -> Result<Trace, SimError>
where
    P: SegmentationProvider + ?Sized,
    I: IntoIterator<Item = Result<FrameBundle, SimError>>,
{
    let mut scene = scene.clone();
    scene.seed = options.seed;
    let world = World::new(scene.clone())?;
    process_bundles(&scene, options, &world, bundles, provider)
}

fn process_bundles<P, I>(
    scene: &SceneConfig,
    options: &RunOptions,
    world: &World,
    bundles: I,
    provider: &mut P,
) -> Result<Trace, SimError>
where
    P: SegmentationProvider + ?Sized,
    I: IntoIterator<Item = Result<FrameBundle, SimError>>,
{
    let mut config = scene.pipeline_config()?;
    config.mode = options.mode;
    let alpha = config.alpha;
    let mut pipeline = Pipeline::new(config, world.rect.clone(), world.sensors.clone())
        .map_err(|e| SimError::Validation { path: "pipeline".into(), message: e.to_string() })?;
    let mut trace = Trace {
        scene: scene.name.clone(),
        seed: options.seed,
        lux: scene.lux,
        mode: options.mode,
        alpha,
        config_hash: crate::metrics::config_hash(scene, options.mode),
        ticks: 0,
        rows: Vec::new(),
        segmentation: Vec::new(),
        provider_errors: 0,
    };
    for bundle in bundles {
        let bundle = bundle?;
        let result = pipeline
            .process_tick(&bundle, provider)
            .map_err(|e| SimError::Runtime { tick: bundle.tick, message: e.to_string() })?;
        trace.ticks += 1;
        if result.provider_error.is_some() {
            trace.provider_errors += 1;
        }
        let silhouettes = bundle.frame.as_ref().map(|f| f.targets.clone()).unwrap_or_default();
        record_segmentation(&bundle, &result, &silhouettes, options.compute_iou, &mut trace.segmentation);
        for e in &result.estimates {
            let truth = attribute(e.centre, &silhouettes, &bundle.truth);
            trace.rows.push(TraceRow {
                tick: bundle.tick,
                t: bundle.timestamp,
                track_id: e.track_id,
                confirmed: e.confirmed,
                truth_id: truth.map(|p| p.id),
                truth: truth.map(|p| p.state()),
                zb: e.zb,
                zr: e.zr,
                zf: e.zf,
                flags: e.flags,
                prior: e.prior,
                posterior: e.posterior,
            });
        }
    }
    Ok(trace)
}

/// Truth pose whose left silhouette contains `centre`, else the one whose
/// silhouette centre is nearest within [`ATTRIBUTION_RADIUS_PX`].
fn attribute(centre: PixelPoint, silhouettes: &[SyntheticTarget], truth: &[TruthPose]) -> Option<TruthPose> {
    let pose = |id: u32| truth.iter().find(|p| p.id == id).copied();
    if let Some(s) = silhouettes.iter().find(|s| s.left.contains_point(centre)) {
        return pose(s.id);
    }
    silhouettes
        .iter()
        .map(|s| (s.left.bbox().centre().distance(&centre), s.id))
        .filter(|(d, _)| *d <= ATTRIBUTION_RADIUS_PX)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .and_then(|(_, id)| pose(id))
}

fn record_segmentation(
    bundle: &FrameBundle,
    result: &TickResult,
    silhouettes: &[SyntheticTarget],
    compute_iou: bool,
    out: &mut Vec<SegmentationRecord>,
) {
    let Some(frame) = &bundle.frame else { return };
    for target in silhouettes {
        let prompted = result.prompts.is_empty()
            || result.prompts.iter().any(|p| match p.view {
                View::Left => target.left.contains_point(p.pixel),
                View::Right => target.right.contains_point(p.pixel),
            });
        if !prompted {
            continue;
        }
        let hit = result.masks.iter().find(|m| m.centre.is_some_and(|c| target.left.contains_point(c)));
        let failed = hit.is_none_or(|m| m.failed());
        let iou = match hit {
            Some(m) if compute_iou && !failed => {
                let truth = Mask::from_shape(frame.width, frame.height, target.left.clone(), 1.0);
                iou(&m.mask.left, &truth).ok()
            }
            _ => None,
        };
        out.push(SegmentationRecord { tick: bundle.tick, truth_id: target.id, failed, iou });
    }
}
