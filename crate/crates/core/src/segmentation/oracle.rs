use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::rng::{stream, CHANNEL_SEGMENTATION};

use super::{
    IlluminationModel, Mask, PromptPoint, SegmentationError, SegmentationProvider, Silhouette, StereoMask,
    SyntheticFrame, SyntheticTarget, View,
};

/// Confidence given to failed masks (below the default threshold).
pub const FAILED_CONFIDENCE: f64 = 0.2;
/// Failed masks are shrunk to this fraction of the true silhouette.
pub const FAILED_SCALE: f64 = 0.5;
/// Beta concentration used when sampling the realized IoU.
pub const IOU_CONCENTRATION: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub illumination: IlluminationModel,
    /// When false every claimed target gets its exact silhouette.
    pub degradation: bool,
    /// σ of an independent per-view translation (px), applied in `u` and `v`.
    pub pixel_jitter_px: f64,
    pub seed: u64,
}

/// Synthetic segmenter that perturbs the true silhouettes according to an
/// illumination-indexed calibration.
///
/// Per claimed target it draws a failure with the table's failure rate
/// (half-size mask, confidence 0.2). Otherwise it samples a target IoU
/// `q ~ Beta(50 m, 50 (1 - m))` and a relative depth error
/// `ε ~ N(0, e √(π/2))` so that the mean `|ε|` equals the table's depth
/// error `e`. The disparity change `δ` giving depth `Z (1 + ε)` is split
/// evenly between the views as opposite horizontal shifts, and the
/// silhouettes are scaled so the expected overlap with truth equals `q`.
#[derive(Debug, Clone)]
pub struct OracleSegmenter {
    pub config: OracleConfig,
}

impl OracleSegmenter {
    pub fn new(config: OracleConfig) -> Self {
        Self { config }
    }

    fn claims(target: &SyntheticTarget, prompts: &[PromptPoint]) -> bool {
        prompts.is_empty()
            || prompts.iter().any(|p| match p.view {
                View::Left => target.left.contains_point(p.pixel),
                View::Right => target.right.contains_point(p.pixel),
            })
    }

    fn degrade(&self, frame: &SyntheticFrame, target: &SyntheticTarget) -> StereoMask {
        let cfg = &self.config;
        let mut rng = stream(cfg.seed, frame.frame_id, CHANNEL_SEGMENTATION + target.id as u64);
        let (mut left, mut right, confidence) = if cfg.degradation {
            let row = cfg.illumination.row(target.class);
            if rng.random_bool(row.failure_rate.clamp(0.0, 1.0)) {
                (target.left.scaled(FAILED_SCALE), target.right.scaled(FAILED_SCALE), FAILED_CONFIDENCE)
            } else {
                let q = sample_iou(&mut rng, row.mean_iou);
                let sigma = row.depth_error_pct / 100.0 * (PI / 2.0).sqrt();
                let eps = if sigma > 0.0 { Normal::new(0.0, sigma).expect("finite σ").sample(&mut rng) } else { 0.0 };
                let d = target.left.bbox().centre().u - target.right.bbox().centre().u;
                let delta = d / (1.0 + eps) - d;
                let grow = rng.random_bool(0.5);
                let s = solve_scale_for_iou(&target.left, delta.abs() / 2.0, q, grow);
                (
                    target.left.scaled(s).translated(delta / 2.0, 0.0),
                    target.right.scaled(s).translated(-delta / 2.0, 0.0),
                    0.75 + 0.25 * q,
                )
            }
        } else {
            (target.left.clone(), target.right.clone(), 1.0)
        };
        if cfg.pixel_jitter_px > 0.0 {
            let n = Normal::new(0.0, cfg.pixel_jitter_px).expect("finite jitter");
            left = left.translated(n.sample(&mut rng), n.sample(&mut rng));
            right = right.translated(n.sample(&mut rng), n.sample(&mut rng));
        }
        StereoMask {
            left: Mask::from_shape(frame.width, frame.height, left, confidence),
            right: Mask::from_shape(frame.width, frame.height, right, confidence),
            confidence,
        }
    }
}

impl SegmentationProvider for OracleSegmenter {
    fn segment(&mut self, frame: &SyntheticFrame, prompts: &[PromptPoint]) -> Result<Vec<StereoMask>, SegmentationError> {
        let mut targets: Vec<&SyntheticTarget> = frame.targets.iter().filter(|t| Self::claims(t, prompts)).collect();
        targets.sort_by_key(|t| t.id);
        Ok(targets.into_iter().map(|t| self.degrade(frame, t)).collect())
    }
}

fn sample_iou<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    if mean >= 1.0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    Beta::new(IOU_CONCENTRATION * mean, IOU_CONCENTRATION * (1.0 - mean))
        .expect("positive shape parameters")
        .sample(rng)
}

/// Continuous IoU between `shape` and a copy scaled by `s` about its centre
/// and shifted horizontally by `a` px. Disks are exact, other shapes use
/// their bounding rectangle.
fn overlap_model(shape: &Silhouette, s: f64, a: f64) -> f64 {
    match shape {
        Silhouette::Disk { radius, .. } => disk_iou(*radius, radius * s, a),
        _ => {
            let b = shape.bbox();
            rect_iou(b.width().max(1e-9), b.height().max(1e-9), s, a)
        }
    }
}

fn rect_iou(w: f64, h: f64, s: f64, a: f64) -> f64 {
    let iw = ((w / 2.0).min(a + s * w / 2.0) - (-w / 2.0).max(a - s * w / 2.0)).max(0.0);
    let ih = h.min(s * h);
    let inter = iw * ih;
    inter / (w * h * (1.0 + s * s) - inter)
}

fn disk_iou(r1: f64, r2: f64, d: f64) -> f64 {
    let a1 = PI * r1 * r1;
    let a2 = PI * r2 * r2;
    let inter = if d >= r1 + r2 {
        0.0
    } else if d <= (r1 - r2).abs() {
        a1.min(a2)
    } else {
        let c1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
        let c2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0);
        let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0);
        r1 * r1 * c1.acos() + r2 * r2 * c2.acos() - 0.5 * k.sqrt()
    };
    inter / (a1 + a2 - inter)
}

/// Finds the scale `s` whose overlap with the truth (under a horizontal
/// shift `a`) equals `q`, on the shrinking or growing side of the optimum.
/// When `q` exceeds the best attainable overlap the optimum is returned.
pub fn solve_scale_for_iou(shape: &Silhouette, a: f64, q: f64, grow: bool) -> f64 {
    let f = |s: f64| overlap_model(shape, s, a);
    // Golden-section search for the maximizing scale.
    let (mut lo, mut hi) = (0.2_f64, 5.0_f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let best = (lo + hi) / 2.0;
    if q >= f(best) {
        return best;
    }
    let (mut a_s, mut b_s) = if grow { (best, 100.0) } else { (1e-6, best) };
    for _ in 0..200 {
        let mid = (a_s + b_s) / 2.0;
        let above = f(mid) > q;
        // On the growing side the overlap decreases with scale.
        if above == grow {
            a_s = mid;
        } else {
            b_s = mid;
        }
    }
    (a_s + b_s) / 2.0
}
