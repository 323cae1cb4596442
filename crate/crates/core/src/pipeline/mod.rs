//! Per-tick localization: range gating, rectification, prompted
//! segmentation, confidence and epipolar gates, then either weighted-average
//! ranging or EKF tracking. Failed gates fall back to extrapolation.

mod association;

use nalgebra::{Matrix6, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustic::{validate_range, RangeGate, SensorStatus, UltrasonicSensor};
use crate::ekf::{self, CameraParams, EkfError, EkfParams, NoiseConfig, TrackState};
use crate::fusion::{fuse_range, RangeHistory, DEFAULT_WINDOW};
use crate::geometry::{GeometryError, PixelPoint, Rectification};
use crate::segmentation::{
    extract_key_point_pairs, match_stereo_masks, min_bounding_box, range_to_prompt_pair, BoundingBox,
    PromptPoint, SegmentationProvider, StereoMask, TargetObservation, View, DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_EPS_PX,
};
use crate::simulator::FrameBundle;

pub use association::{associate_tracks, Assignment, Candidate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("bundle timestamp {t} is not after {last}")]
    StaleTimestamp { t: f64, last: f64 },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ekf(#[from] EkfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ranging,
    Ekf,
}

impl std::str::FromStr for Mode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ranging" => Ok(Mode::Ranging),
            "ekf" => Ok(Mode::Ekf),
            other => Err(PipelineError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub confidence_threshold: f64,
    pub eps_px: f64,
    pub gate: RangeGate,
    pub alpha: f64,
    pub window: usize,
    pub association_gate_px: f64,
    /// Tracks are dropped after this many consecutive missed frames.
    pub retire_after: u32,
    /// Consecutive matches needed before a track counts as confirmed.
    pub confirm_after: u32,
    pub noise: NoiseConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ranging,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            eps_px: DEFAULT_EPS_PX,
            gate: RangeGate::default(),
            alpha: 0.24,
            window: DEFAULT_WINDOW,
            association_gate_px: 50.0,
            retire_after: 10,
            confirm_after: 2,
            noise: NoiseConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold <= 1.0) {
            return bad(format!("confidence threshold {} outside (0, 1]", self.confidence_threshold));
        }
        if !(self.eps_px > 0.0) {
            return bad(format!("eps {} must be positive", self.eps_px));
        }
        if self.gate.validate().is_err() {
            return bad(format!("range gate [{}, {}] invalid", self.gate.r_min, self.gate.r_max));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if self.window == 0 || self.retire_after == 0 || self.confirm_after == 0 {
            return bad("window, retire_after and confirm_after must be positive".into());
        }
        if !(self.association_gate_px > 0.0) {
            return bad(format!("association gate {} must be positive", self.association_gate_px));
        }
        self.noise.validate()?;
        Ok(())
    }
}

/// Outcome flags for one track on one tick. No flag set means `ok`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub extrapolated_range: bool,
    pub extrapolated_segmentation: bool,
    pub emc_failed: bool,
    pub low_confidence: bool,
}

impl Flags {
    pub fn ok(&self) -> bool {
        *self == Flags::default()
    }

    /// `ok`, or the set flags joined by `|`.
    pub fn label(&self) -> String {
        if self.ok() {
            return "ok".into();
        }
        let mut parts = Vec::new();
        if self.extrapolated_range {
            parts.push("extrapolated_range");
        }
        if self.extrapolated_segmentation {
            parts.push("extrapolated_segmentation");
        }
        if self.emc_failed {
            parts.push("emc_failed");
        }
        if self.low_confidence {
            parts.push("low_confidence");
        }
        parts.join("|")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub track_id: u32,
    pub confirmed: bool,
    /// Left-image centre of this tick's observation, or the last one seen.
    pub centre: PixelPoint,
    pub observed: bool,
    pub sensor_id: Option<u32>,
    pub zb: Option<f64>,
    pub zr: Option<f64>,
    pub zf: Option<f64>,
    pub flags: Flags,
    pub prior: Option<[f64; 6]>,
    pub posterior: Option<[f64; 6]>,
}

/// One segmentation result and how the gates treated it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskOutcome {
    pub mask: StereoMask,
    pub centre: Option<PixelPoint>,
    pub low_confidence: bool,
    pub emc_failed: bool,
    pub stereo_depth: Option<f64>,
}

impl MaskOutcome {
    pub fn failed(&self) -> bool {
        self.stereo_depth.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickResult {
    pub tick: u64,
    pub t: f64,
    pub prompts: Vec<PromptPoint>,
    pub masks: Vec<MaskOutcome>,
    pub provider_error: Option<String>,
    pub estimates: Vec<TrackEstimate>,
}

#[derive(Debug, Clone)]
struct Track {
    id: u32,
    centre: PixelPoint,
    hits: u32,
    misses: u32,
    confirmed: bool,
    sensor_id: Option<u32>,
    optical: RangeHistory,
    acoustic: RangeHistory,
    state: Option<TrackState>,
}

/// Per-observation data gathered before association.
#[derive(Debug, Clone)]
struct Observation {
    label: u32,
    centre: PixelPoint,
    target: Option<TargetObservation>,
    low_confidence: bool,
    emc_failed: bool,
    sensor_id: Option<u32>,
    range: Option<f64>,
}

pub struct Pipeline {
    config: PipelineConfig,
    rect: Rectification,
    camera: CameraParams,
    sensors: Vec<UltrasonicSensor>,
    ekf: EkfParams,
    p0: Matrix6<f64>,
    tracks: Vec<Track>,
    next_track_id: u32,
    last_t: Option<f64>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, rect: Rectification, sensors: Vec<UltrasonicSensor>) -> Result<Self, PipelineError> {
        config.validate()?;
        let k = rect.intrinsics;
        let camera = CameraParams { f_u: k.fx, f_v: k.fy, c_u: k.cx, c_v: k.cy, baseline: rect.baseline };
        let ekf = EkfParams { camera, accel_variance: config.noise.accel_variance, r: config.noise.r() };
        let p0 = config.noise.p0();
        Ok(Self { config, rect, camera, sensors, ekf, p0, tracks: Vec::new(), next_track_id: 0, last_t: None })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn camera(&self) -> &CameraParams {
        &self.camera
    }

    pub fn track_count(&self) -> usize {
        self.tracks.len()
    }

    pub fn process_tick<P: SegmentationProvider + ?Sized>(
        &mut self,
        bundle: &FrameBundle,
        provider: &mut P,
    ) -> Result<TickResult, PipelineError> {
        let t = bundle.timestamp;
        if let Some(last) = self.last_t {
            if !(t > last) {
                return Err(PipelineError::StaleTimestamp { t, last });
            }
        }
        self.last_t = Some(t);

        // Range gate.
        let mut valid_ranges: Vec<(u32, f64)> = bundle
            .ranges
            .iter()
            .filter_map(|m| {
                let s = m.distance?;
                (validate_range(s, &self.config.gate) == SensorStatus::Valid).then_some((m.sensor_id, s))
            })
            .collect();
        valid_ranges.sort_by_key(|r| r.0);
        let range_of = |id: u32| valid_ranges.iter().find(|r| r.0 == id).map(|r| r.1);

        let mut result = TickResult { tick: bundle.tick, t, prompts: Vec::new(), masks: Vec::new(), provider_error: None, estimates: Vec::new() };

        let Some(frame) = &bundle.frame else {
            // No image this tick: ranges only, keyed by each track's last sensor.
            let observed: Vec<Option<Observation>> = vec![None; self.tracks.len()];
            self.advance_tracks(t, observed, &range_of, false, &mut result)?;
            return Ok(result);
        };

        // Prompts in the frame's pixel coordinates.
        let size = self.rect.image_size;
        let mut prompts = Vec::new();
        for &(id, s) in &valid_ranges {
            let Some(sensor) = self.sensors.iter().find(|x| x.id == id) else { continue };
            let Ok(pair) = range_to_prompt_pair(sensor, s, &self.rect.intrinsics, self.rect.baseline, size) else {
                continue;
            };
            for mut p in pair {
                if bundle.raw {
                    let remap = match p.view {
                        View::Left => &self.rect.left,
                        View::Right => &self.rect.right,
                    };
                    match remap.rectified_to_raw(p.pixel) {
                        Ok(px) => p.pixel = px,
                        Err(_) => continue,
                    }
                }
                prompts.push(p);
            }
        }
        result.prompts = prompts.clone();

        let masks = match provider.segment(frame, &prompts) {
            Ok(m) => m,
            Err(e) => {
                result.provider_error = Some(e.to_string());
                let observed: Vec<Option<Observation>> = vec![None; self.tracks.len()];
                self.advance_tracks(t, observed, &range_of, true, &mut result)?;
                return Ok(result);
            }
        };

        let mut observations = Vec::new();
        for m in masks {
            let (obs, outcome) = self.observe(m, &prompts, bundle.raw, &range_of);
            result.masks.push(outcome);
            if let Some(o) = obs {
                observations.push(o);
            }
        }
        // Canonical order and labels: claimed sensor first, then position.
        observations.sort_by(|a, b| {
            a.sensor_id
                .unwrap_or(u32::MAX)
                .cmp(&b.sensor_id.unwrap_or(u32::MAX))
                .then(a.centre.u.total_cmp(&b.centre.u))
                .then(a.centre.v.total_cmp(&b.centre.v))
        });
        for (i, o) in observations.iter_mut().enumerate() {
            o.label = i as u32;
        }

        let obs_c: Vec<Candidate> = observations.iter().map(|o| Candidate { id: o.label, centre: o.centre }).collect();
        let trk_c: Vec<Candidate> = self.tracks.iter().map(|t| Candidate { id: t.id, centre: t.centre }).collect();
        let assignment = associate_tracks(&obs_c, &trk_c, self.config.association_gate_px)?;

        let mut per_track: Vec<Option<Observation>> = vec![None; self.tracks.len()];
        for (tid, label) in &assignment.matches {
            let idx = self.tracks.iter().position(|t| t.id == *tid).expect("matched track exists");
            per_track[idx] = Some(observations[*label as usize].clone());
        }
        for label in &assignment.unmatched_observations {
            let o = &observations[*label as usize];
            self.tracks.push(Track {
                id: self.next_track_id,
                centre: o.centre,
                hits: 0,
                misses: 0,
                confirmed: false,
                sensor_id: None,
                optical: RangeHistory::new(self.config.window),
                acoustic: RangeHistory::new(self.config.window),
                state: None,
            });
            self.next_track_id += 1;
            per_track.push(Some(o.clone()));
        }
        self.advance_tracks(t, per_track, &range_of, true, &mut result)?;
        Ok(result)
    }

    fn observe(
        &self,
        mask: StereoMask,
        prompts: &[PromptPoint],
        raw: bool,
        range_of: &dyn Fn(u32) -> Option<f64>,
    ) -> (Option<Observation>, MaskOutcome) {
        let low_confidence = mask.confidence < self.config.confidence_threshold;
        let boxes = min_bounding_box(&mask.left).and_then(|l| Ok((l, min_bounding_box(&mask.right)?)));
        let boxes = match boxes {
            Ok((l, r)) if raw => self.rectify_box(&l, &self.rect.left).and_then(|l| Ok((l, self.rectify_box(&r, &self.rect.right)?))).ok(),
            Ok(b) => Some(b),
            Err(_) => None,
        };
        let sensor_id = prompts
            .iter()
            .filter(|p| p.view == View::Left && mask.left.contains_point(p.pixel))
            .map(|p| p.source_sensor_id)
            .min();
        let Some((lb, rb)) = boxes else {
            // Nothing usable in one of the views.
            let outcome = MaskOutcome { mask, centre: None, low_confidence, emc_failed: false, stereo_depth: None };
            return (None, outcome);
        };
        let centre = lb.centre();
        let target = if low_confidence {
            None
        } else {
            extract_key_point_pairs(&lb, &rb)
                .ok()
                .map(|k| match_stereo_masks(0, &k, self.config.eps_px, self.camera.f_u, self.camera.baseline))
        };
        let emc_failed = target.as_ref().is_some_and(|o| !o.emc_passed);
        let obs = Observation {
            label: 0,
            centre,
            target: target.filter(|o| o.valid()),
            low_confidence,
            emc_failed,
            sensor_id,
            range: sensor_id.and_then(range_of),
        };
        let outcome = MaskOutcome { mask, centre: Some(centre), low_confidence, emc_failed, stereo_depth: obs.target.and_then(|o| o.stereo_depth) };
        (Some(obs), outcome)
    }

    fn rectify_box(&self, b: &BoundingBox, remap: &crate::geometry::ViewRemap) -> Result<BoundingBox, GeometryError> {
        let pts = [b.top_left(), b.top_right(), b.bottom_left(), b.bottom_right()]
            .map(|p| remap.raw_to_rectified(p));
        let mut out: Option<BoundingBox> = None;
        for p in pts {
            let p = p?;
            out = Some(match out {
                None => BoundingBox { min: p, max: p },
                Some(o) => BoundingBox {
                    min: PixelPoint::new(o.min.u.min(p.u), o.min.v.min(p.v)),
                    max: PixelPoint::new(o.max.u.max(p.u), o.max.v.max(p.v)),
                },
            });
        }
        Ok(out.expect("four corners"))
    }

    /// Applies this tick's observations (aligned with `self.tracks`) and
    /// emits one estimate per live track. `frame_seen` is false when no
    /// image was available, so unobserved tracks are not counted as missed.
    fn advance_tracks(
        &mut self,
        t: f64,
        observed: Vec<Option<Observation>>,
        range_of: &dyn Fn(u32) -> Option<f64>,
        frame_seen: bool,
        result: &mut TickResult,
    ) -> Result<(), PipelineError> {
        let alpha = self.config.alpha;
        let mode = self.config.mode;
        for (track, obs) in self.tracks.iter_mut().zip(observed) {
            let mut flags = Flags::default();
            let observed_now = obs.is_some();
            match &obs {
                Some(o) => {
                    track.centre = o.centre;
                    track.hits += 1;
                    track.misses = 0;
                    if track.hits >= self.config.confirm_after {
                        track.confirmed = true;
                    }
                    if o.sensor_id.is_some() {
                        track.sensor_id = o.sensor_id;
                    }
                }
                None => {
                    track.hits = 0;
                    if frame_seen && result.provider_error.is_none() {
                        track.misses += 1;
                    }
                }
            }

            // Optical slot.
            let target = obs.as_ref().and_then(|o| o.target);
            let zb_measured = target.and_then(|o| o.stereo_depth);
            let zb = match zb_measured {
                Some(z) => {
                    let _ = track.optical.push(t, z);
                    Some(z)
                }
                None => {
                    flags.extrapolated_segmentation = true;
                    if let Some(o) = &obs {
                        flags.low_confidence = o.low_confidence;
                        flags.emc_failed = o.emc_failed;
                    }
                    track.optical.extrapolate(t).ok()
                }
            };

            // Acoustic slot.
            let zr_measured = match &obs {
                Some(o) => o.range,
                None => track.sensor_id.and_then(range_of),
            };
            let zr = match zr_measured {
                Some(z) => {
                    let _ = track.acoustic.push(t, z);
                    Some(z)
                }
                None => {
                    flags.extrapolated_range = true;
                    track.acoustic.extrapolate(t).ok()
                }
            };

            let zf = match (zb, zr) {
                (Some(b), Some(r)) if b > 0.0 && r > 0.0 => fuse_range(b, r, alpha).ok(),
                _ => None,
            };

            let (mut prior, mut posterior) = (None, None);
            if mode == Mode::Ekf {
                let z = match (target, zr_measured) {
                    (Some(o), Some(dr)) => {
                        let c = o.key_points.centre();
                        Some(Vector4::new(c.left.u, c.left.v, c.d_u(), dr))
                    }
                    _ => None,
                };
                match &track.state {
                    Some(state) => {
                        let (pr, po) = ekf::step(state, &Vector3::zeros(), t, z.as_ref(), &self.ekf)?;
                        prior = Some(pr.x.into());
                        posterior = Some(po.x.into());
                        track.state = Some(po);
                    }
                    None => {
                        if let (Some(z), Some(zf)) = (z, zf) {
                            let s = TrackState::initialize(track.id, t, z[0], z[1], zf, &self.camera, self.p0)?;
                            posterior = Some(s.x.into());
                            track.state = Some(s);
                        }
                    }
                }
            }

            result.estimates.push(TrackEstimate {
                track_id: track.id,
                confirmed: track.confirmed,
                centre: track.centre,
                observed: observed_now,
                sensor_id: obs.as_ref().and_then(|o| o.sensor_id).or(track.sensor_id),
                zb,
                zr,
                zf,
                flags,
                prior,
                posterior,
            });
        }
        let retire = self.config.retire_after;
        self.tracks.retain(|t| t.misses < retire);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_labels() {
        assert_eq!(Flags::default().label(), "ok");
        let f = Flags { extrapolated_range: true, low_confidence: true, ..Default::default() };
        assert_eq!(f.label(), "extrapolated_range|low_confidence");
        assert!(!f.ok());
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig { alpha: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig { eps_px: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!("ekf".parse::<Mode>().unwrap(), Mode::Ekf);
        assert!("kalman".parse::<Mode>().is_err());
    }
}
