use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::acoustic::{RangeGate, UltrasonicSensor, DEFAULT_CONE_DEG, DEFAULT_SIGMA_REL};
use crate::ekf::NoiseConfig;
use crate::fusion::{compute_alpha, DEFAULT_ACOUSTIC_ERROR_PCT, DEFAULT_WINDOW};
use crate::geometry::{CalibrationFile, ImageSize, StereoCalibration};
use crate::pipeline::{Mode, PipelineConfig};
use crate::segmentation::shape::animal_outline;
use crate::segmentation::{IlluminationModel, IlluminationTables, ShapeClass};

use super::SimError;

pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Horizontal and vertical positions of the default transducer grid (m),
/// centred on the middle of the stereo head. The centre slot is empty.
pub const DEFAULT_GRID_X: [f64; 3] = [-0.0605, 0.0295, 0.1195];
pub const DEFAULT_GRID_Y: [f64; 3] = [-0.09, 0.0, 0.09];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema: u32,
    pub name: String,
    pub seed: u64,
    pub lux: f64,
    pub duration_s: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_rate")]
    pub camera_hz: f64,
    #[serde(default = "default_rate")]
    pub acoustic_hz: f64,
    #[serde(default)]
    pub image: Option<ImageSize>,
    #[serde(default)]
    pub calibration: CalibrationSource,
    /// Replaces the shipped segmentation calibration tables.
    #[serde(default)]
    pub illumination: Option<IlluminationTables>,
    #[serde(default)]
    pub sensors: SensorConfig,
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub noise: SceneNoise,
    #[serde(default)]
    pub pipeline: PipelineOverrides,
}

fn default_dt() -> f64 {
    0.1
}

fn default_rate() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CalibrationSource {
    /// `"shipped"` selects the built-in calibration.
    Named(String),
    /// Path relative to the scene file.
    File { path: PathBuf },
    Inline(Box<CalibrationFile>),
}

impl Default for CalibrationSource {
    fn default() -> Self {
        CalibrationSource::Named("shipped".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default = "default_cone")]
    pub cone_angle_deg: f64,
    #[serde(default = "default_sigma_rel")]
    pub sigma_rel: f64,
    #[serde(default)]
    pub gate: RangeGate,
    #[serde(default)]
    pub layout: SensorLayout,
}

fn default_cone() -> f64 {
    DEFAULT_CONE_DEG
}

fn default_sigma_rel() -> f64 {
    DEFAULT_SIGMA_REL
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { cone_angle_deg: DEFAULT_CONE_DEG, sigma_rel: DEFAULT_SIGMA_REL, gate: RangeGate::default(), layout: SensorLayout::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensorLayout {
    /// `"default"`: eight forward-facing sensors around the cameras.
    Named(String),
    Custom(Vec<SensorMount>),
}

impl Default for SensorLayout {
    fn default() -> Self {
        SensorLayout::Named("default".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorMount {
    pub id: u32,
    pub offset: [f64; 3],
    #[serde(default = "default_boresight")]
    pub boresight: [f64; 3],
}

fn default_boresight() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

/// Mounts of the default layout: a 3×3 grid without its centre, ids in
/// row-major order.
pub fn default_layout() -> Vec<SensorMount> {
    let mut out = Vec::with_capacity(8);
    for (r, &y) in DEFAULT_GRID_Y.iter().enumerate() {
        for (c, &x) in DEFAULT_GRID_X.iter().enumerate() {
            if r == 1 && c == 1 {
                continue;
            }
            out.push(SensorMount { id: out.len() as u32, offset: [x, y, 0.0], boresight: default_boresight() });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeSpec {
    Sphere { radius: f64 },
    /// Width, height, depth (m).
    Cuboid { size: [f64; 3] },
    /// Built-in outline scaled to width × height (m).
    Polygon { tag: String, size: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub id: u32,
    pub shape: ShapeSpec,
    #[serde(default = "default_class")]
    pub class: ShapeClass,
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
}

fn default_class() -> ShapeClass {
    ShapeClass::Regular
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneNoise {
    /// Illumination-driven mask degradation in the oracle segmenter.
    #[serde(default = "yes")]
    pub degradation: bool,
    #[serde(default)]
    pub pixel_jitter_px: f64,
    #[serde(default = "default_accel")]
    pub accel_variance: [f64; 3],
    #[serde(default = "default_r")]
    pub r_diag: [f64; 4],
    #[serde(default = "default_p0")]
    pub p0_diag: [f64; 6],
}

fn yes() -> bool {
    true
}

fn default_accel() -> [f64; 3] {
    NoiseConfig::default().accel_variance
}

fn default_r() -> [f64; 4] {
    NoiseConfig::default().r_diag
}

fn default_p0() -> [f64; 6] {
    NoiseConfig::default().p0_diag
}

impl Default for SceneNoise {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self { degradation: true, pixel_jitter_px: 0.0, accel_variance: n.accel_variance, r_diag: n.r_diag, p0_diag: n.p0_diag }
    }
}

impl SceneNoise {
    pub fn filter(&self) -> NoiseConfig {
        NoiseConfig { accel_variance: self.accel_variance, r_diag: self.r_diag, p0_diag: self.p0_diag }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Fixed(f64),
    /// `"from_illumination"`: derived from the calibrated stereo error of the
    /// scene's dominant class and the nominal acoustic error.
    Named(AlphaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaName {
    FromIllumination,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOverrides {
    pub mode: Option<Mode>,
    pub confidence_threshold: Option<f64>,
    pub eps_px: Option<f64>,
    pub alpha: Option<AlphaSetting>,
    pub window: Option<usize>,
    pub association_gate_px: Option<f64>,
    pub retire_after: Option<u32>,
    pub confirm_after: Option<u32>,
}

impl SceneConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        // Syntax errors are reported as parse errors; well-formed JSON that
        // does not fit the schema is a validation error with a field path.
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        let scene: SceneConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            SimError::Validation { path, message: e.into_inner().to_string() }
        })?;
        scene.validate()?;
        Ok(scene)
    }

    /// Reads and validates a scene. A relative calibration path is resolved
    /// against the scene's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let mut scene = Self::from_json(&text)?;
        if let CalibrationSource::File { path: p } = &mut scene.calibration {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        scene.calibration()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |path: &str, message: String| Err(SimError::Validation { path: path.into(), message });
        if self.schema != SCENE_SCHEMA_VERSION {
            return bad("schema", format!("unsupported schema version {}", self.schema));
        }
        if !(self.lux > 0.0 && self.lux.is_finite()) {
            return bad("lux", format!("must be positive, got {}", self.lux));
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return bad("dt_s", format!("must be positive, got {}", self.dt_s));
        }
        if !(self.duration_s >= self.dt_s && self.duration_s.is_finite()) {
            return bad("duration_s", format!("must be at least one tick, got {}", self.duration_s));
        }
        for (field, hz) in [("camera_hz", self.camera_hz), ("acoustic_hz", self.acoustic_hz)] {
            if let Err(m) = period_ticks(hz, self.dt_s) {
                return bad(field, m);
            }
        }
        if let Some(t) = &self.illumination {
            t.validate().map_err(|e| SimError::Validation { path: "illumination".into(), message: e.to_string() })?;
        }
        if !(self.sensors.sigma_rel >= 0.0 && self.sensors.sigma_rel.is_finite()) {
            return bad("sensors.sigma_rel", "must be non-negative".into());
        }
        if self.sensors.gate.validate().is_err() {
            return bad("sensors.gate", "need 0 < r_min < r_max".into());
        }
        if let SensorLayout::Named(n) = &self.sensors.layout {
            if n != "default" {
                return bad("sensors.layout", format!("unknown layout {n:?}"));
            }
        }
        self.sensors().map_err(|e| SimError::Validation { path: "sensors".into(), message: e.to_string() })?;
        if self.targets.is_empty() {
            return bad("targets", "at least one target is required".into());
        }
        let mut ids: Vec<u32> = self.targets.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("targets", "target ids must be unique".into());
        }
        for (i, t) in self.targets.iter().enumerate() {
            let path = format!("targets[{i}]");
            let dims: Vec<f64> = match &t.shape {
                ShapeSpec::Sphere { radius } => vec![*radius],
                ShapeSpec::Cuboid { size } => size.to_vec(),
                ShapeSpec::Polygon { tag, size } => {
                    if animal_outline(tag).is_none() {
                        return bad(&format!("{path}.shape.polygon.tag"), format!("unknown outline {tag:?}"));
                    }
                    size.to_vec()
                }
            };
            if !dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
                return bad(&format!("{path}.shape"), "dimensions must be positive".into());
            }
            if !t.position.iter().chain(&t.velocity).all(|c| c.is_finite()) {
                return bad(&path, "position and velocity must be finite".into());
            }
            if !(t.position[2] > 0.0) {
                return bad(&format!("{path}.position"), "target must start in front of the cameras".into());
            }
            let z_end = t.position[2] + t.velocity[2] * self.duration_s;
            if !(z_end > 0.0) {
                return bad(&format!("{path}.velocity"), "target passes behind the cameras".into());
            }
        }
        self.noise
            .filter()
            .validate()
            .map_err(|e| SimError::Validation { path: "noise".into(), message: e.to_string() })?;
        if !(self.noise.pixel_jitter_px >= 0.0 && self.noise.pixel_jitter_px.is_finite()) {
            return bad("noise.pixel_jitter_px", "must be non-negative".into());
        }
        self.pipeline_config()
            .and_then(|c| c.validate().map_err(|e| SimError::Validation { path: "pipeline".into(), message: e.to_string() }))
    }

    pub fn image_size(&self) -> ImageSize {
        self.image.unwrap_or_default()
    }

    pub fn ticks(&self) -> u64 {
        (self.duration_s / self.dt_s).round() as u64
    }

    pub fn camera_period(&self) -> u64 {
        period_ticks(self.camera_hz, self.dt_s).expect("validated")
    }

    pub fn acoustic_period(&self) -> u64 {
        period_ticks(self.acoustic_hz, self.dt_s).expect("validated")
    }

    pub fn calibration(&self) -> Result<StereoCalibration, SimError> {
        let mut calib = match &self.calibration {
            CalibrationSource::Named(n) if n == "shipped" => StereoCalibration::shipped(),
            CalibrationSource::Named(n) => {
                return Err(SimError::Validation { path: "calibration".into(), message: format!("unknown calibration {n:?}") })
            }
            CalibrationSource::File { path } => StereoCalibration::load(path)
                .map_err(|e| SimError::Validation { path: "calibration.path".into(), message: e.to_string() })?,
            CalibrationSource::Inline(f) => StereoCalibration::from_file(f)
                .map_err(|e| SimError::Validation { path: "calibration".into(), message: e.to_string() })?,
        };
        if let Some(size) = self.image {
            calib.image_size = size;
        }
        Ok(calib)
    }

    pub fn illumination(&self) -> IlluminationModel {
        let tables = self.illumination.clone().unwrap_or_default();
        IlluminationModel::new(self.lux, tables).expect("validated")
    }

    pub fn sensors(&self) -> Result<Vec<UltrasonicSensor>, crate::acoustic::AcousticError> {
        let mounts = match &self.sensors.layout {
            SensorLayout::Named(_) => default_layout(),
            SensorLayout::Custom(m) => m.clone(),
        };
        let cone = self.sensors.cone_angle_deg.to_radians();
        mounts
            .iter()
            .map(|m| {
                let b = Vector3::from(m.boresight);
                let n = b.norm();
                let b = if n > 0.0 { b / n } else { b };
                UltrasonicSensor::new(m.id, Vector3::from(m.offset), b, cone, self.acoustic_hz)
            })
            .collect()
    }

    /// The class most targets belong to; ties go to regular shapes.
    pub fn dominant_class(&self) -> ShapeClass {
        let animals = self.targets.iter().filter(|t| t.class == ShapeClass::SeaAnimal).count();
        if 2 * animals > self.targets.len() {
            ShapeClass::SeaAnimal
        } else {
            ShapeClass::Regular
        }
    }

    /// Fusion weight for this scene. The default derives it from the
    /// calibrated stereo error at the scene's illuminance.
    pub fn alpha(&self) -> f64 {
        match self.pipeline.alpha {
            Some(AlphaSetting::Fixed(a)) => a,
            Some(AlphaSetting::Named(AlphaName::FromIllumination)) | None => {
                let e_b = self.illumination().row(self.dominant_class()).depth_error_pct;
                compute_alpha(e_b, DEFAULT_ACOUSTIC_ERROR_PCT).unwrap_or(0.5)
            }
        }
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, SimError> {
        let o = &self.pipeline;
        let d = PipelineConfig::default();
        Ok(PipelineConfig {
            mode: o.mode.unwrap_or(d.mode),
            confidence_threshold: o.confidence_threshold.unwrap_or(d.confidence_threshold),
            eps_px: o.eps_px.unwrap_or(d.eps_px),
            gate: self.sensors.gate,
            alpha: self.alpha(),
            window: o.window.unwrap_or(DEFAULT_WINDOW),
            association_gate_px: o.association_gate_px.unwrap_or(d.association_gate_px),
            retire_after: o.retire_after.unwrap_or(d.retire_after),
            confirm_after: o.confirm_after.unwrap_or(d.confirm_after),
            noise: self.noise.filter(),
        })
    }

    /// True when no random perturbation is applied anywhere.
    pub fn is_noiseless(&self) -> bool {
        !self.noise.degradation && self.noise.pixel_jitter_px == 0.0 && self.sensors.sigma_rel == 0.0
    }
}

fn period_ticks(hz: f64, dt: f64) -> Result<u64, String> {
    if !(hz > 0.0 && hz.is_finite()) {
        return Err(format!("rate must be positive, got {hz}"));
    }
    let ratio = 1.0 / (hz * dt);
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(format!("period 1/{hz} s is not a whole number of {dt} s ticks"));
    }
    Ok(n as u64)
}

/// Scenes bundled with the crate, by name.
pub const SHIPPED_SCENES: [(&str, &str); 12] = [
    ("scene1", include_str!("../../data/scenes/scene1.json")),
    ("scene2", include_str!("../../data/scenes/scene2.json")),
    ("scene3", include_str!("../../data/scenes/scene3.json")),
    ("scene4", include_str!("../../data/scenes/scene4.json")),
    ("scene5", include_str!("../../data/scenes/scene5.json")),
    ("scene6", include_str!("../../data/scenes/scene6.json")),
    ("scene7", include_str!("../../data/scenes/scene7.json")),
    ("scene8", include_str!("../../data/scenes/scene8.json")),
    ("static_grid", include_str!("../../data/scenes/static_grid.json")),
    ("approach", include_str!("../../data/scenes/approach.json")),
    ("scene4_noiseless", include_str!("../../data/scenes/scene4_noiseless.json")),
    ("static_noiseless", include_str!("../../data/scenes/static_noiseless.json")),
];

pub fn shipped_scene(name: &str) -> Option<SceneConfig> {
    SHIPPED_SCENES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| SceneConfig::from_json(text).expect("shipped scenes are valid"))
}
