use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::acoustic::{simulate_ping, PingNoise, RangeMeasurement, UltrasonicSensor};
use crate::geometry::{CameraIntrinsics, PixelPoint, Rectification};
use crate::rng::{stream, CHANNEL_ACOUSTIC};
use crate::segmentation::shape::animal_outline;
use crate::segmentation::{Silhouette, SyntheticFrame, SyntheticTarget};

use super::scene::{SceneConfig, ShapeSpec, TargetSpec};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPose {
    pub id: u32,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

impl TruthPose {
    pub fn state(&self) -> [f64; 6] {
        let (p, v) = (self.position, self.velocity);
        [p[0], p[1], p[2], v[0], v[1], v[2]]
    }
}

/// Everything the pipeline receives on one tick, plus ground truth.
///
/// Pixel data is in rectified coordinates unless `raw` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBundle {
    pub tick: u64,
    pub timestamp: f64,
    #[serde(default)]
    pub raw: bool,
    #[serde(default)]
    pub frame: Option<SyntheticFrame>,
    #[serde(default)]
    pub ranges: Vec<RangeMeasurement>,
    #[serde(default)]
    pub truth: Vec<TruthPose>,
}

/// Constant-velocity ground truth at time `t`.
pub fn propagate(scene: &SceneConfig, t: f64) -> Result<Vec<TruthPose>, SimError> {
    let end = scene.ticks() as f64 * scene.dt_s;
    if !(t >= 0.0 && t <= end.max(scene.duration_s) + 1e-9) {
        return Err(SimError::OutOfWindow { t, duration: scene.duration_s });
    }
    Ok(scene
        .targets
        .iter()
        .map(|s| {
            let p = Vector3::from(s.position) + Vector3::from(s.velocity) * t;
            TruthPose { id: s.id, position: p.into(), velocity: s.velocity }
        })
        .collect())
}

/// Outline of a target in its own fronto-parallel plane, metric `(x, y)`
/// coordinates of the camera frame.
pub fn footprint(spec: &TargetSpec, position: &[f64; 3]) -> Silhouette {
    let (x, y) = (position[0], position[1]);
    match &spec.shape {
        ShapeSpec::Sphere { radius } => Silhouette::Disk { centre: PixelPoint::new(x, y), radius: *radius },
        ShapeSpec::Cuboid { size } => Silhouette::Rect {
            min: PixelPoint::new(x - size[0] / 2.0, y - size[1] / 2.0),
            max: PixelPoint::new(x + size[0] / 2.0, y + size[1] / 2.0),
        },
        ShapeSpec::Polygon { tag, size } => {
            let outline = animal_outline(tag).expect("validated tag");
            Silhouette::Polygon {
                vertices: outline.iter().map(|(a, b)| PixelPoint::new(x + a * size[0], y + b * size[1])).collect(),
            }
        }
    }
}

/// Perspective image of a plane figure at depth `z`, seen by a camera
/// displaced by `x_shift` along the baseline.
pub fn project_footprint(fp: &Silhouette, z: f64, x_shift: f64, k: &CameraIntrinsics) -> Silhouette {
    let px = |p: &PixelPoint| PixelPoint::new(k.fx * (p.u - x_shift) / z + k.cx, k.fy * p.v / z + k.cy);
    match fp {
        Silhouette::Disk { centre, radius } => Silhouette::Disk { centre: px(centre), radius: k.fx * radius / z },
        Silhouette::Rect { min, max } => Silhouette::Rect { min: px(min), max: px(max) },
        Silhouette::Polygon { vertices } => Silhouette::Polygon { vertices: vertices.iter().map(px).collect() },
    }
}

/// Point of a plane figure closest to `(x, y)`; the point itself when inside.
pub fn closest_point(fp: &Silhouette, x: f64, y: f64) -> PixelPoint {
    if fp.contains(x, y) {
        return PixelPoint::new(x, y);
    }
    match fp {
        Silhouette::Disk { centre, radius } => {
            let (dx, dy) = (x - centre.u, y - centre.v);
            let n = (dx * dx + dy * dy).sqrt();
            PixelPoint::new(centre.u + dx / n * radius, centre.v + dy / n * radius)
        }
        Silhouette::Rect { min, max } => PixelPoint::new(x.clamp(min.u, max.u), y.clamp(min.v, max.v)),
        Silhouette::Polygon { vertices } => {
            let mut best = (f64::INFINITY, vertices[0]);
            for i in 0..vertices.len() {
                let (a, b) = (vertices[i], vertices[(i + 1) % vertices.len()]);
                let (ex, ey) = (b.u - a.u, b.v - a.v);
                let l2 = ex * ex + ey * ey;
                let t = if l2 > 0.0 { (((x - a.u) * ex + (y - a.v) * ey) / l2).clamp(0.0, 1.0) } else { 0.0 };
                let q = PixelPoint::new(a.u + t * ex, a.v + t * ey);
                let d = (q.u - x).powi(2) + (q.v - y).powi(2);
                if d < best.0 {
                    best = (d, q);
                }
            }
            best.1
        }
    }
}

/// The echo point a sensor sees on a target: where the boresight meets the
/// target plane, moved to the nearest point of the figure if it misses.
/// `None` when the sensor faces away from the plane.
pub fn echo_point(sensor: &UltrasonicSensor, fp: &Silhouette, z: f64) -> Option<Vector3<f64>> {
    let b = sensor.boresight;
    let m = sensor.mount_offset;
    if !(b.z > 0.0) || !(z > m.z) {
        return None;
    }
    let s = (z - m.z) / b.z;
    let hit = m + b * s;
    let q = closest_point(fp, hit.x, hit.y);
    Some(Vector3::new(q.u, q.v, z))
}

/// Stateless generator of the bundle stream of one scene.
#[derive(Debug, Clone)]
pub struct World {
    pub scene: SceneConfig,
    pub rect: Rectification,
    pub sensors: Vec<UltrasonicSensor>,
}

impl World {
    pub fn new(scene: SceneConfig) -> Result<Self, SimError> {
        let calib = scene.calibration()?;
        let rect = crate::geometry::rectify(&calib).map_err(|e| SimError::Validation {
            path: "calibration".into(),
            message: e.to_string(),
        })?;
        let sensors = scene
            .sensors()
            .map_err(|e| SimError::Validation { path: "sensors".into(), message: e.to_string() })?;
        Ok(Self { scene, rect, sensors })
    }

    pub fn ticks(&self) -> u64 {
        self.scene.ticks()
    }

    pub fn timestamp(&self, tick: u64) -> f64 {
        tick as f64 * self.scene.dt_s
    }

    /// Exact per-view silhouettes of every target in front of the cameras.
    pub fn silhouettes(&self, truth: &[TruthPose]) -> Vec<SyntheticTarget> {
        let k = &self.rect.intrinsics;
        self.scene
            .targets
            .iter()
            .zip(truth)
            .filter(|(_, p)| p.position[2] > 0.0)
            .map(|(spec, pose)| {
                let fp = footprint(spec, &pose.position);
                let z = pose.position[2];
                SyntheticTarget {
                    id: spec.id,
                    class: spec.class,
                    left: project_footprint(&fp, z, 0.0, k),
                    right: project_footprint(&fp, z, self.rect.baseline, k),
                }
            })
            .collect()
    }

    /// One ping per sensor; the nearest echo over all targets wins.
    pub fn pings(&self, tick: u64, truth: &[TruthPose]) -> Vec<RangeMeasurement> {
        let t = self.timestamp(tick);
        let noise = PingNoise { sigma_rel: self.scene.sensors.sigma_rel };
        self.sensors
            .iter()
            .map(|sensor| {
                let echoes: Vec<Vector3<f64>> = self
                    .scene
                    .targets
                    .iter()
                    .zip(truth)
                    .filter_map(|(spec, pose)| echo_point(sensor, &footprint(spec, &pose.position), pose.position[2]))
                    .collect();
                let mut rng = stream(self.scene.seed, tick, CHANNEL_ACOUSTIC + sensor.id as u64);
                simulate_ping(sensor, &echoes, &noise, &self.scene.sensors.gate, t, &mut rng)
            })
            .collect()
    }

    pub fn synthesize(&self, tick: u64) -> Result<FrameBundle, SimError> {
        let t = self.timestamp(tick);
        let truth = propagate(&self.scene, t)?;
        let size = self.rect.image_size;
        let frame = (tick.is_multiple_of(self.scene.camera_period())).then(|| SyntheticFrame {
            frame_id: tick,
            width: size.width,
            height: size.height,
            targets: self.silhouettes(&truth),
        });
        let ranges = if tick.is_multiple_of(self.scene.acoustic_period()) { self.pings(tick, &truth) } else { Vec::new() };
        Ok(FrameBundle { tick, timestamp: t, raw: false, frame, ranges, truth })
    }

    pub fn bundles(&self) -> impl Iterator<Item = Result<FrameBundle, SimError>> + '_ {
        (0..self.ticks()).map(|k| self.synthesize(k))
    }
}

/// Synthesizes the bundle for `tick` of `scene`.
pub fn synthesize_frame(scene: &SceneConfig, tick: u64) -> Result<FrameBundle, SimError> {
    World::new(scene.clone())?.synthesize(tick)
}
