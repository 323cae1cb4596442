//! Seeded world model: scene files, constant-velocity targets, synthetic
//! stereo silhouettes and ultrasonic pings, and the closed-loop run.

mod run;
mod scene;
mod world;

use thiserror::Error;

pub use run::{oracle_for, replay, run, run_with, RunOptions, SegmentationRecord, Trace, TraceRow, ATTRIBUTION_RADIUS_PX};
pub use scene::{
    default_layout, shipped_scene, AlphaName, AlphaSetting, CalibrationSource, PipelineOverrides, SceneConfig,
    SceneNoise, SensorConfig, SensorLayout, SensorMount, ShapeSpec, TargetSpec, SCENE_SCHEMA_VERSION, SHIPPED_SCENES,
};
pub use world::{
    closest_point, echo_point, footprint, project_footprint, propagate, synthesize_frame, FrameBundle, TruthPose, World,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scene at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("time {t} s outside the scene window [0, {duration}]")]
    OutOfWindow { t: f64, duration: f64 },
    #[error("tick {tick}: {message}")]
    Runtime { tick: u64, message: String },
}
