//! Target detection: prompt projection, segmentation providers, mask
//! post-processing into key-point pairs and epipolar stereo matching.

mod bridge;
mod illumination;
mod keypoints;
mod mask;
mod oracle;
mod prompt;
pub mod shape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelPoint;

pub use bridge::{
    read_frame, write_frame, BridgeClient, BridgeEndpoint, WirePrompt, WireRequest, WireResponse,
    WireSynthetic, WireTarget, MAX_FRAME_BYTES,
};
pub use illumination::{ClassCalibration, Curve, IlluminationModel, IlluminationRow, IlluminationTables};
pub use keypoints::{extract_key_point_pairs, match_stereo_masks, KeyPointPair, KeyPointPairs, TargetObservation};
pub use mask::{decode_rle, encode_rle, iou, min_bounding_box, BoundingBox, Mask, MaskRegion, RasterRoi};
pub use oracle::{solve_scale_for_iou, OracleConfig, OracleSegmenter};
pub use prompt::{range_to_prompt, range_to_prompt_pair, PromptPoint, View};
pub use shape::Silhouette;

/// Default mask-confidence threshold `c_s_th`.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;
/// Default epipolar tolerance `ε` in pixels.
pub const DEFAULT_EPS_PX: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("degenerate bounding box")]
    DegenerateBox,
    #[error("mask dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("prompt ({}, {}) falls outside the image", .0.u, .0.v)]
    OutOfFrame(PixelPoint),
    #[error("segmentation provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),
    #[error("unknown shape class {0:?}")]
    UnknownShapeClass(String),
    #[error("invalid illumination model: {0}")]
    InvalidIllumination(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    Regular,
    SeaAnimal,
}

impl std::str::FromStr for ShapeClass {
    type Err = SegmentationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(Self::Regular),
            "sea_animal" => Ok(Self::SeaAnimal),
            other => Err(SegmentationError::UnknownShapeClass(other.to_string())),
        }
    }
}

/// Exact rectified-image silhouettes of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTarget {
    pub id: u32,
    pub class: ShapeClass,
    pub left: Silhouette,
    pub right: Silhouette,
}

/// A stereo frame described by its true silhouettes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFrame {
    pub frame_id: u64,
    pub width: u32,
    pub height: u32,
    pub targets: Vec<SyntheticTarget>,
}

/// One segmented target in both views.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoMask {
    pub left: Mask,
    pub right: Mask,
    pub confidence: f64,
}

/// A promptable segmenter. An empty prompt list asks for every target.
pub trait SegmentationProvider: Send {
    fn segment(&mut self, frame: &SyntheticFrame, prompts: &[PromptPoint]) -> Result<Vec<StereoMask>, SegmentationError>;
}

impl<P: SegmentationProvider + ?Sized> SegmentationProvider for Box<P> {
    fn segment(&mut self, frame: &SyntheticFrame, prompts: &[PromptPoint]) -> Result<Vec<StereoMask>, SegmentationError> {
        (**self).segment(frame, prompts)
    }
}
