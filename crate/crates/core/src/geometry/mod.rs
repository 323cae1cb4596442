//! Camera mathematics: frame transforms, pinhole projection, lens
//! distortion, stereo rectification and the disparity/depth relation.
//!
//! Pixel coordinates follow the usual convention: `u` grows to the right,
//! `v` grows downwards, and the principal point is expressed in pixels.

mod calibration;
mod distortion;
mod rectify;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::{CalibrationFile, CalibrationLoadError, ImageSize, StereoCalibration};
pub use distortion::{
    distort_point, undistort_point, DistortionParams, UNDISTORT_MAX_ITER, UNDISTORT_TOL,
};
pub use rectify::{rectify, Rectification, ViewRemap};

/// Orthonormality tolerance for rotation matrices (`RᵀR = I`).
pub const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point depth {0} is not positive")]
    NonPositiveDepth(f64),
    #[error("disparity {0} px is not positive")]
    NonPositiveDisparity(f64),
    #[error("rotation matrix is not orthonormal (max |RᵀR - I| = {0:e})")]
    NonOrthonormalRotation(f64),
    #[error("undistortion did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A pixel location. Sub-pixel values are kept as real numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Pinhole intrinsics `K = [fx 0 cx; 0 fy cy; 0 0 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("principal point not finite".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Pixel to normalized image coordinates (no distortion handling).
    pub fn normalize(&self, p: PixelPoint) -> (f64, f64) {
        ((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy)
    }

    pub fn denormalize(&self, x: f64, y: f64) -> PixelPoint {
        PixelPoint::new(self.fx * x + self.cx, self.fy * y + self.cy)
    }
}

/// Returns `max |RᵀR - I|` over all entries.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

/// Validates that `m` is a proper rotation within [`ORTHONORMAL_TOL`].
pub fn checked_rotation(m: Matrix3<f64>) -> Result<Rotation3<f64>, GeometryError> {
    let err = orthonormality_error(&m);
    if !err.is_finite() || err > ORTHONORMAL_TOL || m.determinant() <= 0.0 {
        return Err(GeometryError::NonOrthonormalRotation(err));
    }
    Ok(Rotation3::from_matrix_unchecked(m))
}

/// Nearest proper rotation to `m` in the Frobenius sense (polar factor).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * v_t;
    }
    r
}

/// `P_c = R_c P_w + t_c`.
pub fn world_to_camera(
    pw: &Vector3<f64>,
    rotation: &Rotation3<f64>,
    translation: &Vector3<f64>,
) -> Vector3<f64> {
    rotation * pw + translation
}

/// Pinhole projection of a camera-frame point.
pub fn camera_to_pixel(pc: &Vector3<f64>, k: &CameraIntrinsics) -> Result<PixelPoint, GeometryError> {
    if !(pc.z > 0.0) {
        return Err(GeometryError::NonPositiveDepth(pc.z));
    }
    Ok(PixelPoint::new(
        k.fx * pc.x / pc.z + k.cx,
        k.fy * pc.y / pc.z + k.cy,
    ))
}

/// Stereo depth from a rectified horizontal disparity: `Z = f b / d_u`.
pub fn disparity_to_depth(du: f64, f: f64, b: f64) -> Result<f64, GeometryError> {
    if !(du > 0.0) {
        return Err(GeometryError::NonPositiveDisparity(du));
    }
    check_rig(f, b)?;
    Ok(f * b / du)
}

/// Inverse of [`disparity_to_depth`].
pub fn depth_to_disparity(z: f64, f: f64, b: f64) -> Result<f64, GeometryError> {
    if !(z > 0.0) {
        return Err(GeometryError::NonPositiveDepth(z));
    }
    check_rig(f, b)?;
    Ok(f * b / z)
}

fn check_rig(f: f64, b: f64) -> Result<(), GeometryError> {
    if !(f > 0.0 && b > 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "focal length and baseline must be positive (f={f}, b={b})"
        )));
    }
    Ok(())
}

/// Epipolar matching condition: `|v_L - v_R| < eps` (strict).
pub fn epipolar_match(v_left: f64, v_right: f64, eps: f64) -> bool {
    (v_left - v_right).abs() < eps
}
