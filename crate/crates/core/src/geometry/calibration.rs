use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    checked_rotation, nearest_rotation, orthonormality_error, CameraIntrinsics, DistortionParams,
    GeometryError,
};

/// Rotations read from a file may carry rounded entries; anything this close
/// to orthonormal is projected onto the nearest rotation, anything further
/// is rejected.
pub const ROTATION_PROJECTION_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl Default for ImageSize {
    fn default() -> Self {
        Self { width: 1280, height: 960 }
    }
}

impl ImageSize {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// On-disk calibration layout. Translation is stored in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub left: CameraIntrinsics,
    pub right: CameraIntrinsics,
    pub dist_left: DistortionParams,
    pub dist_right: DistortionParams,
    pub rotation: [[f64; 3]; 3],
    pub translation_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[u32; 2]>,
}

/// Intrinsics, distortion and relative pose of a stereo pair.
///
/// `rotation`/`translation` map left-camera coordinates into the right
/// camera: `P_R = R P_L + t` (metres).
#[derive(Debug, Clone, PartialEq)]
pub struct StereoCalibration {
    pub left: CameraIntrinsics,
    pub right: CameraIntrinsics,
    pub left_dist: DistortionParams,
    pub right_dist: DistortionParams,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    pub image_size: ImageSize,
}

impl StereoCalibration {
    pub fn new(
        left: CameraIntrinsics,
        right: CameraIntrinsics,
        left_dist: DistortionParams,
        right_dist: DistortionParams,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_size: ImageSize,
    ) -> Result<Self, GeometryError> {
        left.validate()?;
        right.validate()?;
        for (name, k) in [("left", &left), ("right", &right)] {
            if !image_size.contains(k.cx, k.cy) {
                return Err(GeometryError::InvalidIntrinsics(format!(
                    "{name} principal point ({}, {}) outside {}x{} image",
                    k.cx, k.cy, image_size.width, image_size.height
                )));
            }
        }
        if !(left_dist.is_finite() && right_dist.is_finite()) {
            return Err(GeometryError::InvalidParameter("distortion coefficients must be finite".into()));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(GeometryError::InvalidParameter("translation must be finite".into()));
        }
        let rotation = checked_rotation(rotation)?;
        Ok(Self { left, right, left_dist, right_dist, rotation, translation, image_size })
    }

    /// Ideal rig: identical distortion-free views, `t = [-b, 0, 0]`.
    pub fn ideal(k: CameraIntrinsics, baseline: f64, image_size: ImageSize) -> Result<Self, GeometryError> {
        Self::new(
            k,
            k,
            DistortionParams::default(),
            DistortionParams::default(),
            Matrix3::identity(),
            Vector3::new(-baseline, 0.0, 0.0),
            image_size,
        )
    }

    /// Stereo baseline in metres (optical-centre separation).
    pub fn baseline(&self) -> f64 {
        self.translation.norm()
    }

    pub fn from_file(file: &CalibrationFile) -> Result<Self, GeometryError> {
        let r = file.rotation;
        let m = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        let err = orthonormality_error(&m);
        if !err.is_finite() || err > ROTATION_PROJECTION_TOL {
            return Err(GeometryError::NonOrthonormalRotation(err));
        }
        let rotation = if err > super::ORTHONORMAL_TOL { nearest_rotation(&m) } else { m };
        let t = Vector3::from(file.translation_mm) / 1000.0;
        let image_size = file
            .image_size
            .map(|[width, height]| ImageSize { width, height })
            .unwrap_or_default();
        Self::new(file.left, file.right, file.dist_left, file.dist_right, rotation, t, image_size)
    }

    pub fn to_file(&self) -> CalibrationFile {
        let m = self.rotation.matrix();
        CalibrationFile {
            left: self.left,
            right: self.right,
            dist_left: self.left_dist,
            dist_right: self.right_dist,
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation_mm: (self.translation * 1000.0).into(),
            image_size: Some([self.image_size.width, self.image_size.height]),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationLoadError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let file: CalibrationFile = serde_json::from_str(&text)?;
        Ok(Self::from_file(&file)?)
    }

    /// The calibration shipped with the crate (`data/calibration.json`).
    pub fn shipped() -> Self {
        let file: CalibrationFile =
            serde_json::from_str(SHIPPED_CALIBRATION).expect("shipped calibration parses");
        Self::from_file(&file).expect("shipped calibration is valid")
    }
}

pub(crate) const SHIPPED_CALIBRATION: &str = include_str!("../../data/calibration.json");

#[derive(Debug, thiserror::Error)]
pub enum CalibrationLoadError {
    #[error("reading calibration: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing calibration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] GeometryError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_matches_tables() {
        let file: CalibrationFile = serde_json::from_str(SHIPPED_CALIBRATION).unwrap();
        assert_eq!(file.left.fx, 1241.0);
        assert_eq!(file.left.fy, 1187.0);
        assert_eq!(file.right.cx, 693.0);
        assert_eq!(<[f64; 5]>::from(file.dist_left), [0.292, 0.998, -1.74, 3.30e-3, -2.64e-3]);
        assert_eq!(file.translation_mm, [-59.02, 0.17, -0.43]);
        assert_eq!(file.rotation[2][0], 9.36e-3);
    }

    #[test]
    fn shipped_loads_in_metres_with_orthonormal_rotation() {
        let c = StereoCalibration::shipped();
        assert!((c.translation.x + 0.05902).abs() < 1e-12);
        assert!((c.baseline() - 0.0590218).abs() < 1e-6);
        assert!(orthonormality_error(c.rotation.matrix()) < 1e-12);
    }

    #[test]
    fn rejects_far_from_rotation() {
        let mut file: CalibrationFile = serde_json::from_str(SHIPPED_CALIBRATION).unwrap();
        file.rotation[0][0] = 1.5;
        assert!(matches!(
            StereoCalibration::from_file(&file),
            Err(GeometryError::NonOrthonormalRotation(_))
        ));
    }

    #[test]
    fn rejects_principal_point_outside_image() {
        let k = CameraIntrinsics::new(1000.0, 1000.0, 2000.0, 480.0).unwrap();
        assert!(StereoCalibration::ideal(k, 0.06, ImageSize::default()).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let c = StereoCalibration::shipped();
        let back = StereoCalibration::from_file(&c.to_file()).unwrap();
        assert!((back.translation - c.translation).norm() < 1e-15);
        assert!((back.rotation.matrix() - c.rotation.matrix()).abs().max() < 1e-15);
    }
}
