use nalgebra::{Matrix3, Rotation3, Vector3};

use super::{
    camera_to_pixel, distort_point, undistort_point, CameraIntrinsics, DistortionParams,
    GeometryError, PixelPoint, StereoCalibration, UNDISTORT_MAX_ITER, UNDISTORT_TOL,
};

/// Pixel remap between one raw (distorted) view and its rectified image.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRemap {
    pub raw: CameraIntrinsics,
    pub distortion: DistortionParams,
    /// Rotation from the raw camera frame into the rectified frame.
    pub rotation: Rotation3<f64>,
    pub rectified: CameraIntrinsics,
}

impl ViewRemap {
    pub fn raw_to_rectified(&self, p: PixelPoint) -> Result<PixelPoint, GeometryError> {
        let nd = self.raw.normalize(p);
        let (x, y) = undistort_point(nd, &self.distortion, UNDISTORT_TOL, UNDISTORT_MAX_ITER)?;
        let ray = self.rotation * Vector3::new(x, y, 1.0);
        camera_to_pixel(&ray, &self.rectified)
    }

    pub fn rectified_to_raw(&self, p: PixelPoint) -> Result<PixelPoint, GeometryError> {
        let (x, y) = self.rectified.normalize(p);
        let ray = self.rotation.inverse() * Vector3::new(x, y, 1.0);
        if !(ray.z > 0.0) {
            return Err(GeometryError::NonPositiveDepth(ray.z));
        }
        let (xd, yd) = distort_point((ray.x / ray.z, ray.y / ray.z), &self.distortion);
        Ok(self.raw.denormalize(xd, yd))
    }
}

/// Row-aligned stereo geometry derived from a raw calibration.
///
/// Both rectified views share `intrinsics` (with `fx == fy`), and the right
/// optical centre sits at `[baseline, 0, 0]` in the rectified left frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectification {
    pub intrinsics: CameraIntrinsics,
    pub baseline: f64,
    pub left: ViewRemap,
    pub right: ViewRemap,
    pub image_size: super::ImageSize,
}

impl Rectification {
    pub fn focal(&self) -> f64 {
        self.intrinsics.fx
    }

    /// Rectified, distortion-free calibration with `R = I`, `t = [-b, 0, 0]`.
    pub fn rectified_calibration(&self) -> StereoCalibration {
        StereoCalibration::ideal(self.intrinsics, self.baseline, self.image_size)
            .expect("rectified calibration is valid by construction")
    }

    /// Projects a point given in the raw left camera frame into both
    /// rectified images.
    pub fn project_left_frame(&self, p: &Vector3<f64>) -> Result<(PixelPoint, PixelPoint), GeometryError> {
        let pl = self.left.rotation * p;
        self.project_rectified(&pl)
    }

    /// Projects a point given in the rectified left frame.
    pub fn project_rectified(&self, p: &Vector3<f64>) -> Result<(PixelPoint, PixelPoint), GeometryError> {
        let l = camera_to_pixel(p, &self.intrinsics)?;
        let r = camera_to_pixel(&(p - Vector3::new(self.baseline, 0.0, 0.0)), &self.intrinsics)?;
        Ok((l, r))
    }
}

/// Computes row-aligning rotations for both views.
///
/// The new x axis points along the baseline (left to right optical centre),
/// the new z axis is as close as possible to the mean of the two optical
/// axes. The shared rectified intrinsics reuse the left view's `fx` as the
/// focal length and the left principal point.
pub fn rectify(calib: &StereoCalibration) -> Result<Rectification, GeometryError> {
    let r = calib.rotation;
    let centre_right = -(r.inverse() * calib.translation);
    let b = centre_right.norm();
    if !(b > 0.0) || !b.is_finite() {
        return Err(GeometryError::DegenerateCalibration("zero baseline".into()));
    }
    let e1 = centre_right / b;
    let z_mean = Vector3::z() + r.inverse() * Vector3::z();
    let e2 = z_mean.cross(&e1);
    if e2.norm() < 1e-12 {
        return Err(GeometryError::DegenerateCalibration(
            "baseline is parallel to the optical axes".into(),
        ));
    }
    let e2 = e2.normalize();
    let e3 = e1.cross(&e2);
    let r_left = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]);
    let r_left = Rotation3::from_matrix_unchecked(r_left);
    let r_right = r_left * r.inverse();

    let f = calib.left.fx;
    let intrinsics = CameraIntrinsics::new(f, f, calib.left.cx, calib.left.cy)?;
    Ok(Rectification {
        intrinsics,
        baseline: b,
        left: ViewRemap {
            raw: calib.left,
            distortion: calib.left_dist,
            rotation: r_left,
            rectified: intrinsics,
        },
        right: ViewRemap {
            raw: calib.right,
            distortion: calib.right_dist,
            rotation: r_right,
            rectified: intrinsics,
        },
        image_size: calib.image_size,
    })
}
