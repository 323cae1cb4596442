use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::acoustic::UltrasonicSensor;
use crate::geometry::{camera_to_pixel, CameraIntrinsics, ImageSize, PixelPoint};

use super::SegmentationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum View {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptPoint {
    pub view: View,
    pub pixel: PixelPoint,
    pub source_sensor_id: u32,
}

/// Projects an acoustic range into the left image.
///
/// The camera-frame point is `[X_s, Y_s, Z_c]` where `X_s, Y_s` are the
/// sensor's mount offsets.
pub fn range_to_prompt(
    sensor: &UltrasonicSensor,
    zc: f64,
    k: &CameraIntrinsics,
    image: ImageSize,
) -> Result<PromptPoint, SegmentationError> {
    project(sensor, zc, 0.0, k, image, View::Left)
}

/// Left and right prompts for the same range. The right view is the left
/// view translated by the baseline along `x` (rectified geometry).
pub fn range_to_prompt_pair(
    sensor: &UltrasonicSensor,
    zc: f64,
    k: &CameraIntrinsics,
    baseline: f64,
    image: ImageSize,
) -> Result<[PromptPoint; 2], SegmentationError> {
    Ok([
        project(sensor, zc, 0.0, k, image, View::Left)?,
        project(sensor, zc, baseline, k, image, View::Right)?,
    ])
}

fn project(
    sensor: &UltrasonicSensor,
    zc: f64,
    x_shift: f64,
    k: &CameraIntrinsics,
    image: ImageSize,
    view: View,
) -> Result<PromptPoint, SegmentationError> {
    let pc = Vector3::new(sensor.mount_offset.x - x_shift, sensor.mount_offset.y, zc);
    let pixel = camera_to_pixel(&pc, k).map_err(|_| SegmentationError::OutOfFrame(PixelPoint::new(f64::NAN, f64::NAN)))?;
    if !image.contains(pixel.u, pixel.v) {
        return Err(SegmentationError::OutOfFrame(pixel));
    }
    Ok(PromptPoint { view, pixel, source_sensor_id: sensor.id })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(1241.0, 1241.0, 661.0, 506.0).unwrap()
    }

    fn sensor(x: f64, y: f64) -> UltrasonicSensor {
        UltrasonicSensor::new(3, Vector3::new(x, y, 0.0), Vector3::z(), 4f64.to_radians(), 10.0).unwrap()
    }

    #[test]
    fn offset_sensor() {
        let p = range_to_prompt(&sensor(0.1, 0.0), 0.6, &k(), ImageSize::default()).unwrap();
        assert!((p.pixel.u - (1241.0 * 0.1 / 0.6 + 661.0)).abs() < 1e-12);
        assert!((p.pixel.u - 867.83).abs() < 0.01);
        assert_eq!(p.pixel.v, 506.0);
        assert_eq!(p.source_sensor_id, 3);
        assert_eq!(p.view, View::Left);
    }

    #[test]
    fn axis_sensor_hits_principal_point() {
        for z in [0.2, 0.77, 1.5] {
            let p = range_to_prompt(&sensor(0.0, 0.0), z, &k(), ImageSize::default()).unwrap();
            assert_eq!(p.pixel, PixelPoint::new(661.0, 506.0));
        }
    }

    #[test]
    fn out_of_frame() {
        let e = range_to_prompt(&sensor(1.0, 0.0), 0.3, &k(), ImageSize::default()).unwrap_err();
        match e {
            SegmentationError::OutOfFrame(p) => assert!((p.u - 4797.67).abs() < 0.01),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn right_prompt_is_shifted_by_disparity() {
        let [l, r] = range_to_prompt_pair(&sensor(0.03, 0.0), 0.5, &k(), 0.059, ImageSize::default()).unwrap();
        assert!((l.pixel.u - r.pixel.u - 1241.0 * 0.059 / 0.5).abs() < 1e-9);
        assert_eq!(l.pixel.v, r.pixel.v);
        assert_eq!(r.view, View::Right);
    }

    #[test]
    fn view_wire_names() {
        assert_eq!(serde_json::to_string(&View::Left).unwrap(), "\"L\"");
        assert_eq!(serde_json::from_str::<View>("\"R\"").unwrap(), View::Right);
    }
}
