use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Default stopping tolerance for [`undistort_point`].
pub const UNDISTORT_TOL: f64 = 1e-10;
/// Default iteration cap for [`undistort_point`].
pub const UNDISTORT_MAX_ITER: usize = 20;

/// Five-coefficient radial-tangential lens model.
///
/// Serialized as the array `[k1, k2, k3, p1, p2]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct DistortionParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

impl From<[f64; 5]> for DistortionParams {
    fn from(a: [f64; 5]) -> Self {
        Self { k1: a[0], k2: a[1], k3: a[2], p1: a[3], p2: a[4] }
    }
}

impl From<DistortionParams> for [f64; 5] {
    fn from(d: DistortionParams) -> Self {
        [d.k1, d.k2, d.k3, d.p1, d.p2]
    }
}

impl DistortionParams {
    pub fn is_zero(&self) -> bool {
        <[f64; 5]>::from(*self).iter().all(|c| *c == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        <[f64; 5]>::from(*self).iter().all(|c| c.is_finite())
    }
}

/// Applies the radial-tangential model to a normalized image point.
pub fn distort_point(p: (f64, f64), d: &DistortionParams) -> (f64, f64) {
    let (x, y) = p;
    let r2 = x * x + y * y;
    let radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
    let xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
    let yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
    (xd, yd)
}

/// Inverts [`distort_point`] by fixed-point iteration.
///
/// Stops once the forward residual `|distort(x) - p|` drops below `tol`.
pub fn undistort_point(
    p: (f64, f64),
    d: &DistortionParams,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64), GeometryError> {
    if d.is_zero() {
        return Ok(p);
    }
    let (xd, yd) = p;
    let (mut x, mut y) = p;
    for _ in 0..max_iter {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
        let dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
        let dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
        x = (xd - dx) / radial;
        y = (yd - dy) / radial;
        if !(x.is_finite() && y.is_finite()) {
            break;
        }
        let (fx, fy) = distort_point((x, y), d);
        if (fx - xd).hypot(fy - yd) < tol {
            return Ok((x, y));
        }
    }
    Err(GeometryError::NoConvergence(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Left-view coefficients from the shipped calibration.
    pub(crate) fn table_left() -> DistortionParams {
        DistortionParams { k1: 0.292, k2: 0.998, k3: -1.74, p1: 3.30e-3, p2: -2.64e-3 }
    }

    #[test]
    fn zero_distortion_is_identity() {
        let d = DistortionParams::default();
        assert_eq!(distort_point((0.3, -0.2), &d), (0.3, -0.2));
        assert_eq!(undistort_point((0.3, -0.2), &d, UNDISTORT_TOL, UNDISTORT_MAX_ITER).unwrap(), (0.3, -0.2));
    }

    #[test]
    fn center_is_fixed() {
        assert_eq!(distort_point((0.0, 0.0), &table_left()), (0.0, 0.0));
    }

    #[test]
    fn k1_only() {
        let d = DistortionParams { k1: 0.1, ..Default::default() };
        let (x, y) = distort_point((0.1, 0.0), &d);
        assert!((x - 0.1001).abs() < 1e-15);
        assert_eq!(y, 0.0);
    }

    #[test]
    fn roundtrip_on_grid() {
        let d = table_left();
        let mut worst: f64 = 0.0;
        for i in 0..=40 {
            for j in 0..=40 {
                let x = -0.5 + i as f64 * 0.025;
                let y = -0.5 + j as f64 * 0.025;
                if x.hypot(y) > 0.5 {
                    continue;
                }
                let pd = distort_point((x, y), &d);
                let (ux, uy) = undistort_point(pd, &d, UNDISTORT_TOL, UNDISTORT_MAX_ITER).unwrap();
                worst = worst.max((ux - x).hypot(uy - y));
            }
        }
        assert!(worst < 1e-9, "worst roundtrip error {worst:e}");
    }

    #[test]
    fn pathological_does_not_converge() {
        // g(x) = 1 / (1 + 10 x²) has |g'| > 1 at its fixed point.
        let d = DistortionParams { k1: 10.0, ..Default::default() };
        assert!(matches!(
            undistort_point((1.0, 0.0), &d, UNDISTORT_TOL, UNDISTORT_MAX_ITER),
            Err(GeometryError::NoConvergence(20))
        ));
    }

    #[test]
    fn serde_array_layout() {
        let d = table_left();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, "[0.292,0.998,-1.74,0.0033,-0.00264]");
        let back: DistortionParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }
}
