use serde::{Deserialize, Serialize};

use crate::geometry::{disparity_to_depth, epipolar_match, PixelPoint};

use super::{BoundingBox, SegmentationError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyPointPair {
    pub left: PixelPoint,
    pub right: PixelPoint,
}

impl KeyPointPair {
    /// Horizontal disparity `u_L - u_R`.
    pub fn d_u(&self) -> f64 {
        self.left.u - self.right.u
    }

    /// Vertical disparity `|v_L - v_R|`.
    pub fn d_v(&self) -> f64 {
        (self.left.v - self.right.v).abs()
    }
}

/// Centre pair followed by the TL, TR, BL, BR corner pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyPointPairs {
    pub pairs: [KeyPointPair; 5],
}

impl KeyPointPairs {
    pub fn centre(&self) -> &KeyPointPair {
        &self.pairs[0]
    }

    pub fn corners(&self) -> &[KeyPointPair] {
        &self.pairs[1..]
    }
}

pub fn extract_key_point_pairs(left: &BoundingBox, right: &BoundingBox) -> Result<KeyPointPairs, SegmentationError> {
    left.validate()?;
    right.validate()?;
    let pair = |f: fn(&BoundingBox) -> PixelPoint| KeyPointPair { left: f(left), right: f(right) };
    Ok(KeyPointPairs {
        pairs: [
            pair(BoundingBox::centre),
            pair(BoundingBox::top_left),
            pair(BoundingBox::top_right),
            pair(BoundingBox::bottom_left),
            pair(BoundingBox::bottom_right),
        ],
    })
}

/// Stereo-matched target. `stereo_depth` is set only when every pair passes
/// the epipolar check and yields a positive disparity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetObservation {
    pub target_id: u32,
    pub key_points: KeyPointPairs,
    pub stereo_depth: Option<f64>,
    pub emc_passed: bool,
}

impl TargetObservation {
    pub fn valid(&self) -> bool {
        self.stereo_depth.is_some()
    }
}

/// Averages the five per-pair depths when all pairs satisfy the epipolar
/// matching condition.
pub fn match_stereo_masks(target_id: u32, pairs: &KeyPointPairs, eps: f64, f: f64, b: f64) -> TargetObservation {
    let emc_passed = pairs.pairs.iter().all(|p| epipolar_match(p.left.v, p.right.v, eps));
    let stereo_depth = if emc_passed {
        pairs
            .pairs
            .iter()
            .map(|p| disparity_to_depth(p.d_u(), f, b))
            .sum::<Result<f64, _>>()
            .ok()
            .map(|s| s / 5.0)
    } else {
        None
    };
    TargetObservation { target_id, key_points: *pairs, stereo_depth, emc_passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(u0: f64, v0: f64, u1: f64, v1: f64) -> BoundingBox {
        BoundingBox::new(PixelPoint::new(u0, v0), PixelPoint::new(u1, v1)).unwrap()
    }

    fn pairs_with(disparities: [f64; 5], dv: [f64; 5]) -> KeyPointPairs {
        let mut pairs = [KeyPointPair { left: PixelPoint::new(0.0, 0.0), right: PixelPoint::new(0.0, 0.0) }; 5];
        for i in 0..5 {
            pairs[i].left = PixelPoint::new(500.0, 300.0);
            pairs[i].right = PixelPoint::new(500.0 - disparities[i], 300.0 + dv[i]);
        }
        KeyPointPairs { pairs }
    }

    #[test]
    fn corner_arithmetic() {
        let k = extract_key_point_pairs(&bx(100.0, 100.0, 200.0, 200.0), &bx(90.0, 100.0, 190.0, 200.0)).unwrap();
        for p in &k.pairs {
            assert_eq!(p.d_v(), 0.0);
            assert_eq!(p.d_u(), 10.0);
        }
        assert_eq!(k.centre().left, PixelPoint::new(150.0, 150.0));
        assert_eq!(k.pairs[2].left, PixelPoint::new(200.0, 100.0));
        assert_eq!(k.pairs[3].left, PixelPoint::new(100.0, 200.0));

        let same = extract_key_point_pairs(&bx(1.0, 2.0, 3.0, 4.0), &bx(1.0, 2.0, 3.0, 4.0)).unwrap();
        assert!(same.pairs.iter().all(|p| p.d_u() == 0.0 && p.d_v() == 0.0));

        let down = extract_key_point_pairs(&bx(100.0, 100.0, 200.0, 200.0), &bx(100.0, 105.0, 200.0, 205.0)).unwrap();
        assert!(down.pairs.iter().all(|p| p.d_v() == 5.0));
    }

    #[test]
    fn degenerate_box() {
        let bad = BoundingBox { min: PixelPoint::new(5.0, 5.0), max: PixelPoint::new(4.0, 9.0) };
        let ok = bx(0.0, 0.0, 1.0, 1.0);
        assert_eq!(extract_key_point_pairs(&bad, &ok), Err(SegmentationError::DegenerateBox));
    }

    #[test]
    fn averaged_depth() {
        let o = match_stereo_masks(0, &pairs_with([100.0, 101.0, 99.0, 100.0, 100.0], [0.0; 5]), 3.0, 1000.0, 0.06);
        assert!((o.stereo_depth.unwrap() - 0.600024).abs() < 1e-6);
        let o = match_stereo_masks(0, &pairs_with([100.0; 5], [0.0; 5]), 3.0, 1000.0, 0.06);
        assert_eq!(o.stereo_depth, Some(0.6));
    }

    #[test]
    fn single_emc_failure_invalidates() {
        let o = match_stereo_masks(0, &pairs_with([100.0; 5], [0.0, 0.0, 5.0, 0.0, 0.0]), 3.0, 1000.0, 0.06);
        assert!(!o.valid());
        assert!(!o.emc_passed);
    }

    #[test]
    fn non_positive_disparity_invalidates() {
        let o = match_stereo_masks(0, &pairs_with([100.0, 0.0, 100.0, 100.0, 100.0], [0.0; 5]), 3.0, 1000.0, 0.06);
        assert!(o.emc_passed);
        assert!(!o.valid());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn valid_implies_all_pairs_within_eps(
                shift in -6.0f64..6.0, d in 20.0f64..200.0, eps in 0.5f64..5.0,
                u0 in 0.0f64..1000.0, v0 in 0.0f64..800.0, w in 1.0f64..200.0, h in 1.0f64..200.0,
            ) {
                let l = bx(u0, v0, u0 + w, v0 + h);
                let r = bx(u0 - d, v0 + shift, u0 - d + w, v0 + shift + h);
                let k = extract_key_point_pairs(&l, &r).unwrap();
                let o = match_stereo_masks(0, &k, eps, 1000.0, 0.06);
                if o.valid() {
                    prop_assert!(k.pairs.iter().all(|p| p.d_v() < eps));
                }
            }
        }
    }
}
