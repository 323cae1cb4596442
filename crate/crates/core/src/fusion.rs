//! One-dimensional range fusion of stereo and acoustic depth.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean acoustic percentage error used when deriving α.
pub const DEFAULT_ACOUSTIC_ERROR_PCT: f64 = 1.75;
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("ground truth {0} is not positive")]
    NonPositiveGroundTruth(f64),
    #[error("range {0} is not positive")]
    NonPositiveRange(f64),
    #[error("error grid is empty")]
    EmptyGrid,
    #[error("both mean errors are zero")]
    BothErrorsZero,
    #[error("mean error {0} is negative or not finite")]
    InvalidError(f64),
    #[error("history is empty")]
    EmptyHistory,
    #[error("timestamp {t} does not follow {last}")]
    NonMonotoneTimestamp { t: f64, last: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha: f64,
    pub e_b_bar: Option<f64>,
    pub e_r_bar: Option<f64>,
}

impl FusionWeights {
    pub fn fixed(alpha: f64) -> Result<Self, FusionError> {
        check_alpha(alpha)?;
        Ok(Self { alpha, e_b_bar: None, e_r_bar: None })
    }

    pub fn from_errors(e_b_bar: f64, e_r_bar: f64) -> Result<Self, FusionError> {
        Ok(Self { alpha: compute_alpha(e_b_bar, e_r_bar)?, e_b_bar: Some(e_b_bar), e_r_bar: Some(e_r_bar) })
    }
}

fn check_alpha(alpha: f64) -> Result<(), FusionError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FusionError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// `Z_f = α Z_b + (1 - α) Z_r`.
pub fn fuse_range(zb: f64, zr: f64, alpha: f64) -> Result<f64, FusionError> {
    check_alpha(alpha)?;
    for z in [zb, zr] {
        if !(z > 0.0) || !z.is_finite() {
            return Err(FusionError::NonPositiveRange(z));
        }
    }
    let z = alpha * zb + (1.0 - alpha) * zr;
    Ok(z.clamp(zb.min(zr), zb.max(zr)))
}

/// `|Z_m - Z_gt| / Z_gt · 100`.
pub fn percentage_error(zm: f64, zgt: f64) -> Result<f64, FusionError> {
    if !(zgt > 0.0) {
        return Err(FusionError::NonPositiveGroundTruth(zgt));
    }
    Ok((zm - zgt).abs() / zgt * 100.0)
}

/// Mean over an `M × N` grid (frames × targets); rows may be ragged.
pub fn mean_camera_error(grid: &[Vec<f64>]) -> Result<f64, FusionError> {
    let n: usize = grid.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(FusionError::EmptyGrid);
    }
    Ok(grid.iter().flatten().sum::<f64>() / n as f64)
}

/// `α = e_r / (e_b + e_r)`.
///
/// Evaluated so that `compute_alpha(a, b) + compute_alpha(b, a) == 1`
/// holds exactly in floating point.
pub fn compute_alpha(e_b_bar: f64, e_r_bar: f64) -> Result<f64, FusionError> {
    for e in [e_b_bar, e_r_bar] {
        if !(e >= 0.0) || !e.is_finite() {
            return Err(FusionError::InvalidError(e));
        }
    }
    let sum = e_b_bar + e_r_bar;
    if sum == 0.0 {
        return Err(FusionError::BothErrorsZero);
    }
    Ok(if e_r_bar <= e_b_bar { e_r_bar / sum } else { 1.0 - e_b_bar / sum })
}

/// Sliding window of `(timestamp, value)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeHistory {
    capacity: usize,
    samples: VecDeque<(f64, f64)>,
}

impl RangeHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        Self { capacity, samples: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<(), FusionError> {
        if let Some(&(last, _)) = self.samples.back() {
            if !(t > last) {
                return Err(FusionError::NonMonotoneTimestamp { t, last });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        self.samples.back().copied()
    }

    pub fn samples(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.samples.iter()
    }

    /// Least-squares line over the window evaluated at `t`; holds the last
    /// value when only one sample is stored.
    pub fn extrapolate(&self, t: f64) -> Result<f64, FusionError> {
        let n = self.samples.len();
        match n {
            0 => Err(FusionError::EmptyHistory),
            1 => Ok(self.samples[0].1),
            _ => {
                let nf = n as f64;
                let tm = self.samples.iter().map(|s| s.0).sum::<f64>() / nf;
                let zm = self.samples.iter().map(|s| s.1).sum::<f64>() / nf;
                let (mut sxy, mut sxx) = (0.0, 0.0);
                for &(ti, zi) in &self.samples {
                    sxy += (ti - tm) * (zi - zm);
                    sxx += (ti - tm) * (ti - tm);
                }
                Ok(zm + sxy / sxx * (t - tm))
            }
        }
    }
}
