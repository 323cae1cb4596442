use serde::{Deserialize, Serialize};

use crate::geometry::PixelPoint;

use super::shape::{PixelRange, Silhouette};
use super::SegmentationError;

/// Axis-aligned box with real-valued corners (`min` is top-left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: PixelPoint,
    pub max: PixelPoint,
}

impl BoundingBox {
    pub fn new(min: PixelPoint, max: PixelPoint) -> Result<Self, SegmentationError> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    /// Rejects non-finite corners and inverted extents. Zero-size boxes
    /// (a single pixel) are allowed.
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let finite = [self.min.u, self.min.v, self.max.u, self.max.v].iter().all(|c| c.is_finite());
        if !finite || self.max.u < self.min.u || self.max.v < self.min.v {
            return Err(SegmentationError::DegenerateBox);
        }
        Ok(())
    }

    pub fn centre(&self) -> PixelPoint {
        PixelPoint::new((self.min.u + self.max.u) / 2.0, (self.min.v + self.max.v) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.max.u - self.min.u
    }

    pub fn height(&self) -> f64 {
        self.max.v - self.min.v
    }

    pub fn top_left(&self) -> PixelPoint {
        self.min
    }

    pub fn top_right(&self) -> PixelPoint {
        PixelPoint::new(self.max.u, self.min.v)
    }

    pub fn bottom_left(&self) -> PixelPoint {
        PixelPoint::new(self.min.u, self.max.v)
    }

    pub fn bottom_right(&self) -> PixelPoint {
        self.max
    }
}

/// Foreground pixels inside a rectangular region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterRoi {
    pub range: PixelRange,
    bits: Vec<bool>,
}

impl RasterRoi {
    fn get(&self, x: u32, y: u32) -> bool {
        let r = &self.range;
        if x < r.x0 || x > r.x1 || y < r.y0 || y > r.y1 {
            return false;
        }
        self.bits[((y - r.y0) * r.width() + (x - r.x0)) as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskRegion {
    Empty,
    Raster(RasterRoi),
    /// Rasterized on demand; bounding boxes stay sub-pixel exact.
    Shape(Silhouette),
}

/// Binary segmentation mask of a `width × height` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub confidence: f64,
    pub region: MaskRegion,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, confidence: 0.0, region: MaskRegion::Empty }
    }

    pub fn from_shape(width: u32, height: u32, shape: Silhouette, confidence: f64) -> Self {
        Self { width, height, confidence, region: MaskRegion::Shape(shape) }
    }

    /// Builds a mask from a full-frame row-major bit vector.
    pub fn from_bits(width: u32, height: u32, bits: &[bool], confidence: f64) -> Result<Self, SegmentationError> {
        if bits.len() != (width as usize) * (height as usize) {
            return Err(SegmentationError::InvalidRle(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        let mut range: Option<PixelRange> = None;
        for y in 0..height {
            for x in 0..width {
                if bits[(y * width + x) as usize] {
                    let p = PixelRange { x0: x, y0: y, x1: x, y1: y };
                    range = Some(range.map_or(p, |r| r.union(&p)));
                }
            }
        }
        let Some(range) = range else {
            return Ok(Self { width, height, confidence, region: MaskRegion::Empty });
        };
        let mut roi = Vec::with_capacity((range.width() * range.height()) as usize);
        for y in range.y0..=range.y1 {
            for x in range.x0..=range.x1 {
                roi.push(bits[(y * width + x) as usize]);
            }
        }
        Ok(Self { width, height, confidence, region: MaskRegion::Raster(RasterRoi { range, bits: roi }) })
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        match &self.region {
            MaskRegion::Empty => false,
            MaskRegion::Raster(r) => r.get(x, y),
            MaskRegion::Shape(s) => s.contains(x as f64, y as f64),
        }
    }

    /// Whether the pixel nearest to `p` is foreground.
    pub fn contains_point(&self, p: PixelPoint) -> bool {
        match &self.region {
            MaskRegion::Shape(s) => {
                self.in_image(p) && s.contains(p.u.round(), p.v.round())
            }
            _ => self.in_image(p) && self.get(p.u.round() as u32, p.v.round() as u32),
        }
    }

    fn in_image(&self, p: PixelPoint) -> bool {
        let (u, v) = (p.u.round(), p.v.round());
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Pixel range that may contain foreground.
    pub fn support(&self) -> Option<PixelRange> {
        match &self.region {
            MaskRegion::Empty => None,
            MaskRegion::Raster(r) => Some(r.range),
            MaskRegion::Shape(s) => s.pixel_range(self.width, self.height),
        }
    }

    pub fn count(&self) -> usize {
        let Some(r) = self.support() else { return 0 };
        let mut n = 0;
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                n += self.get(x, y) as usize;
            }
        }
        n
    }

    pub fn is_empty(&self) -> bool {
        let Some(r) = self.support() else { return true };
        !(r.y0..=r.y1).any(|y| (r.x0..=r.x1).any(|x| self.get(x, y)))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut out = vec![false; (self.width as usize) * (self.height as usize)];
        if let Some(r) = self.support() {
            for y in r.y0..=r.y1 {
                for x in r.x0..=r.x1 {
                    out[(y * self.width + x) as usize] = self.get(x, y);
                }
            }
        }
        out
    }

    /// Converts to an explicit raster, dropping analytic shape information.
    pub fn rasterized(&self) -> Mask {
        Mask::from_bits(self.width, self.height, &self.to_bits(), self.confidence)
            .expect("dimensions match by construction")
    }

    pub fn to_rle(&self) -> Vec<u32> {
        encode_rle(&self.to_bits())
    }

    pub fn from_rle(width: u32, height: u32, rle: &[u32], confidence: f64) -> Result<Self, SegmentationError> {
        let bits = decode_rle(rle, (width as usize) * (height as usize))?;
        Self::from_bits(width, height, &bits, confidence)
    }
}

/// Alternating background/foreground run lengths, row-major, starting
/// with background (a leading zero-length run when the first pixel is set).
pub fn encode_rle(bits: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &b in bits {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_rle(runs: &[u32], expected_len: usize) -> Result<Vec<bool>, SegmentationError> {
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    if total != expected_len as u64 {
        return Err(SegmentationError::InvalidRle(format!(
            "runs sum to {total}, expected {expected_len}"
        )));
    }
    let mut out = Vec::with_capacity(expected_len);
    for (i, &r) in runs.iter().enumerate() {
        out.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    Ok(out)
}

/// Tightest box around the foreground.
///
/// Raster masks give inclusive pixel indices; analytic masks give the exact
/// sub-pixel bounds of their shape.
pub fn min_bounding_box(mask: &Mask) -> Result<BoundingBox, SegmentationError> {
    match &mask.region {
        MaskRegion::Empty => Err(SegmentationError::EmptyMask),
        MaskRegion::Shape(s) => {
            if mask.is_empty() {
                return Err(SegmentationError::EmptyMask);
            }
            Ok(s.bbox())
        }
        MaskRegion::Raster(r) => {
            let mut found: Option<PixelRange> = None;
            for y in r.range.y0..=r.range.y1 {
                for x in r.range.x0..=r.range.x1 {
                    if r.get(x, y) {
                        let p = PixelRange { x0: x, y0: y, x1: x, y1: y };
                        found = Some(found.map_or(p, |f| f.union(&p)));
                    }
                }
            }
            let f = found.ok_or(SegmentationError::EmptyMask)?;
            Ok(BoundingBox {
                min: PixelPoint::new(f.x0 as f64, f.y0 as f64),
                max: PixelPoint::new(f.x1 as f64, f.y1 as f64),
            })
        }
    }
}

/// `|A ∩ B| / |A ∪ B|` over pixels; two empty masks score 1.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64, SegmentationError> {
    if a.width != b.width || a.height != b.height {
        return Err(SegmentationError::DimensionMismatch {
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    let range = match (a.support(), b.support()) {
        (None, None) => return Ok(1.0),
        (Some(r), None) | (None, Some(r)) => r,
        (Some(r), Some(s)) => r.union(&s),
    };
    let (mut inter, mut union) = (0usize, 0usize);
    for y in range.y0..=range.y1 {
        for x in range.x0..=range.x1 {
            let (pa, pb) = (a.get(x, y), b.get(x, y));
            inter += (pa && pb) as usize;
            union += (pa || pb) as usize;
        }
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
