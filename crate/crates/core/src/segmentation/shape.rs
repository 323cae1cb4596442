use serde::{Deserialize, Serialize};

use crate::geometry::PixelPoint;

use super::{BoundingBox, SegmentationError};

/// Analytic image-plane silhouette in sub-pixel coordinates.
///
/// Pixel `(x, y)` is foreground when its centre `(x, y)` lies inside the
/// shape (edges inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Silhouette {
    Disk { centre: PixelPoint, radius: f64 },
    Rect { min: PixelPoint, max: PixelPoint },
    Polygon { vertices: Vec<PixelPoint> },
}

impl Silhouette {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let ok = match self {
            Silhouette::Disk { centre, radius } => {
                centre.u.is_finite() && centre.v.is_finite() && radius.is_finite() && *radius > 0.0
            }
            Silhouette::Rect { min, max } => BoundingBox::new(*min, *max).is_ok(),
            Silhouette::Polygon { vertices } => {
                vertices.len() >= 3 && vertices.iter().all(|p| p.u.is_finite() && p.v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SegmentationError::DegenerateBox)
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        match self {
            Silhouette::Disk { centre, radius } => {
                let du = u - centre.u;
                let dv = v - centre.v;
                du * du + dv * dv <= radius * radius
            }
            Silhouette::Rect { min, max } => u >= min.u && u <= max.u && v >= min.v && v <= max.v,
            Silhouette::Polygon { vertices } => point_in_polygon(vertices, u, v),
        }
    }

    pub fn contains_point(&self, p: PixelPoint) -> bool {
        self.contains(p.u, p.v)
    }

    /// Exact (sub-pixel) axis-aligned bounds.
    pub fn bbox(&self) -> BoundingBox {
        match self {
            Silhouette::Disk { centre, radius } => BoundingBox {
                min: PixelPoint::new(centre.u - radius, centre.v - radius),
                max: PixelPoint::new(centre.u + radius, centre.v + radius),
            },
            Silhouette::Rect { min, max } => BoundingBox { min: *min, max: *max },
            Silhouette::Polygon { vertices } => {
                let mut b = BoundingBox { min: vertices[0], max: vertices[0] };
                for p in &vertices[1..] {
                    b.min.u = b.min.u.min(p.u);
                    b.min.v = b.min.v.min(p.v);
                    b.max.u = b.max.u.max(p.u);
                    b.max.v = b.max.v.max(p.v);
                }
                b
            }
        }
    }

    pub fn translated(&self, du: f64, dv: f64) -> Silhouette {
        let mv = |p: &PixelPoint| PixelPoint::new(p.u + du, p.v + dv);
        match self {
            Silhouette::Disk { centre, radius } => Silhouette::Disk { centre: mv(centre), radius: *radius },
            Silhouette::Rect { min, max } => Silhouette::Rect { min: mv(min), max: mv(max) },
            Silhouette::Polygon { vertices } => Silhouette::Polygon { vertices: vertices.iter().map(mv).collect() },
        }
    }

    /// Scales about the bounding-box centre.
    pub fn scaled(&self, s: f64) -> Silhouette {
        let c = self.bbox().centre();
        let sc = |p: &PixelPoint| PixelPoint::new(c.u + s * (p.u - c.u), c.v + s * (p.v - c.v));
        match self {
            Silhouette::Disk { centre, radius } => Silhouette::Disk { centre: *centre, radius: radius * s },
            Silhouette::Rect { min, max } => Silhouette::Rect { min: sc(min), max: sc(max) },
            Silhouette::Polygon { vertices } => Silhouette::Polygon { vertices: vertices.iter().map(sc).collect() },
        }
    }

    /// Inclusive pixel index range covered by the shape, clipped to the
    /// image. `None` when nothing falls inside.
    pub fn pixel_range(&self, width: u32, height: u32) -> Option<PixelRange> {
        let b = self.bbox();
        PixelRange::from_bounds(&b, width, height)
    }
}

/// Inclusive integer pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRange {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRange {
    pub fn from_bounds(b: &BoundingBox, width: u32, height: u32) -> Option<Self> {
        if width == 0 || height == 0 {
            return None;
        }
        let x0 = b.min.u.ceil().max(0.0);
        let y0 = b.min.v.ceil().max(0.0);
        let x1 = b.max.u.floor().min(width as f64 - 1.0);
        let y1 = b.max.v.floor().min(height as f64 - 1.0);
        if !(x0 <= x1 && y0 <= y1) {
            return None;
        }
        Some(Self { x0: x0 as u32, y0: y0 as u32, x1: x1 as u32, y1: y1 as u32 })
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    pub fn union(&self, o: &PixelRange) -> PixelRange {
        PixelRange { x0: self.x0.min(o.x0), y0: self.y0.min(o.y0), x1: self.x1.max(o.x1), y1: self.y1.max(o.y1) }
    }
}

fn point_in_polygon(vs: &[PixelPoint], u: f64, v: f64) -> bool {
    let mut inside = false;
    let n = vs.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vs[i], vs[j]);
        if on_segment(a, b, u, v) {
            return true;
        }
        if (a.v > v) != (b.v > v) {
            let x = a.u + (v - a.v) * (b.u - a.u) / (b.v - a.v);
            if u < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn on_segment(a: PixelPoint, b: PixelPoint, u: f64, v: f64) -> bool {
    let cross = (b.u - a.u) * (v - a.v) - (b.v - a.v) * (u - a.u);
    if cross.abs() > 1e-12 * (1.0 + (b.u - a.u).abs() + (b.v - a.v).abs()) {
        return false;
    }
    u >= a.u.min(b.u) && u <= a.u.max(b.u) && v >= a.v.min(b.v) && v <= a.v.max(b.v)
}

/// Built-in sea-animal outlines, normalized so the bounding box is
/// `[-0.5, 0.5]²` and centred at the origin. `v` grows downwards.
pub fn animal_outline(tag: &str) -> Option<&'static [(f64, f64)]> {
    match tag {
        "fish" => Some(&FISH),
        "turtle" => Some(&TURTLE),
        "jellyfish" => Some(&JELLYFISH),
        _ => None,
    }
}

pub const ANIMAL_TAGS: [&str; 3] = ["fish", "turtle", "jellyfish"];

const FISH: [(f64, f64); 12] = [
    (0.5, 0.0),
    (0.38, -0.3),
    (0.15, -0.5),
    (-0.12, -0.4),
    (-0.28, -0.12),
    (-0.5, -0.45),
    (-0.42, 0.0),
    (-0.5, 0.45),
    (-0.28, 0.12),
    (-0.12, 0.4),
    (0.15, 0.5),
    (0.38, 0.3),
];

const TURTLE: [(f64, f64); 14] = [
    (0.5, -0.05),
    (0.35, -0.2),
    (0.2, -0.5),
    (0.1, -0.3),
    (-0.15, -0.35),
    (-0.3, -0.5),
    (-0.35, -0.2),
    (-0.5, 0.0),
    (-0.35, 0.2),
    (-0.3, 0.5),
    (-0.15, 0.35),
    (0.1, 0.3),
    (0.2, 0.5),
    (0.35, 0.2),
];

const JELLYFISH: [(f64, f64); 11] = [
    (0.0, -0.5),
    (0.35, -0.4),
    (0.5, -0.1),
    (0.3, 0.0),
    (0.3, 0.5),
    (0.1, 0.05),
    (0.0, 0.45),
    (-0.1, 0.05),
    (-0.3, 0.5),
    (-0.3, 0.0),
    (-0.5, -0.1),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outlines_are_normalized() {
        for tag in ANIMAL_TAGS {
            let o = animal_outline(tag).unwrap();
            let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for (u, v) in o {
                lo_u = lo_u.min(*u);
                hi_u = hi_u.max(*u);
                lo_v = lo_v.min(*v);
                hi_v = hi_v.max(*v);
            }
            assert_eq!((lo_u, hi_u, lo_v, hi_v), (-0.5, 0.5, -0.5, 0.5), "{tag}");
        }
        assert!(animal_outline("kraken").is_none());
    }

    #[test]
    fn polygon_membership() {
        let sq = Silhouette::Polygon {
            vertices: vec![
                PixelPoint::new(0.0, 0.0),
                PixelPoint::new(10.0, 0.0),
                PixelPoint::new(10.0, 10.0),
                PixelPoint::new(0.0, 10.0),
            ],
        };
        assert!(sq.contains(5.0, 5.0));
        assert!(sq.contains(0.0, 0.0));
        assert!(sq.contains(10.0, 4.0));
        assert!(!sq.contains(10.5, 4.0));
        let rect = Silhouette::Rect { min: PixelPoint::new(0.0, 0.0), max: PixelPoint::new(10.0, 10.0) };
        for y in -2..13 {
            for x in -2..13 {
                assert_eq!(sq.contains(x as f64, y as f64), rect.contains(x as f64, y as f64));
            }
        }
    }

    #[test]
    fn scale_keeps_centre() {
        let r = Silhouette::Rect { min: PixelPoint::new(10.0, 20.0), max: PixelPoint::new(30.0, 60.0) };
        let b = r.scaled(0.5).bbox();
        assert_eq!(b.centre(), PixelPoint::new(20.0, 40.0));
        assert_eq!(b.width(), 10.0);
        let d = Silhouette::Disk { centre: PixelPoint::new(5.0, 5.0), radius: 2.0 }.translated(1.0, -1.0);
        assert_eq!(d.bbox().centre(), PixelPoint::new(6.0, 4.0));
    }

    #[test]
    fn pixel_range_clips() {
        let r = Silhouette::Rect { min: PixelPoint::new(-5.2, 3.5), max: PixelPoint::new(4.7, 8.0) };
        let pr = r.pixel_range(100, 100).unwrap();
        assert_eq!((pr.x0, pr.y0, pr.x1, pr.y1), (0, 4, 4, 8));
        let off = Silhouette::Disk { centre: PixelPoint::new(-50.0, -50.0), radius: 3.0 };
        assert!(off.pixel_range(100, 100).is_none());
    }
}
