use serde::{Deserialize, Serialize};

use super::{SegmentationError, ShapeClass};

/// Piecewise-linear curve over lux, clamped outside its support.
/// Serialized as `[[lux, value], ...]` sorted by lux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curve(pub Vec<[f64; 2]>);

impl Curve {
    pub fn at(&self, lux: f64) -> f64 {
        let pts = &self.0;
        if lux <= pts[0][0] {
            return pts[0][1];
        }
        for w in pts.windows(2) {
            let ([x0, y0], [x1, y1]) = (w[0], w[1]);
            if lux == x1 {
                return y1;
            }
            if lux < x1 {
                return y0 + (y1 - y0) * (lux - x0) / (x1 - x0);
            }
        }
        pts[pts.len() - 1][1]
    }

    fn validate(&self, name: &str) -> Result<(), SegmentationError> {
        let bad = |msg: &str| Err(SegmentationError::InvalidIllumination(format!("{name}: {msg}")));
        if self.0.is_empty() {
            return bad("empty table");
        }
        if !self.0.iter().all(|[x, y]| x.is_finite() && y.is_finite() && *x > 0.0) {
            return bad("entries must be finite with positive lux");
        }
        if !self.0.windows(2).all(|w| w[0][0] < w[1][0]) {
            return bad("lux values must be strictly increasing");
        }
        Ok(())
    }
}

/// Per-class calibration rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCalibration {
    pub failure_rate: Curve,
    pub mean_iou: Curve,
    /// Mean absolute stereo depth error in percent.
    pub depth_error_pct: Curve,
}

impl ClassCalibration {
    fn validate(&self, class: &str) -> Result<(), SegmentationError> {
        self.failure_rate.validate(&format!("{class}.failure_rate"))?;
        self.mean_iou.validate(&format!("{class}.mean_iou"))?;
        self.depth_error_pct.validate(&format!("{class}.depth_error_pct"))?;
        let unit = |c: &Curve| c.0.iter().all(|[_, y]| (0.0..=1.0).contains(y));
        if !unit(&self.failure_rate) || !unit(&self.mean_iou) {
            return Err(SegmentationError::InvalidIllumination(format!("{class}: rates must lie in [0, 1]")));
        }
        if !self.failure_rate.0.windows(2).all(|w| w[1][1] <= w[0][1]) {
            return Err(SegmentationError::InvalidIllumination(format!(
                "{class}.failure_rate must not increase with lux"
            )));
        }
        if self.depth_error_pct.0.iter().any(|[_, y]| *y < 0.0) {
            return Err(SegmentationError::InvalidIllumination(format!("{class}.depth_error_pct is negative")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationTables {
    pub regular: ClassCalibration,
    pub sea_animal: ClassCalibration,
}

impl IlluminationTables {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        self.regular.validate("regular")?;
        self.sea_animal.validate("sea_animal")
    }

    pub fn shipped() -> Self {
        let t: Self = serde_json::from_str(SHIPPED_ILLUMINATION).expect("shipped illumination parses");
        t.validate().expect("shipped illumination is valid");
        t
    }

    pub fn class(&self, class: ShapeClass) -> &ClassCalibration {
        match class {
            ShapeClass::Regular => &self.regular,
            ShapeClass::SeaAnimal => &self.sea_animal,
        }
    }
}

impl Default for IlluminationTables {
    fn default() -> Self {
        Self::shipped()
    }
}

pub(crate) const SHIPPED_ILLUMINATION: &str = include_str!("../../data/illumination.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationRow {
    pub failure_rate: f64,
    pub mean_iou: f64,
    pub depth_error_pct: f64,
}

/// Calibration tables evaluated at one illuminance.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationModel {
    pub lux: f64,
    pub tables: IlluminationTables,
}

impl IlluminationModel {
    pub fn new(lux: f64, tables: IlluminationTables) -> Result<Self, SegmentationError> {
        if !(lux > 0.0 && lux.is_finite()) {
            return Err(SegmentationError::InvalidIllumination(format!("lux must be positive, got {lux}")));
        }
        tables.validate()?;
        Ok(Self { lux, tables })
    }

    pub fn row(&self, class: ShapeClass) -> IlluminationRow {
        let c = self.tables.class(class);
        IlluminationRow {
            failure_rate: c.failure_rate.at(self.lux),
            mean_iou: c.mean_iou.at(self.lux),
            depth_error_pct: c.depth_error_pct.at(self.lux),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_rows_match_reported_values() {
        let t = IlluminationTables::shipped();
        let at = |lux| IlluminationModel::new(lux, t.clone()).unwrap().row(ShapeClass::Regular);
        assert_eq!(at(2.0).failure_rate, 0.70);
        assert_eq!(at(4.0).failure_rate, 0.12);
        assert_eq!(at(6.0).failure_rate, 0.02);
        assert_eq!(at(8.0).failure_rate, 0.0);
        assert_eq!(at(25.0).mean_iou, 0.90);
        assert_eq!(at(2.0).mean_iou, 0.75);
        assert_eq!(at(4.0).depth_error_pct, 5.42);
        assert_eq!(at(25.0).depth_error_pct, 4.0);
        assert!((at(5.0).failure_rate - 0.07).abs() < 1e-12);
    }

    #[test]
    fn sea_animal_rows() {
        let m = |lux| IlluminationModel::new(lux, IlluminationTables::shipped()).unwrap().row(ShapeClass::SeaAnimal);
        assert_eq!(m(10.0).failure_rate, 0.0);
        assert_eq!(m(25.0).mean_iou, 0.80);
        assert_eq!(m(2.0).depth_error_pct, 9.0);
    }

    #[test]
    fn clamps_outside_support() {
        let c = Curve(vec![[2.0, 0.5], [4.0, 0.1]]);
        assert_eq!(c.at(0.5), 0.5);
        assert_eq!(c.at(100.0), 0.1);
        assert!((c.at(3.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_increasing_failure() {
        let mut t = IlluminationTables::shipped();
        t.regular.failure_rate = Curve(vec![[2.0, 0.1], [4.0, 0.3]]);
        assert!(matches!(t.validate(), Err(SegmentationError::InvalidIllumination(_))));
        let mut t = IlluminationTables::shipped();
        t.sea_animal.mean_iou = Curve(vec![[2.0, 1.2]]);
        assert!(t.validate().is_err());
        assert!(IlluminationModel::new(0.0, IlluminationTables::shipped()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shipped_failure_monotone(a in 0.1f64..40.0, b in 0.1f64..40.0) {
                let t = IlluminationTables::shipped();
                for class in [ShapeClass::Regular, ShapeClass::SeaAnimal] {
                    let c = &t.class(class).failure_rate;
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    prop_assert!(c.at(hi) <= c.at(lo));
                    prop_assert!((0.0..=1.0).contains(&c.at(a)));
                }
            }
        }
    }
}
