//! Shared geometric and detection types.
//!
//! Pixel boxes are half-open: `[x_min, x_max) x [y_min, y_max)`, so a box
//! covering a single pixel at the origin is `[0, 0, 1, 1)` and `width()` is
//! simply `x_max - x_min`. Normalized boxes follow the usual label-file
//! convention (center + size, all in `[0, 1]` relative to the frame).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel box, half-open on both axes. Always non-empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self> {
        if x_max <= x_min || y_max <= y_min {
            return Err(Error::InvalidBox {
                x_min: x_min as i64,
                y_min: y_min as i64,
                x_max: x_max as i64,
                y_max: y_max as i64,
                reason: "max must exceed min on both axes (half-open box)",
            });
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> u32 {
        self.x_min
    }

    pub fn y_min(&self) -> u32 {
        self.y_min
    }

    pub fn x_max(&self) -> u32 {
        self.x_max
    }

    pub fn y_max(&self) -> u32 {
        self.y_max
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) as f64 / 2.0,
            (self.y_min + self.y_max) as f64 / 2.0,
        )
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        if x_max > x_min && y_max > y_min {
            Some(BoundingBox {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            None
        }
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// Intersection over union; 1 for identical boxes, 0 when disjoint.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = match self.intersection(other) {
            Some(b) => b.area(),
            None => return 0.0,
        };
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    /// Clips to a `width x height` frame; `None` if nothing is left.
    pub fn clip(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let x_max = self.x_max.min(width);
        let y_max = self.y_max.min(height);
        if self.x_min < x_max && self.y_min < y_max {
            Some(BoundingBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max,
                y_max,
            })
        } else {
            None
        }
    }

    /// Grows the box by `pad` pixels on every side, clipped to the frame.
    pub fn pad(&self, pad: u32, width: u32, height: u32) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.saturating_sub(pad),
            y_min: self.y_min.saturating_sub(pad),
            x_max: (self.x_max.saturating_add(pad)).min(width),
            y_max: (self.y_max.saturating_add(pad)).min(height),
        }
    }
}

/// Center/size box in frame-relative coordinates, as stored in label files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBox {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormalizedBox {
    pub fn new(class_id: u32, cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let in_unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !in_unit(cx) || !in_unit(cy) || !in_unit(w) || !in_unit(h) || w <= 0.0 || h <= 0.0 {
            return Err(Error::MalformedAnnotation(format!(
                "normalized box out of range: cx={cx} cy={cy} w={w} h={h}"
            )));
        }
        Ok(NormalizedBox {
            class_id,
            cx,
            cy,
            w,
            h,
        })
    }

    /// Converts to a pixel box in a `width x height` frame: edges are
    /// `round((c +/- size/2) * dim)` clamped to the frame. Boxes that round
    /// or clip to zero area are rejected.
    pub fn to_pixel(&self, width: u32, height: u32) -> Result<BoundingBox> {
        let edge = |c: f64, s: f64, dim: u32| {
            let lo = ((c - s / 2.0) * dim as f64).round().clamp(0.0, dim as f64) as u32;
            let hi = ((c + s / 2.0) * dim as f64).round().clamp(0.0, dim as f64) as u32;
            (lo, hi)
        };
        let (x_min, x_max) = edge(self.cx, self.w, width);
        let (y_min, y_max) = edge(self.cy, self.h, height);
        if x_max <= x_min || y_max <= y_min {
            return Err(Error::MalformedAnnotation(format!(
                "normalized box collapses to zero area at {width}x{height}: \
                 cx={} cy={} w={} h={}",
                self.cx, self.cy, self.w, self.h
            )));
        }
        BoundingBox::new(x_min, y_min, x_max, y_max)
    }

    pub fn from_pixel(bbox: &BoundingBox, width: u32, height: u32, class_id: u32) -> Self {
        let w = width as f64;
        let h = height as f64;
        NormalizedBox {
            class_id,
            cx: (bbox.x_min() + bbox.x_max()) as f64 / 2.0 / w,
            cy: (bbox.y_min() + bbox.y_max()) as f64 / 2.0 / h,
            w: bbox.width() as f64 / w,
            h: bbox.height() as f64 / h,
        }
    }
}

/// Primitive shapes found by the shape-detection stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Circle,
    Rectangle,
    Triangle,
    Ring,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 4] = [
        ShapeClass::Circle,
        ShapeClass::Rectangle,
        ShapeClass::Triangle,
        ShapeClass::Ring,
    ];

    pub fn class_id(&self) -> u32 {
        *self as u32
    }

    pub fn from_class_id(id: u32) -> Option<ShapeClass> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShapeClass::Circle => "circle",
            ShapeClass::Rectangle => "rectangle",
            ShapeClass::Triangle => "triangle",
            ShapeClass::Ring => "ring",
        }
    }
}

impl std::fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Spacecraft component classes produced by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentClass {
    Antenna,
    Body,
    Solar,
    Thruster,
    WhiteRadiator,
    Unknown,
}

impl ComponentClass {
    pub const ALL: [ComponentClass; 6] = [
        ComponentClass::Antenna,
        ComponentClass::Body,
        ComponentClass::Solar,
        ComponentClass::Thruster,
        ComponentClass::WhiteRadiator,
        ComponentClass::Unknown,
    ];

    /// The four classes with calibrated texture statistics. White radiators
    /// and unknowns carry no texture evidence.
    pub const TEXTURED: [ComponentClass; 4] = [
        ComponentClass::Antenna,
        ComponentClass::Body,
        ComponentClass::Solar,
        ComponentClass::Thruster,
    ];

    pub fn class_id(&self) -> u32 {
        *self as u32
    }

    pub fn from_class_id(id: u32) -> Option<ComponentClass> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn name(&self) -> &'static str {
        match self {
            ComponentClass::Antenna => "antenna",
            ComponentClass::Body => "body",
            ComponentClass::Solar => "solar",
            ComponentClass::Thruster => "thruster",
            ComponentClass::WhiteRadiator => "white-radiator",
            ComponentClass::Unknown => "unknown",
        }
    }
}

impl std::fmt::Display for ComponentClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A detected box with a label and a confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<L> {
    pub bbox: BoundingBox,
    pub label: L,
    pub confidence: f64,
}

impl<L> Detection<L> {
    pub fn new(bbox: BoundingBox, label: L, confidence: f64) -> Result<Self> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(Error::MalformedAnnotation(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Detection {
            bbox,
            label,
            confidence,
        })
    }

    /// Swaps the label, keeping geometry and confidence.
    pub fn with_label<M>(&self, label: M) -> Detection<M>
    where
        L: Copy,
    {
        Detection {
            bbox: self.bbox,
            label,
            confidence: self.confidence,
        }
    }
}

/// One score per component class, indexed by [`ComponentClass`]. Scores are
/// non-negative by construction everywhere in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScoreVector([f64; ComponentClass::ALL.len()]);

impl ClassScoreVector {
    pub const fn zero() -> Self {
        ClassScoreVector([0.0; 6])
    }

    pub fn from_fn(mut f: impl FnMut(ComponentClass) -> f64) -> Self {
        let mut v = [0.0; 6];
        for c in ComponentClass::ALL {
            v[c.index()] = f(c);
        }
        ClassScoreVector(v)
    }

    pub fn get(&self, class: ComponentClass) -> f64 {
        self.0[class.index()]
    }

    pub fn set(&mut self, class: ComponentClass, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        self.0[class.index()] = value;
    }

    pub fn values(&self) -> [f64; 6] {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Highest-scoring class; ties go to the earlier class in
    /// [`ComponentClass::ALL`] order. An all-zero vector therefore yields
    /// `Antenna` — callers that need a fail-safe must check [`sum`] first.
    ///
    /// [`sum`]: ClassScoreVector::sum
    pub fn argmax(&self) -> ComponentClass {
        let mut best = ComponentClass::Antenna;
        let mut best_v = f64::NEG_INFINITY;
        for c in ComponentClass::ALL {
            let v = self.get(c);
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        best
    }

    /// Sum-normalized copy; an all-zero vector normalizes to itself.
    pub fn normalized(&self) -> ClassScoreVector {
        let s = self.sum();
        if s <= 0.0 {
            return ClassScoreVector::zero();
        }
        ClassScoreVector(self.0.map(|v| v / s))
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &ClassScoreVector) -> ClassScoreVector {
        ClassScoreVector(std::array::from_fn(|i| self.0[i] * other.0[i]))
    }

    /// Element-wise sum.
    pub fn add(&self, other: &ClassScoreVector) -> ClassScoreVector {
        ClassScoreVector(std::array::from_fn(|i| self.0[i] + other.0[i]))
    }
}

/// A `width x height` binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Mask {
        Mask {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    /// Sets every pixel of `bbox` (clipped to the mask).
    pub fn set_box(&mut self, bbox: &BoundingBox) {
        let Some(b) = bbox.clip(self.width, self.height) else {
            return;
        };
        for y in b.y_min()..b.y_max() {
            let row = y as usize * self.width as usize;
            for x in b.x_min()..b.x_max() {
                self.data[row + x as usize] = true;
            }
        }
    }

    pub fn count_set(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }

    /// Number of pixels set in both masks. Panics on dimension mismatch.
    pub fn intersection_count(&self, other: &Mask) -> u64 {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "mask dimensions differ"
        );
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count() as u64
    }
}

/// Rasterizes the union of `boxes` into a fresh mask, clipping to the frame.
pub fn rasterize_union(boxes: &[BoundingBox], width: u32, height: u32) -> Mask {
    let mut mask = Mask::new(width, height);
    for b in boxes {
        mask.set_box(b);
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn box_basics() {
        let b = bb(2, 3, 10, 7);
        assert_eq!(b.width(), 8);
        assert_eq!(b.height(), 4);
        assert_eq!(b.area(), 32);
        assert_eq!(b.center(), (6.0, 5.0));
        assert!(BoundingBox::new(5, 5, 5, 9).is_err());
        assert!(BoundingBox::new(5, 5, 9, 5).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = bb(0, 0, 100, 100);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&bb(200, 200, 300, 300)), 0.0);
        // Half-overlapping equal boxes: 5000 / 15000.
        let c = bb(50, 0, 150, 100);
        assert!((a.iou(&c) - 1.0 / 3.0).abs() < 1e-12);
        // Boxes sharing only an edge are disjoint under half-open semantics.
        assert_eq!(a.iou(&bb(100, 0, 200, 100)), 0.0);
    }

    #[test]
    fn normalized_to_pixel_examples() {
        let n = NormalizedBox::new(2, 0.5, 0.5, 0.1, 0.1).unwrap();
        let b = n.to_pixel(100, 100).unwrap();
        assert_eq!((b.x_min(), b.y_min(), b.x_max(), b.y_max()), (45, 45, 55, 55));

        // Overhanging boxes clip to the frame.
        let n = NormalizedBox::new(0, 0.0, 0.5, 0.2, 0.2).unwrap();
        let b = n.to_pixel(100, 100).unwrap();
        assert_eq!((b.x_min(), b.x_max()), (0, 10));

        // Degenerate after rounding.
        let n = NormalizedBox::new(0, 0.5, 0.5, 0.001, 0.001).unwrap();
        assert!(n.to_pixel(100, 100).is_err());

        assert!(NormalizedBox::new(0, 1.2, 0.5, 0.1, 0.1).is_err());
        assert!(NormalizedBox::new(0, 0.5, 0.5, 0.0, 0.1).is_err());
    }

    #[test]
    fn rasterize_union_counts_overlap_once() {
        let m = rasterize_union(&[bb(0, 0, 10, 10), bb(5, 5, 15, 15)], 20, 20);
        assert_eq!(m.count_set(), 175); // 100 + 100 - 25
        let m = rasterize_union(&[bb(0, 0, 10, 10), bb(0, 0, 10, 10)], 20, 20);
        assert_eq!(m.count_set(), 100);
        // Clipping: box partly outside the frame.
        let m = rasterize_union(&[bb(15, 15, 30, 30)], 20, 20);
        assert_eq!(m.count_set(), 25);
        let m = rasterize_union(&[], 20, 20);
        assert_eq!(m.count_set(), 0);
    }

    #[test]
    fn class_ids_round_trip() {
        for s in ShapeClass::ALL {
            assert_eq!(ShapeClass::from_class_id(s.class_id()), Some(s));
        }
        for c in ComponentClass::ALL {
            assert_eq!(ComponentClass::from_class_id(c.class_id()), Some(c));
        }
        assert_eq!(ShapeClass::Circle.class_id(), 0);
        assert_eq!(ShapeClass::Ring.class_id(), 3);
        assert_eq!(ComponentClass::Antenna.class_id(), 0);
        assert_eq!(ComponentClass::Unknown.class_id(), 5);
        assert_eq!(ShapeClass::from_class_id(4), None);
        assert_eq!(ComponentClass::from_class_id(6), None);
    }

    #[test]
    fn score_vector_argmax_prefers_class_order_on_ties() {
        let mut v = ClassScoreVector::zero();
        v.set(ComponentClass::Body, 2.0);
        v.set(ComponentClass::Solar, 2.0);
        assert_eq!(v.argmax(), ComponentClass::Body);
        assert_eq!(ClassScoreVector::zero().argmax(), ComponentClass::Antenna);

        let n = v.normalized();
        assert!((n.sum() - 1.0).abs() < 1e-12);
        assert_eq!(n.get(ComponentClass::Body), 0.5);
        assert_eq!(ClassScoreVector::zero().normalized(), ClassScoreVector::zero());
    }

    #[test]
    fn detection_confidence_validated() {
        let b = bb(0, 0, 1, 1);
        assert!(Detection::new(b, ShapeClass::Circle, 0.5).is_ok());
        assert!(Detection::new(b, ShapeClass::Circle, 1.0).is_ok());
        assert!(Detection::new(b, ShapeClass::Circle, -0.1).is_err());
        assert!(Detection::new(b, ShapeClass::Circle, 1.1).is_err());
        assert!(Detection::new(b, ShapeClass::Circle, f64::NAN).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0u32..60, 0u32..60, 1u32..40, 1u32..40)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = a.iou(&b);
            let ba = b.iou(&a);
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(a.iou(&a), 1.0);
        }

        #[test]
        fn union_popcount_bounded_by_area_sum(boxes in prop::collection::vec(arb_box(), 0..8)) {
            let mask = rasterize_union(&boxes, 100, 100);
            let total: u64 = boxes.iter().map(|b| b.area()).sum();
            prop_assert!(mask.count_set() <= total);
            let disjoint = boxes.iter().enumerate().all(|(i, a)| {
                boxes[i + 1..].iter().all(|b| a.intersection(b).is_none())
            });
            if disjoint {
                prop_assert_eq!(mask.count_set(), total);
            }
        }

        #[test]
        fn normalized_round_trip_within_one_pixel(b in arb_box()) {
            let n = NormalizedBox::from_pixel(&b, 100, 100, 0);
            let back = n.to_pixel(100, 100).unwrap();
            prop_assert!((back.x_min() as i64 - b.x_min() as i64).abs() <= 1);
            prop_assert!((back.y_min() as i64 - b.y_min() as i64).abs() <= 1);
            prop_assert!((back.x_max() as i64 - b.x_max() as i64).abs() <= 1);
            prop_assert!((back.y_max() as i64 - b.y_max() as i64).abs() <= 1);
        }

        #[test]
        fn intersection_consistent_with_iou(a in arb_box(), b in arb_box()) {
            match a.intersection(&b) {
                Some(i) => {
                    prop_assert!(a.iou(&b) > 0.0);
                    prop_assert!(a.contains(&i) && b.contains(&i));
                }
                None => prop_assert_eq!(a.iou(&b), 0.0),
            }
        }
    }
}
