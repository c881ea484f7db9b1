//! Ensemble fusion of component detections from two detectors: an external
//! data-driven detector (e.g. a YOLO-family model) and this pipeline's
//! context-based classifier.
//!
//! The data-driven side owns the Body class by default (context-based Body
//! boxes are dropped), remaining boxes pair greedily by descending IoU, and
//! each pair above the threshold merges into one box with
//! confidence-weighted geometry and the higher-confidence member's class.

use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, ComponentClass, Detection};
use crate::error::{Error, Result};

/// Which detector's Body boxes survive fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BodySource {
    /// Keep the external detector's Body boxes, drop context-based ones.
    #[default]
    DataDriven,
    /// The reverse: context-based Body boxes survive.
    Context,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Boxes pair up only above this IoU (strict).
    pub iou_threshold: f64,
    pub body_source: BodySource,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            iou_threshold: 0.5,
            body_source: BodySource::DataDriven,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fusion.iou_threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

/// Merges one pair: box center and size are confidence-weighted averages
/// (weights normalized over the pair; equal weights when both confidences
/// are zero), the class comes from the higher-confidence member (`first`
/// wins ties), and the merged confidence is the pair's arithmetic mean.
pub fn merge_pair(
    first: &Detection<ComponentClass>,
    second: &Detection<ComponentClass>,
) -> Detection<ComponentClass> {
    let (c1, c2) = (first.confidence, second.confidence);
    let (w1, w2) = if c1 + c2 > 0.0 {
        (c1 / (c1 + c2), c2 / (c1 + c2))
    } else {
        (0.5, 0.5)
    };
    let (ax, ay) = first.bbox.center();
    let (bx, by) = second.bbox.center();
    let cx = w1 * ax + w2 * bx;
    let cy = w1 * ay + w2 * by;
    let w = w1 * first.bbox.width() as f64 + w2 * second.bbox.width() as f64;
    let h = w1 * first.bbox.height() as f64 + w2 * second.bbox.height() as f64;
    let bbox = BoundingBox::new(
        (cx - w / 2.0).round().max(0.0) as u32,
        (cy - h / 2.0).round().max(0.0) as u32,
        (cx + w / 2.0).round() as u32,
        (cy + h / 2.0).round() as u32,
    )
    .expect("averaged sizes of valid boxes stay positive");
    let label = if c1 >= c2 { first.label } else { second.label };
    Detection::new(bbox, label, (c1 + c2) / 2.0).expect("mean confidence stays in [0, 1]")
}

/// Fuses the two detection lists for one frame.
///
/// Output order: the data-driven list first (each box replaced in place by
/// its merge when it paired up), then unpaired context-based boxes. Every
/// box merges at most once; candidate pairs are taken in descending-IoU
/// order (ties break toward earlier list positions).
pub fn fuse(
    data_dets: &[Detection<ComponentClass>],
    context_dets: &[Detection<ComponentClass>],
    cfg: &FusionConfig,
) -> Result<Vec<Detection<ComponentClass>>> {
    cfg.validate()?;
    let data_owns_body = cfg.body_source == BodySource::DataDriven;
    let data: Vec<&Detection<ComponentClass>> = data_dets
        .iter()
        .filter(|d| data_owns_body || d.label != ComponentClass::Body)
        .collect();
    let context: Vec<&Detection<ComponentClass>> = context_dets
        .iter()
        .filter(|d| !data_owns_body || d.label != ComponentClass::Body)
        .collect();

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in data.iter().enumerate() {
        for (j, b) in context.iter().enumerate() {
            let iou = a.bbox.iou(&b.bbox);
            if iou > cfg.iou_threshold {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("IoU is finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut merged: Vec<Option<Detection<ComponentClass>>> = vec![None; data.len()];
    let mut context_used = vec![false; context.len()];
    for (_, i, j) in pairs {
        if merged[i].is_none() && !context_used[j] {
            merged[i] = Some(merge_pair(data[i], context[j]));
            context_used[j] = true;
        }
    }

    let mut out = Vec::with_capacity(data.len() + context.len());
    for (i, d) in data.iter().enumerate() {
        out.push(match merged[i].take() {
            Some(m) => m,
            None => (*d).clone(),
        });
    }
    for (j, d) in context.iter().enumerate() {
        if !context_used[j] {
            out.push((*d).clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(
        x0: u32,
        y0: u32,
        x1: u32,
        y1: u32,
        class: ComponentClass,
        conf: f64,
    ) -> Detection<ComponentClass> {
        Detection::new(BoundingBox::new(x0, y0, x1, y1).unwrap(), class, conf).unwrap()
    }

    #[test]
    fn worked_example_merges_exactly() {
        // Centers (100,100) 50x50 at conf 0.6 and (110,100) 40x50 at 0.4.
        let a = det(75, 75, 125, 125, ComponentClass::Solar, 0.6);
        let b = det(90, 75, 130, 125, ComponentClass::Solar, 0.4);
        assert!((a.bbox.iou(&b.bbox) - 1750.0 / 2750.0).abs() < 1e-12);

        let out = fuse(&[a], &[b], &FusionConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        let m = &out[0];
        assert_eq!(m.bbox.center(), (104.0, 100.0));
        assert_eq!((m.bbox.width(), m.bbox.height()), (46, 50));
        assert_eq!(m.bbox, BoundingBox::new(81, 75, 127, 125).unwrap());
        assert_eq!(m.confidence, 0.5);
        assert_eq!(m.label, ComponentClass::Solar);
    }

    #[test]
    fn empty_context_side_is_identity() {
        let a = vec![
            det(0, 0, 10, 10, ComponentClass::Antenna, 0.9),
            det(20, 20, 40, 40, ComponentClass::Body, 0.8),
        ];
        let out = fuse(&a, &[], &FusionConfig::default()).unwrap();
        assert_eq!(out, a);
        // Re-fusing the output with nothing changes nothing.
        let again = fuse(&out, &[], &FusionConfig::default()).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn body_ownership_drops_the_other_side() {
        let data_body = det(0, 0, 10, 10, ComponentClass::Body, 0.9);
        let context_body = det(0, 0, 10, 10, ComponentClass::Body, 0.8);

        let default_cfg = FusionConfig::default();
        let out = fuse(&[], &[context_body.clone()], &default_cfg).unwrap();
        assert!(out.is_empty(), "context Body must be dropped: {out:?}");
        let out = fuse(&[data_body.clone()], &[], &default_cfg).unwrap();
        assert_eq!(out.len(), 1);

        let flipped = FusionConfig {
            body_source: BodySource::Context,
            ..FusionConfig::default()
        };
        let out = fuse(&[data_body], &[context_body.clone()], &flipped).unwrap();
        assert_eq!(out, vec![context_body]);
    }

    #[test]
    fn identical_box_merges_are_fixed_points() {
        let base = det(10, 10, 30, 30, ComponentClass::Solar, 0.5);
        let m = merge_pair(&base, &base.clone());
        assert_eq!(m.bbox, base.bbox);
        assert_eq!(m.confidence, 0.5);

        let hi = det(10, 10, 30, 30, ComponentClass::Solar, 0.8);
        let lo = det(10, 10, 30, 30, ComponentClass::Antenna, 0.2);
        let m = merge_pair(&hi, &lo);
        assert_eq!(m.bbox, hi.bbox);
        assert_eq!(m.confidence, 0.5);
        assert_eq!(m.label, ComponentClass::Solar);

        // Equal confidences: the first argument's class wins.
        let tie = merge_pair(
            &det(10, 10, 30, 30, ComponentClass::Thruster, 0.4),
            &det(10, 10, 30, 30, ComponentClass::Antenna, 0.4),
        );
        assert_eq!(tie.label, ComponentClass::Thruster);
    }

    #[test]
    fn zero_confidence_pair_averages_evenly() {
        let a = det(0, 0, 10, 10, ComponentClass::Solar, 0.0);
        let b = det(10, 0, 20, 10, ComponentClass::Solar, 0.0);
        let m = merge_pair(&a, &b);
        assert_eq!(m.bbox, BoundingBox::new(5, 0, 15, 10).unwrap());
        assert_eq!(m.confidence, 0.0);
    }

    #[test]
    fn each_box_merges_at_most_once() {
        // Two data boxes overlap one context box; only the higher-IoU pair
        // merges, the other data box passes through.
        let d1 = det(0, 0, 100, 100, ComponentClass::Solar, 0.6);
        let d2 = det(10, 10, 110, 110, ComponentClass::Solar, 0.7);
        let c = det(0, 0, 95, 100, ComponentClass::Solar, 0.5);
        let out = fuse(&[d1.clone(), d2], &[c], &FusionConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        // d1 has the higher IoU with c, so out[0] is the merge.
        assert!(out[0].bbox != d1.bbox);
        assert_eq!(out[0].confidence, 0.55);
        assert_eq!(out[1].confidence, 0.7);
    }

    #[test]
    fn merged_geometry_stays_within_pair_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let x0 = rng.random_range(0u32..50);
            let y0 = rng.random_range(0u32..50);
            let a = det(
                x0,
                y0,
                x0 + rng.random_range(5..60),
                y0 + rng.random_range(5..60),
                ComponentClass::Solar,
                rng.random_range(0.0..=1.0),
            );
            let shift_x = rng.random_range(0u32..20);
            let shift_y = rng.random_range(0u32..20);
            let b = det(
                x0 + shift_x,
                y0 + shift_y,
                x0 + shift_x + rng.random_range(5..60),
                y0 + shift_y + rng.random_range(5..60),
                ComponentClass::Antenna,
                rng.random_range(0.0..=1.0),
            );
            let m = merge_pair(&a, &b);
            let (acx, _) = a.bbox.center();
            let (bcx, _) = b.bbox.center();
            let (mcx, mcy) = m.bbox.center();
            assert!(mcx >= acx.min(bcx) - 0.5 && mcx <= acx.max(bcx) + 0.5);
            let (acy, bcy) = (a.bbox.center().1, b.bbox.center().1);
            assert!(mcy >= acy.min(bcy) - 0.5 && mcy <= acy.max(bcy) + 0.5);
            let (wa, wb) = (a.bbox.width(), b.bbox.width());
            assert!(m.bbox.width() >= wa.min(wb).saturating_sub(1) && m.bbox.width() <= wa.max(wb) + 1);
            assert!((m.confidence - (a.confidence + b.confidence) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn output_count_is_bounded() {
        let a = vec![
            det(0, 0, 50, 50, ComponentClass::Solar, 0.6),
            det(100, 100, 150, 150, ComponentClass::Antenna, 0.9),
        ];
        let b = vec![
            det(1, 1, 51, 51, ComponentClass::Solar, 0.5),
            det(200, 200, 250, 250, ComponentClass::Thruster, 0.4),
        ];
        let out = fuse(&a, &b, &FusionConfig::default()).unwrap();
        // One pair merges; the other three boxes pass through.
        assert_eq!(out.len(), 3);
        assert!(out.len() <= a.len() + b.len());
    }

    #[test]
    fn threshold_is_strict_and_validated() {
        // IoU exactly at the threshold does not pair.
        let a = det(0, 0, 10, 10, ComponentClass::Solar, 0.6);
        let b = det(0, 5, 10, 15, ComponentClass::Solar, 0.4);
        let cfg = FusionConfig {
            iou_threshold: a.bbox.iou(&b.bbox),
            ..FusionConfig::default()
        };
        let out = fuse(&[a], &[b], &cfg).unwrap();
        assert_eq!(out.len(), 2);

        for bad in [0.0, -0.1, 1.5] {
            let cfg = FusionConfig {
                iou_threshold: bad,
                ..FusionConfig::default()
            };
            assert!(fuse(&[], &[], &cfg).is_err());
        }
    }
}
