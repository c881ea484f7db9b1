//! Object-detection evaluation: greedy IoU matching, precision / recall /
//! F1, per-class average precision with mAP@0.5, and misclassification
//! tallies.
//!
//! Everything here works on raw `u32` class ids so the same harness
//! evaluates shape detections and component detections alike; callers pass
//! the class list to report on.

use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, Detection};

/// Detections and ground truth for one image.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    pub stem: String,
    pub dets: Vec<Detection<u32>>,
    pub gts: Vec<(u32, BoundingBox)>,
}

/// One class to report on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalClass {
    pub id: u32,
    pub name: String,
}

impl EvalClass {
    pub fn new(id: u32, name: &str) -> EvalClass {
        EvalClass {
            id,
            name: name.to_string(),
        }
    }
}

/// Outcome of matching one image's detections against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Per detection (input order): the matched ground-truth index.
    pub det_to_gt: Vec<Option<usize>>,
    pub gt_matched: Vec<bool>,
    pub tp: u64,
    pub fp: u64,
    pub false_negatives: u64,
}

/// Greedy one-to-one matching: detections in descending-confidence order
/// (ties keep input order) each claim the unmatched same-class ground truth
/// with the highest IoU at or above the threshold. Unclaimed detections are
/// false positives; unclaimed ground truths are false negatives.
pub fn match_detections(
    dets: &[Detection<u32>],
    gts: &[(u32, BoundingBox)],
    iou_threshold: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .expect("confidence is finite")
    });

    let mut det_to_gt = vec![None; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(f64, usize)> = None;
        for (gi, (class, bbox)) in gts.iter().enumerate() {
            if gt_matched[gi] || *class != det.label {
                continue;
            }
            let iou = det.bbox.iou(bbox);
            if iou >= iou_threshold && best.map_or(true, |(b, _)| iou > b) {
                best = Some((iou, gi));
            }
        }
        if let Some((_, gi)) = best {
            det_to_gt[di] = Some(gi);
            gt_matched[gi] = true;
        }
    }

    let tp = det_to_gt.iter().filter(|m| m.is_some()).count() as u64;
    MatchResult {
        tp,
        fp: dets.len() as u64 - tp,
        false_negatives: gt_matched.iter().filter(|m| !**m).count() as u64,
        det_to_gt,
        gt_matched,
    }
}

/// Precision, recall and F1 from raw counts.
///
/// Zero-denominator conventions: precision is 0 with no detections; recall
/// is 1 when there are neither ground truths nor detections and 0 when
/// detections exist without ground truth; F1 is 0 whenever P + R is 0.
pub fn precision_recall_f1(tp: u64, fp: u64, false_negatives: u64) -> (f64, f64, f64) {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + false_negatives == 0 {
        if fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + false_negatives) as f64
    };
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

/// Average precision for one class over a whole dataset from
/// `(confidence, is_true_positive)` pairs, using all-points interpolation
/// under the monotone precision envelope. `None` when the class has no
/// ground truth.
pub fn average_precision(scored: &[(f64, bool)], n_gt: u64) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    if scored.is_empty() {
        return Some(0.0);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .0
            .partial_cmp(&scored[a].0)
            .expect("confidence is finite")
    });

    let mut precisions = Vec::with_capacity(scored.len());
    let mut recalls = Vec::with_capacity(scored.len());
    let (mut tp, mut fp) = (0u64, 0u64);
    for &i in &order {
        if scored[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        precisions.push(tp as f64 / (tp + fp) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precisions.len() - 1).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut ap = recalls[0] * precisions[0];
    for i in 1..recalls.len() {
        ap += (recalls[i] - recalls[i - 1]) * precisions[i];
    }
    Some(ap)
}

/// Counts detections that sit on a ground-truth box of a different class:
/// after the class-aware matching pass, leftover detections greedily match
/// leftover ground truths class-agnostically (descending confidence,
/// highest IoU at or above the threshold, one-to-one); every such pair
/// whose classes differ counts once. `exclude_class` removes detections
/// and ground truths of that class before both passes.
pub fn misclassification_tally(
    frames: &[EvalFrame],
    iou_threshold: f64,
    exclude_class: Option<u32>,
) -> u64 {
    let mut count = 0u64;
    for frame in frames {
        let dets: Vec<Detection<u32>> = frame
            .dets
            .iter()
            .filter(|d| Some(d.label) != exclude_class)
            .copied()
            .collect();
        let gts: Vec<(u32, BoundingBox)> = frame
            .gts
            .iter()
            .filter(|(c, _)| Some(*c) != exclude_class)
            .copied()
            .collect();
        let matches = match_detections(&dets, &gts, iou_threshold);

        let mut leftover: Vec<usize> = (0..dets.len())
            .filter(|&i| matches.det_to_gt[i].is_none())
            .collect();
        leftover.sort_by(|&a, &b| {
            dets[b]
                .confidence
                .partial_cmp(&dets[a].confidence)
                .expect("confidence is finite")
        });
        let mut gt_taken = matches.gt_matched.clone();
        for di in leftover {
            let mut best: Option<(f64, usize)> = None;
            for (gi, (_, bbox)) in gts.iter().enumerate() {
                if gt_taken[gi] {
                    continue;
                }
                let iou = dets[di].bbox.iou(bbox);
                if iou >= iou_threshold && best.map_or(true, |(b, _)| iou > b) {
                    best = Some((iou, gi));
                }
            }
            if let Some((_, gi)) = best {
                gt_taken[gi] = true;
                if gts[gi].0 != dets[di].label {
                    count += 1;
                }
            }
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u32,
    pub name: String,
    pub gts: u64,
    pub detections: u64,
    pub tp: u64,
    pub fp: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the class never appears in the ground truth.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub frames: u64,
    pub per_class: Vec<ClassMetrics>,
    /// Micro-averaged over every detection and ground truth.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean AP over classes present in the ground truth; `None` when no
    /// listed class appears.
    pub mean_ap: Option<f64>,
    /// Listed classes with no ground truth, excluded from `mean_ap`.
    pub absent_classes: Vec<String>,
    pub misclassifications: u64,
    /// The tally with `exclude_class` removed first, when one was given.
    pub misclassifications_excluding: Option<u64>,
    /// Mean shape-detector overlap, when shape detections were supplied.
    pub sd_overlap_mean: Option<f64>,
}

/// Evaluates a dataset against `classes` at one IoU threshold.
/// `exclude_class` (typically Body) adds the second misclassification tally.
pub fn evaluate(
    frames: &[EvalFrame],
    classes: &[EvalClass],
    iou_threshold: f64,
    exclude_class: Option<u32>,
) -> EvalReport {
    let matches: Vec<MatchResult> = frames
        .iter()
        .map(|f| match_detections(&f.dets, &f.gts, iou_threshold))
        .collect();

    let mut per_class = Vec::with_capacity(classes.len());
    for class in classes {
        let mut gts = 0u64;
        let mut tp = 0u64;
        let mut dets = 0u64;
        let mut scored: Vec<(f64, bool)> = Vec::new();
        for (frame, m) in frames.iter().zip(&matches) {
            gts += frame.gts.iter().filter(|(c, _)| *c == class.id).count() as u64;
            for (di, d) in frame.dets.iter().enumerate() {
                if d.label != class.id {
                    continue;
                }
                dets += 1;
                let hit = m.det_to_gt[di].is_some();
                if hit {
                    tp += 1;
                }
                scored.push((d.confidence, hit));
            }
        }
        let fp = dets - tp;
        let false_negatives = gts - tp;
        let (precision, recall, f1) = precision_recall_f1(tp, fp, false_negatives);
        per_class.push(ClassMetrics {
            class_id: class.id,
            name: class.name.clone(),
            gts,
            detections: dets,
            tp,
            fp,
            false_negatives,
            precision,
            recall,
            f1,
            ap: average_precision(&scored, gts),
        });
    }

    // Micro aggregation counts every detection and ground truth, including
    // ones whose class is not in the reported list.
    let total_tp: u64 = matches.iter().map(|m| m.tp).sum();
    let total_fp: u64 = matches.iter().map(|m| m.fp).sum();
    let total_fn: u64 = matches.iter().map(|m| m.false_negatives).sum();
    let (precision, recall, f1) = precision_recall_f1(total_tp, total_fp, total_fn);

    let present: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    let mean_ap = if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    };
    let absent_classes = per_class
        .iter()
        .filter(|c| c.ap.is_none())
        .map(|c| c.name.clone())
        .collect();

    EvalReport {
        iou_threshold,
        frames: frames.len() as u64,
        per_class,
        precision,
        recall,
        f1,
        mean_ap,
        absent_classes,
        misclassifications: misclassification_tally(frames, iou_threshold, None),
        misclassifications_excluding: exclude_class
            .map(|c| misclassification_tally(frames, iou_threshold, Some(c))),
        sd_overlap_mean: None,
    }
}

impl EvalReport {
    /// Human-readable fixed-width table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>6} {:>6} {:>6} {:>6} {:>6} {:>10} {:>8} {:>8} {:>8}\n",
            "class", "gts", "dets", "tp", "fp", "fn", "precision", "recall", "f1", "ap"
        ));
        for c in &self.per_class {
            let ap = match c.ap {
                Some(v) => format!("{v:.4}"),
                None => "absent".to_string(),
            };
            out.push_str(&format!(
                "{:<16} {:>6} {:>6} {:>6} {:>6} {:>6} {:>10.4} {:>8.4} {:>8.4} {:>8}\n",
                c.name,
                c.gts,
                c.detections,
                c.tp,
                c.fp,
                c.false_negatives,
                c.precision,
                c.recall,
                c.f1,
                ap
            ));
        }
        let map = match self.mean_ap {
            Some(v) => format!("{v:.4}"),
            None => "n/a".to_string(),
        };
        out.push_str(&format!(
            "overall: precision {:.4}  recall {:.4}  f1 {:.4}  mAP@{:.2} {}\n",
            self.precision, self.recall, self.f1, self.iou_threshold, map
        ));
        out.push_str(&format!(
            "misclassifications: {}{}\n",
            self.misclassifications,
            match self.misclassifications_excluding {
                Some(v) => format!(" (excluding body: {v})"),
                None => String::new(),
            }
        ));
        if let Some(v) = self.sd_overlap_mean {
            out.push_str(&format!("shape-detector overlap mean: {v:.4}\n"));
        }
        if !self.absent_classes.is_empty() {
            out.push_str(&format!(
                "classes absent from ground truth: {}\n",
                self.absent_classes.join(", ")
            ));
        }
        out
    }
}
