//! Detection-quality metrics: greedy matching, precision/recall, and
//! all-point interpolated average precision.
//!
//! The core matcher is keyed by frame so a whole evaluation corpus can be
//! scored in one pass without detections from different images pairing up.
//! Single-scene wrappers use one shared key.

use crate::domain::{detection_order, BBox, Detection};

/// A ground-truth annotation: where a defect is and what class it is.
#[derive(Debug, Clone, PartialEq)]
pub struct GtBox {
    pub bbox: BBox,
    pub class_label: String,
}

/// Intersection-over-union of two corner-format boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Outcome of matching a prediction list against ground truth at a fixed
/// IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// (recall, precision) after each prediction in confidence order.
    pub pr_points: Vec<(f64, f64)>,
}

impl MatchResult {
    pub fn precision(&self) -> f64 {
        let denom = self.true_positives + self.false_positives;
        if denom == 0 {
            0.0
        } else {
            self.true_positives as f64 / denom as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let denom = self.true_positives + self.false_negatives;
        if denom == 0 {
            0.0
        } else {
            self.true_positives as f64 / denom as f64
        }
    }
}

/// Greedy confidence-ordered assignment. Returns one flag per prediction
/// (in the order given, which must already be sorted by confidence):
/// true = matched a previously unmatched same-frame, same-class ground
/// truth with IoU >= threshold.
fn tp_flags(preds: &[(usize, &Detection)], gts: &[(usize, &GtBox)], iou_threshold: f64) -> Vec<bool> {
    let mut gt_used = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(preds.len());
    for (frame, det) in preds {
        let mut best: Option<(usize, f64)> = None;
        for (gi, (gt_frame, gt)) in gts.iter().enumerate() {
            if gt_used[gi] || gt_frame != frame || gt.class_label != det.class_label {
                continue;
            }
            let overlap = det.bbox.iou(&gt.bbox);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        match best {
            Some((gi, _)) => {
                gt_used[gi] = true;
                flags.push(true);
            }
            None => flags.push(false),
        }
    }
    flags
}

fn sorted_refs(preds: &[(usize, Detection)]) -> Vec<(usize, &Detection)> {
    let mut refs: Vec<(usize, &Detection)> = preds.iter().map(|(k, d)| (*k, d)).collect();
    refs.sort_by(|a, b| detection_order(a.1, b.1));
    refs
}

/// Match predictions to ground truth across frames and accumulate counts
/// plus the raw precision/recall curve.
pub fn match_detections_grouped(
    preds: &[(usize, Detection)],
    gts: &[(usize, GtBox)],
    iou_threshold: f64,
) -> MatchResult {
    let pred_refs = sorted_refs(preds);
    let gt_refs: Vec<(usize, &GtBox)> = gts.iter().map(|(k, g)| (*k, g)).collect();
    let flags = tp_flags(&pred_refs, &gt_refs, iou_threshold);

    let n_gt = gts.len();
    let mut tp = 0usize;
    let mut pr_points = Vec::with_capacity(flags.len());
    for (i, flag) in flags.iter().enumerate() {
        if *flag {
            tp += 1;
        }
        let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        let precision = tp as f64 / (i + 1) as f64;
        pr_points.push((recall, precision));
    }
    MatchResult {
        true_positives: tp,
        false_positives: flags.len() - tp,
        false_negatives: n_gt - tp,
        pr_points,
    }
}

/// Single-scene wrapper over [`match_detections_grouped`].
pub fn match_detections(preds: &[Detection], gts: &[GtBox], iou_threshold: f64) -> MatchResult {
    let keyed_preds: Vec<(usize, Detection)> = preds.iter().cloned().map(|d| (0, d)).collect();
    let keyed_gts: Vec<(usize, GtBox)> = gts.iter().cloned().map(|g| (0, g)).collect();
    match_detections_grouped(&keyed_preds, &keyed_gts, iou_threshold)
}

/// Area under the monotone (all-point interpolated) precision envelope.
fn ap_from_curve(pr_points: &[(f64, f64)]) -> f64 {
    let mut envelope: Vec<(f64, f64)> = pr_points.to_vec();
    let mut running_max = 0.0f64;
    for point in envelope.iter_mut().rev() {
        running_max = running_max.max(point.1);
        point.1 = running_max;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in envelope {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Average precision for one class across frames. `None` when the class has
/// no ground truth (AP is undefined there, not zero).
pub fn average_precision_grouped(
    preds: &[(usize, Detection)],
    gts: &[(usize, GtBox)],
    class_label: &str,
    iou_threshold: f64,
) -> Option<f64> {
    let class_gts: Vec<(usize, GtBox)> =
        gts.iter().filter(|(_, g)| g.class_label == class_label).cloned().collect();
    if class_gts.is_empty() {
        return None;
    }
    let class_preds: Vec<(usize, Detection)> =
        preds.iter().filter(|(_, d)| d.class_label == class_label).cloned().collect();
    let result = match_detections_grouped(&class_preds, &class_gts, iou_threshold);
    Some(ap_from_curve(&result.pr_points))
}

/// Single-scene wrapper over [`average_precision_grouped`].
pub fn average_precision(
    preds: &[Detection],
    gts: &[GtBox],
    class_label: &str,
    iou_threshold: f64,
) -> Option<f64> {
    let keyed_preds: Vec<(usize, Detection)> = preds.iter().cloned().map(|d| (0, d)).collect();
    let keyed_gts: Vec<(usize, GtBox)> = gts.iter().cloned().map(|g| (0, g)).collect();
    average_precision_grouped(&keyed_preds, &keyed_gts, class_label, iou_threshold)
}

/// Mean AP at IoU 0.5 over the registry classes that have ground truth.
/// `None` when no registry class has any ground truth.
pub fn map50_grouped(
    preds: &[(usize, Detection)],
    gts: &[(usize, GtBox)],
    class_registry: &[String],
) -> Option<f64> {
    let aps: Vec<f64> = class_registry
        .iter()
        .filter_map(|class| average_precision_grouped(preds, gts, class, 0.5))
        .collect();
    if aps.is_empty() {
        None
    } else {
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

/// Single-scene wrapper over [`map50_grouped`].
pub fn map50(preds: &[Detection], gts: &[GtBox], class_registry: &[String]) -> Option<f64> {
    let keyed_preds: Vec<(usize, Detection)> = preds.iter().cloned().map(|d| (0, d)).collect();
    let keyed_gts: Vec<(usize, GtBox)> = gts.iter().cloned().map(|g| (0, g)).collect();
    map50_grouped(&keyed_preds, &keyed_gts, class_registry)
}
