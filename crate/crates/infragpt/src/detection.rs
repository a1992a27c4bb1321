//! Detection stage: map the decision vector to detector bindings, run every
//! activated detector, and merge their outputs into one detection set.

use serde::{Deserialize, Serialize};

use crate::backends::{DetectorBinding, DetectorClient};
use crate::domain::{detection_order, DecisionVector, DetectionSet, Frame};
use crate::error::{Error, Result};

/// One binding per defect family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRoutes {
    pub crack: DetectorBinding,
    pub leak: DetectorBinding,
    pub other: DetectorBinding,
}

fn default_merge_iou() -> f64 {
    0.5
}

/// The configured detector fleet plus the cross-model merge threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRegistry {
    pub routes: DetectorRoutes,
    #[serde(default = "default_merge_iou")]
    pub merge_iou: f64,
}

impl DetectorRegistry {
    pub fn validate(&self) -> Result<()> {
        if !(self.merge_iou > 0.0 && self.merge_iou <= 1.0) {
            return Err(Error::Config(format!("merge_iou {} outside (0, 1]", self.merge_iou)));
        }
        for binding in [&self.routes.crack, &self.routes.leak, &self.routes.other] {
            binding.validate()?;
        }
        Ok(())
    }

    /// Every class any binding can emit, sorted and deduplicated.
    pub fn class_registry(&self) -> Vec<String> {
        let mut classes: Vec<String> = [&self.routes.crack, &self.routes.leak, &self.routes.other]
            .iter()
            .flat_map(|b| b.classes.iter().cloned())
            .collect();
        classes.sort();
        classes.dedup();
        classes
    }
}

/// Bindings for the set flags, in flag order (crack, leak, other),
/// deduplicated by model_id. All-zero vectors select nothing.
pub fn select_detectors(s: &DecisionVector, registry: &DetectorRegistry) -> Vec<DetectorBinding> {
    let mut out: Vec<DetectorBinding> = Vec::new();
    let flagged = [
        (s.crack == 1, &registry.routes.crack),
        (s.leak == 1, &registry.routes.leak),
        (s.other == 1, &registry.routes.other),
    ];
    for (active, binding) in flagged {
        if active && !out.iter().any(|b| b.model_id == binding.model_id) {
            out.push(binding.clone());
        }
    }
    out
}

/// Greedy per-class non-maximum suppression. Iterates in the deterministic
/// detection order and keeps a detection iff its IoU with every already-kept
/// detection of the same class is strictly below the threshold.
pub fn nms(dets: &DetectionSet, iou_threshold: f64) -> DetectionSet {
    let mut sorted = dets.clone();
    sorted.sort_by(detection_order);
    let mut kept: DetectionSet = Vec::with_capacity(sorted.len());
    for det in sorted {
        let suppressed = kept.iter().any(|k| {
            k.class_label == det.class_label && k.bbox.iou(&det.bbox) >= iou_threshold
        });
        if !suppressed {
            kept.push(det);
        }
    }
    kept
}

/// The detection stage's output: merged detections plus summed backend time.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    pub detections: DetectionSet,
    pub latency_ms: u64,
}

/// Run every binding against the frame, union the results, and merge with
/// cross-model per-class NMS. Any binding failure fails the stage.
pub fn run_detection(
    frame: &Frame,
    bindings: &[DetectorBinding],
    merge_iou: f64,
    backend: &dyn DetectorClient,
) -> Result<DetectionOutcome> {
    if bindings.is_empty() {
        return Err(Error::Precondition(
            "run_detection requires at least one binding; all-zero decisions skip detection".into(),
        ));
    }
    let mut union: DetectionSet = Vec::new();
    let mut latency_ms = 0u64;
    for binding in bindings {
        let response = backend.detect(frame, binding)?;
        union.extend(response.detections);
        latency_ms += response.latency_ms;
    }
    Ok(DetectionOutcome { detections: nms(&union, merge_iou), latency_ms })
}
