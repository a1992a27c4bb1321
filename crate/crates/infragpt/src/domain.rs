//! Core data types shared by every stage of the pipeline.
//!
//! All types here are immutable values after construction and safe to share
//! between worker threads. Canonical serialization is UTF-8 JSON with fields
//! in declaration order (see [`crate::canonical`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One camera frame plus provenance metadata. Carries a path, never pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: String,
    pub image_path: String,
    pub width_px: u32,
    pub height_px: u32,
    pub source_id: String,
    /// Milliseconds since epoch, taken from the manifest (never wall clock
    /// in deterministic mode).
    pub timestamp: i64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub location: Option<(f64, f64)>,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        if self.frame_id.is_empty() {
            return Err(Error::Precondition("frame_id must be non-empty".into()));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::Precondition(format!(
                "frame {} has non-positive dimensions {}x{}",
                self.frame_id, self.width_px, self.height_px
            )));
        }
        Ok(())
    }
}

/// Screening result: one binary flag per defect family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub crack: u8,
    pub leak: u8,
    pub other: u8,
}

impl DecisionVector {
    pub const ZERO: DecisionVector = DecisionVector { crack: 0, leak: 0, other: 0 };

    pub fn new(crack: bool, leak: bool, other: bool) -> Self {
        DecisionVector { crack: crack as u8, leak: leak as u8, other: other as u8 }
    }

    pub fn is_zero(&self) -> bool {
        self.crack == 0 && self.leak == 0 && self.other == 0
    }

    /// Flags in canonical order (crack, leak, other) with their names.
    pub fn set_flags(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.crack == 1 {
            out.push("crack");
        }
        if self.leak == 1 {
            out.push("leak");
        }
        if self.other == 1 {
            out.push("other");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("crack", self.crack), ("leak", self.leak), ("other", self.other)] {
            if v > 1 {
                return Err(Error::Contract(format!("decision flag {name} = {v}, must be 0 or 1")));
            }
        }
        Ok(())
    }
}

/// Axis-aligned box in pixel coordinates, corner format.
///
/// Corner format is the canonical internal representation; the center format
/// used on the detector wire is converted at ingestion via [`bbox_from_center`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BBox { x_min, y_min, x_max, y_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGeometry(format!("non-finite coordinate in {self:?}")));
        }
        if self.x_max < self.x_min || self.y_max < self.y_min {
            return Err(Error::InvalidGeometry(format!(
                "corner ordering violated: ({}, {}, {}, {})",
                self.x_min, self.y_min, self.x_max, self.y_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Intersection over union; 0 when the union has zero area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Convert a center-format box (cx, cy, w, h) to corner format.
pub fn bbox_from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<BBox> {
    if [cx, cy, w, h].iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "non-finite center-format input ({cx}, {cy}, {w}, {h})"
        )));
    }
    if w < 0.0 || h < 0.0 {
        return Err(Error::InvalidGeometry(format!("negative extent w={w}, h={h}")));
    }
    Ok(BBox {
        x_min: cx - w / 2.0,
        y_min: cy - h / 2.0,
        x_max: cx + w / 2.0,
        y_max: cy + h / 2.0,
    })
}

/// Clamp every coordinate into the frame rectangle, preserving corner ordering.
pub fn bbox_clamp(b: &BBox, frame: &Frame) -> BBox {
    let w = frame.width_px as f64;
    let h = frame.height_px as f64;
    BBox {
        x_min: b.x_min.clamp(0.0, w),
        y_min: b.y_min.clamp(0.0, h),
        x_max: b.x_max.clamp(0.0, w),
        y_max: b.y_max.clamp(0.0, h),
    }
}

/// One localized defect as reported by a detector backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_label: String,
    pub confidence: f64,
    pub model_id: String,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.confidence) || !self.confidence.is_finite() {
            return Err(Error::Contract(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Ordered list of detections (descending confidence, ties by class then x_min).
pub type DetectionSet = Vec<Detection>;

/// Total deterministic ordering for detections: descending confidence,
/// ties broken by class_label, then x_min.
pub fn detection_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.class_label.cmp(&b.class_label))
        .then_with(|| a.bbox.x_min.partial_cmp(&b.bbox.x_min).unwrap_or(std::cmp::Ordering::Equal))
}

/// Urgency levels for a maintenance action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
    Urgent,
}

impl Severity {
    pub const ALL: [&'static str; 4] = ["low", "medium", "high", "urgent"];

    pub fn parse(s: &str) -> Option<Severity> {
        match s {
            "low" => Some(Severity::Low),
            "medium" => Some(Severity::Medium),
            "high" => Some(Severity::High),
            "urgent" => Some(Severity::Urgent),
            _ => None,
        }
    }
}

/// A single recommended action inside an [`ActionItem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionText {
    pub text: String,
}

/// Unit of the `size` pair on an action item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeUnit {
    #[default]
    Px,
    M,
}

/// One entry of a maintenance plan, conforming to the canonical action schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionItem {
    #[serde(rename = "type")]
    pub item_type: String,
    #[serde(rename = "class")]
    pub class_label: String,
    /// Corner format, pixels: [x_min, y_min, x_max, y_max].
    pub bbox: [f64; 4],
    /// (w, l) pair; unit declared by `size_unit`.
    pub size: [f64; 2],
    #[serde(default)]
    pub size_unit: SizeUnit,
    pub confidence: f64,
    pub severity: Severity,
    pub loc: String,
    #[serde(default)]
    pub risks: String,
    #[serde(default)]
    pub causes: String,
    pub actions: Vec<ActionText>,
    pub tools: Vec<String>,
    #[serde(default)]
    pub notes: String,
}

impl ActionItem {
    pub fn validate(&self) -> Result<()> {
        if self.bbox.iter().any(|c| !c.is_finite()) {
            return Err(Error::Contract("action item bbox has non-finite coordinate".into()));
        }
        if self.bbox[2] < self.bbox[0] || self.bbox[3] < self.bbox[1] {
            return Err(Error::Contract("action item bbox violates corner ordering".into()));
        }
        if self.size.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Contract("action item size must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence) || !self.confidence.is_finite() {
            return Err(Error::Contract(format!(
                "action item confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        if self.actions.is_empty() {
            return Err(Error::Contract("action item actions list must be non-empty".into()));
        }
        Ok(())
    }

    pub fn bbox_as_bbox(&self) -> BBox {
        BBox {
            x_min: self.bbox[0],
            y_min: self.bbox[1],
            x_max: self.bbox[2],
            y_max: self.bbox[3],
        }
    }
}

/// The structured output of the planning stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaintenancePlan {
    pub items: Vec<ActionItem>,
    /// Verbatim backend response the plan was parsed from.
    pub raw_text: String,
    /// True if the repair loop (or the deterministic fallback) produced it.
    pub repaired: bool,
}

impl MaintenancePlan {
    pub fn validate(&self) -> Result<()> {
        for item in &self.items {
            item.validate()?;
        }
        Ok(())
    }
}

/// Terminal status of one frame's trip through the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    NoDefects,
    Planned,
    PlanFailed,
    ScreenFailed,
    DetectionFailed,
}

/// Per-stage latencies in milliseconds. Stages that did not run report 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageLatencies {
    pub screen: u64,
    pub detect: u64,
    pub plan: u64,
    pub total: u64,
}

/// One frame's full trace, persisted as one line of the record log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub frame_id: String,
    pub decision: DecisionVector,
    pub detections: DetectionSet,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<MaintenancePlan>,
    pub status: RecordStatus,
    pub latencies_ms: StageLatencies,
}
