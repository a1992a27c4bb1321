//! Clients for the two external inference services (vision-language and
//! object detection) plus deterministic scripted stand-ins for tests.
//!
//! Wire protocol, bit-exact:
//!   POST {endpoint}/v1/generate  body = VlmRequest as JSON
//!                                response = {"text": string}
//!   POST {endpoint}/v1/detect    body = {"image", "model", "conf"}
//!                                response = {"detections": [{"cx","cy","w","h","class","conf"}]}

pub mod http;
pub mod scripted;

pub use http::{EndpointLimiter, HttpBackend};
pub use scripted::ScriptedBackend;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{bbox_clamp, bbox_from_center, detection_order, Detection, DetectionSet, Frame};
use crate::error::{Error, Result};

/// Which pipeline stage a backend call serves. Scripted lookups and call
/// accounting are keyed on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CallKind {
    Screen,
    Plan,
    Detect,
}

impl CallKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CallKind::Screen => "screen",
            CallKind::Plan => "plan",
            CallKind::Detect => "detect",
        }
    }
}

/// Body of a POST {endpoint}/v1/generate call.
#[derive(Debug, Clone, Serialize)]
pub struct VlmRequest {
    pub model: String,
    pub prompt: String,
    /// Base64 of the image file bytes, one entry per image.
    pub images: Vec<String>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl VlmRequest {
    pub fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(Error::Precondition("vlm prompt must be non-empty".into()));
        }
        if self.images.is_empty() {
            return Err(Error::Precondition("vlm request must carry at least one image".into()));
        }
        Ok(())
    }
}

/// A vision-language backend's reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VlmResponse {
    /// Verbatim model output; may be empty (downstream treats that as a
    /// parse failure, never a crash).
    pub text: String,
    pub latency_ms: u64,
}

/// One detect call's result.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectResponse {
    pub detections: DetectionSet,
    pub latency_ms: u64,
}

/// One configured object detector: where it lives and what it can see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBinding {
    pub model_id: String,
    /// URL, or the literal token "mock" to route to the scripted backend.
    pub endpoint: String,
    pub classes: Vec<String>,
    pub confidence_floor: f64,
}

impl DetectorBinding {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config(format!("detector {} has no classes", self.model_id)));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(Error::Config(format!(
                "detector {} confidence_floor {} outside [0, 1]",
                self.model_id, self.confidence_floor
            )));
        }
        Ok(())
    }
}

/// One detection as it crosses the wire: center format plus class and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class: String,
    pub conf: f64,
}

/// Turn raw wire detections into domain detections: verify the class against
/// the binding, apply the confidence floor, convert center format to corner
/// format, clamp to the frame, and sort deterministically.
pub fn postprocess_detections(
    wire: Vec<WireDetection>,
    frame: &Frame,
    binding: &DetectorBinding,
) -> Result<DetectionSet> {
    let mut out = Vec::with_capacity(wire.len());
    for raw in wire {
        if !binding.classes.contains(&raw.class) {
            return Err(Error::Protocol(format!(
                "detector {} returned unknown class \"{}\"",
                binding.model_id, raw.class
            )));
        }
        if !raw.conf.is_finite() || !(0.0..=1.0).contains(&raw.conf) {
            return Err(Error::Protocol(format!(
                "detector {} returned confidence {} outside [0, 1]",
                binding.model_id, raw.conf
            )));
        }
        if raw.conf < binding.confidence_floor {
            continue;
        }
        let bbox = bbox_from_center(raw.cx, raw.cy, raw.w, raw.h).map_err(|e| {
            Error::Protocol(format!("detector {} returned bad geometry: {e}", binding.model_id))
        })?;
        let det = Detection {
            bbox: bbox_clamp(&bbox, frame),
            class_label: raw.class,
            confidence: raw.conf,
            model_id: binding.model_id.clone(),
        };
        det.validate()?;
        out.push(det);
    }
    out.sort_by(detection_order);
    Ok(out)
}

/// A vision-language backend: serves both the screening and planning stages.
pub trait VlmClient: Send + Sync {
    fn generate(&self, frame: &Frame, kind: CallKind, prompt: &str) -> Result<VlmResponse>;
}

/// An object-detection backend.
pub trait DetectorClient: Send + Sync {
    fn detect(&self, frame: &Frame, binding: &DetectorBinding) -> Result<DetectResponse>;
}

/// The pipeline's handle on its inference services. `scripted` is populated
/// when any role is mocked, so tests can read call counts.
#[derive(Clone)]
pub struct Backends {
    pub vlm: Arc<dyn VlmClient>,
    pub detector: Arc<dyn DetectorClient>,
    pub scripted: Option<Arc<ScriptedBackend>>,
}

impl Backends {
    /// All roles served by one scripted backend; no network possible.
    pub fn scripted(backend: Arc<ScriptedBackend>) -> Backends {
        Backends { vlm: backend.clone(), detector: backend.clone(), scripted: Some(backend) }
    }
}
