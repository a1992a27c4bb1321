//! Planning stage: prompt the vision-language backend with the frame and
//! its detections, validate the reply against the canonical schema, repair
//! with bounded retries, and fall back to a deterministic templated plan
//! when the backend never conforms.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::backends::{CallKind, VlmClient};
use crate::canonical::to_canonical_string;
use crate::domain::{Detection, DetectionSet, Frame, MaintenancePlan, Severity};
use crate::error::{Error, Result};
use crate::schema::{action_item, canonicalize_plan, parse_plan_document, validate_plan, ValidationReport};
use crate::screening::PromptTemplate;

/// One try at getting a conformant plan out of the backend.
#[derive(Debug, Clone)]
pub struct PlanAttempt {
    pub attempt_index: u32,
    /// Verbatim backend reply.
    pub raw_text: String,
    pub validation: ValidationReport,
    pub accepted: bool,
}

/// The planning stage failed hard (backend unreachable); the attempts that
/// did complete are preserved for the record.
#[derive(Debug)]
pub struct PlanFailure {
    pub attempts: Vec<PlanAttempt>,
    pub source: Error,
}

/// Per-class fallback actions and tools. The "*" row is required and serves
/// any class without its own row.
#[derive(Debug, Clone, Deserialize)]
pub struct FallbackRow {
    pub actions: Vec<String>,
    pub tools: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FallbackTable {
    rows: HashMap<String, FallbackRow>,
}

impl FallbackTable {
    pub fn from_value(value: &serde_json::Value) -> Result<FallbackTable> {
        let rows: HashMap<String, FallbackRow> = serde_json::from_value(value.clone())
            .map_err(|e| Error::Config(format!("bad fallback table: {e}")))?;
        let table = FallbackTable { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn from_file(path: &Path) -> Result<FallbackTable> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("fallback table {}: {e}", path.display())))?;
        FallbackTable::from_value(&value)
    }

    fn validate(&self) -> Result<()> {
        if !self.rows.contains_key("*") {
            return Err(Error::Config("fallback table must carry a \"*\" default row".into()));
        }
        for (class, row) in &self.rows {
            if row.actions.is_empty() {
                return Err(Error::Config(format!("fallback row \"{class}\" has no actions")));
            }
        }
        Ok(())
    }

    pub fn row(&self, class_label: &str) -> &FallbackRow {
        self.rows.get(class_label).unwrap_or_else(|| &self.rows["*"])
    }
}

/// Compact serialization of the detections for prompt embedding: class,
/// corner bbox, and confidence per detection, in detection-set order.
fn detections_for_prompt(dets: &[Detection]) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Entry<'a> {
        class: &'a str,
        bbox: [f64; 4],
        confidence: f64,
    }
    let entries: Vec<Entry> = dets
        .iter()
        .map(|d| Entry { class: &d.class_label, bbox: d.bbox.as_array(), confidence: d.confidence })
        .collect();
    to_canonical_string(&entries)
}

/// Fill the planning template. The template must consume the {detections}
/// placeholder; a planner prompt without the detections would sever Eq.-style
/// grounding between stages.
pub fn build_plan_prompt(
    template: &PromptTemplate,
    frame: &Frame,
    dets: &DetectionSet,
) -> Result<String> {
    if dets.is_empty() {
        return Err(Error::Precondition(
            "build_plan_prompt requires detections; empty sets never reach planning".into(),
        ));
    }
    if !template.body.contains("{detections}") {
        return Err(Error::Template(format!(
            "planning template {} lacks the {{detections}} placeholder",
            template.name
        )));
    }
    template.render(&[
        ("source_id", frame.source_id.clone()),
        ("timestamp", frame.timestamp.to_string()),
        ("detections", detections_for_prompt(dets)?),
    ])
}

/// Strip a markdown code fence if the reply is wrapped in one; otherwise
/// trim whitespace.
fn extract_document(text: &str) -> &str {
    let trimmed = text.trim();
    if let Some(inner) = trimmed.strip_prefix("```") {
        // Drop an optional language tag on the fence line.
        let body = inner.split_once('\n').map(|(_, rest)| rest).unwrap_or("");
        if let Some(end) = body.rfind("```") {
            return body[..end].trim();
        }
    }
    trimmed
}

fn repair_prompt(base: &str, report: &ValidationReport) -> String {
    let mut prompt = String::with_capacity(base.len() + 256);
    prompt.push_str(base);
    prompt.push_str("\n\nYour previous reply broke these rules:\n");
    for v in &report.violations {
        prompt.push_str(&format!("- {} at {}: {}\n", v.rule, v.path, v.message));
    }
    prompt.push_str("Fix these violations and re-emit the full corrected JSON document.");
    prompt
}

/// Deterministic templated plan built straight from the detections: one item
/// per detection, severity from the confidence/class rule, actions and tools
/// from the lookup table.
pub fn fallback_plan(
    frame: &Frame,
    dets: &DetectionSet,
    table: &FallbackTable,
) -> Result<MaintenancePlan> {
    let items = dets
        .iter()
        .map(|det| {
            let severity = match det.confidence {
                c if c >= 0.8 && det.class_label == "leak" => Severity::Urgent,
                c if c >= 0.8 => Severity::High,
                c if c >= 0.5 => Severity::Medium,
                _ => Severity::Low,
            };
            let row = table.row(&det.class_label);
            action_item(
                &det.class_label,
                det.bbox.as_array(),
                det.confidence,
                severity,
                &frame.source_id,
                row.actions.clone(),
                row.tools.clone(),
                "auto-generated fallback",
            )
        })
        .collect();
    let mut plan = MaintenancePlan { items, raw_text: String::new(), repaired: true };
    plan.raw_text = canonicalize_plan(&plan)?;
    Ok(plan)
}

/// Ask the backend for a plan, validating each reply and feeding violations
/// back up to `max_repairs` times. Exhaustion yields the deterministic
/// fallback; only an unreachable backend fails the stage.
pub fn generate_plan(
    frame: &Frame,
    dets: &DetectionSet,
    template: &PromptTemplate,
    backend: &dyn VlmClient,
    max_repairs: u32,
    table: &FallbackTable,
) -> std::result::Result<(MaintenancePlan, Vec<PlanAttempt>, u64), PlanFailure> {
    let base = match build_plan_prompt(template, frame, dets) {
        Ok(p) => p,
        Err(e) => return Err(PlanFailure { attempts: Vec::new(), source: e }),
    };

    let mut attempts: Vec<PlanAttempt> = Vec::new();
    let mut latency_ms = 0u64;
    for attempt_index in 0..=max_repairs {
        let prompt = match attempts.last() {
            None => base.clone(),
            Some(previous) => repair_prompt(&base, &previous.validation),
        };
        let response = match backend.generate(frame, CallKind::Plan, &prompt) {
            Ok(r) => r,
            Err(e) => return Err(PlanFailure { attempts, source: e }),
        };
        latency_ms += response.latency_ms;

        let document = extract_document(&response.text);
        let validation = validate_plan(document, frame);
        let accepted = validation.valid;
        if accepted {
            match parse_plan_document(document, frame) {
                Ok(mut plan) => {
                    plan.raw_text = response.text.clone();
                    plan.repaired = attempt_index > 0;
                    attempts.push(PlanAttempt {
                        attempt_index,
                        raw_text: response.text,
                        validation,
                        accepted: true,
                    });
                    return Ok((plan, attempts, latency_ms));
                }
                Err(e) => {
                    // A valid report that fails typed parsing is a walker gap;
                    // treat it like any invalid attempt rather than crash.
                    log::warn!("frame {}: accepted document failed typed parse: {e}", frame.frame_id);
                }
            }
        }
        attempts.push(PlanAttempt {
            attempt_index,
            raw_text: response.text,
            validation,
            accepted: false,
        });
    }

    match fallback_plan(frame, dets, table) {
        Ok(plan) => Ok((plan, attempts, latency_ms)),
        Err(e) => Err(PlanFailure { attempts, source: e }),
    }
}
