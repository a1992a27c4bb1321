//! The canonical maintenance-plan schema: validation of raw documents,
//! typed parsing, canonical serialization, and the structural-accuracy
//! metric tying plan items back to detections.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::value_to_canonical;
use crate::domain::{ActionItem, DetectionSet, Frame, MaintenancePlan, Severity, SizeUnit};
use crate::error::{Error, Result};

/// Schema skeleton embedded in planning prompts so the backend sees the
/// exact target fields.
pub const PLAN_SCHEMA_SKELETON: &str = r#"{
  "items": [
    {
      "type": "<incident type>",
      "class": "<defect class>",
      "bbox": [x_min, y_min, x_max, y_max],
      "size": [w, l],
      "size_unit": "px",
      "confidence": 0.0,
      "severity": "low | medium | high | urgent",
      "loc": "<human-readable location>",
      "risks": "<risks>",
      "causes": "<probable causes>",
      "actions": [{"text": "<recommended action>"}],
      "tools": ["<tool>"],
      "notes": "<notes>"
    }
  ]
}"#;

const REQUIRED_ITEM_FIELDS: [&str; 9] =
    ["type", "class", "bbox", "size", "confidence", "severity", "loc", "actions", "tools"];

const KNOWN_ITEM_FIELDS: [&str; 13] = [
    "type", "class", "bbox", "size", "size_unit", "confidence", "severity", "loc", "risks",
    "causes", "actions", "tools", "notes",
];

/// One broken rule at one location in the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub rule: String,
    pub message: String,
}

/// Everything the validator found. `valid` means the document parses and
/// breaks no rule; warnings never affect validity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub syntactic_ok: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
    pub valid: bool,
}

struct Walker<'a> {
    frame: &'a Frame,
    violations: Vec<Violation>,
    warnings: Vec<Violation>,
}

impl<'a> Walker<'a> {
    fn violation(&mut self, path: &str, rule: &str, message: String) {
        self.violations.push(Violation {
            path: path.to_string(),
            rule: rule.to_string(),
            message,
        });
    }

    fn warning(&mut self, path: &str, rule: &str, message: String) {
        self.warnings.push(Violation {
            path: path.to_string(),
            rule: rule.to_string(),
            message,
        });
    }

    fn require_string(&mut self, path: &str, value: &Value) {
        if !value.is_string() {
            self.violation(path, "type-mismatch", "expected a string".to_string());
        }
    }

    fn check_bbox(&mut self, path: &str, value: &Value) {
        let coords = match numeric_array(value, 4) {
            Some(c) => c,
            None => {
                self.violation(path, "type-mismatch", "expected an array of 4 numbers".to_string());
                return;
            }
        };
        if coords[2] < coords[0] || coords[3] < coords[1] {
            self.violation(
                path,
                "corner-ordering",
                format!(
                    "x_max/y_max must not be below x_min/y_min, got [{}, {}, {}, {}]",
                    coords[0], coords[1], coords[2], coords[3]
                ),
            );
        }
        let (w, h) = (self.frame.width_px as f64, self.frame.height_px as f64);
        if coords[0] < 0.0 || coords[1] < 0.0 || coords[2] > w || coords[3] > h {
            self.violation(
                path,
                "out-of-bounds",
                format!("bbox must lie within the {w}x{h} frame"),
            );
        }
    }

    fn check_size(&mut self, path: &str, value: &Value) {
        let pair = match numeric_array(value, 2) {
            Some(p) => p,
            None => {
                self.violation(path, "type-mismatch", "expected an array of 2 numbers".to_string());
                return;
            }
        };
        if pair.iter().any(|v| *v < 0.0) {
            self.violation(path, "range", "size entries must be non-negative".to_string());
        }
    }

    fn check_actions(&mut self, path: &str, value: &Value) {
        let actions = match value.as_array() {
            Some(a) => a,
            None => {
                self.violation(path, "type-mismatch", "expected an array of objects".to_string());
                return;
            }
        };
        if actions.is_empty() {
            self.violation(path, "empty", "actions must hold at least one entry".to_string());
            return;
        }
        for (j, action) in actions.iter().enumerate() {
            let entry_path = format!("{path}[{j}]");
            let obj = match action.as_object() {
                Some(o) => o,
                None => {
                    self.violation(&entry_path, "type-mismatch", "expected an object".to_string());
                    continue;
                }
            };
            match obj.get("text") {
                Some(text) => self.require_string(&format!("{entry_path}.text"), text),
                None => self.violation(
                    &entry_path,
                    "required-field",
                    "missing required field \"text\"".to_string(),
                ),
            }
            for key in obj.keys().filter(|k| *k != "text") {
                self.warning(
                    &format!("{entry_path}.{key}"),
                    "unknown-field",
                    "unknown action field ignored".to_string(),
                );
            }
        }
    }

    fn check_tools(&mut self, path: &str, value: &Value) {
        let tools = match value.as_array() {
            Some(t) => t,
            None => {
                self.violation(path, "type-mismatch", "expected an array of strings".to_string());
                return;
            }
        };
        for (j, tool) in tools.iter().enumerate() {
            if !tool.is_string() {
                self.violation(
                    &format!("{path}[{j}]"),
                    "type-mismatch",
                    "expected a string".to_string(),
                );
            }
        }
    }

    fn check_item(&mut self, index: usize, value: &Value) {
        let path = format!("$.items[{index}]");
        let obj = match value.as_object() {
            Some(o) => o,
            None => {
                self.violation(&path, "type-mismatch", "expected an object".to_string());
                return;
            }
        };
        for field in REQUIRED_ITEM_FIELDS {
            if !obj.contains_key(field) {
                self.violation(
                    &path,
                    "required-field",
                    format!("missing required field \"{field}\""),
                );
            }
        }
        for (key, field_value) in obj {
            let field_path = format!("{path}.{key}");
            match key.as_str() {
                "type" | "class" | "loc" | "risks" | "causes" | "notes" => {
                    self.require_string(&field_path, field_value)
                }
                "bbox" => self.check_bbox(&field_path, field_value),
                "size" => self.check_size(&field_path, field_value),
                "size_unit" => match field_value.as_str() {
                    Some("px") | Some("m") => {}
                    _ => self.violation(
                        &field_path,
                        "enum",
                        "size_unit must be \"px\" or \"m\"".to_string(),
                    ),
                },
                "confidence" => match field_value.as_f64() {
                    Some(c) if (0.0..=1.0).contains(&c) => {}
                    Some(c) => {
                        self.violation(&field_path, "range", format!("confidence {c} outside [0, 1]"))
                    }
                    None => {
                        self.violation(&field_path, "type-mismatch", "expected a number".to_string())
                    }
                },
                "severity" => match field_value.as_str() {
                    Some(s) if Severity::parse(s).is_some() => {}
                    Some(s) => self.violation(
                        &field_path,
                        "enum",
                        format!("severity \"{s}\" not in {:?}", Severity::ALL),
                    ),
                    None => {
                        self.violation(&field_path, "type-mismatch", "expected a string".to_string())
                    }
                },
                "actions" => self.check_actions(&field_path, field_value),
                "tools" => self.check_tools(&field_path, field_value),
                unknown => {
                    debug_assert!(!KNOWN_ITEM_FIELDS.contains(&unknown));
                    self.warning(&field_path, "unknown-field", "unknown item field ignored".to_string())
                }
            }
        }
    }
}

fn numeric_array(value: &Value, len: usize) -> Option<Vec<f64>> {
    let arr = value.as_array()?;
    if arr.len() != len {
        return None;
    }
    arr.iter().map(Value::as_f64).collect()
}

/// Validate a raw plan document against the canonical schema and the frame's
/// pixel bounds. Total over strings: every failure is a report entry, never
/// an error.
pub fn validate_plan(document: &str, frame: &Frame) -> ValidationReport {
    let value: Value = match serde_json::from_str(document) {
        Ok(v) => v,
        Err(e) => {
            return ValidationReport {
                syntactic_ok: false,
                violations: vec![Violation {
                    path: "$".to_string(),
                    rule: "syntax".to_string(),
                    message: format!("document is not well-formed JSON: {e}"),
                }],
                warnings: Vec::new(),
                valid: false,
            }
        }
    };

    let mut walker = Walker { frame, violations: Vec::new(), warnings: Vec::new() };
    match value.as_object() {
        None => {
            walker.violation("$", "type-mismatch", "top level must be an object".to_string())
        }
        Some(top) => {
            match top.get("items") {
                None => walker.violation(
                    "$",
                    "required-field",
                    "missing required field \"items\"".to_string(),
                ),
                Some(items) => match items.as_array() {
                    None => walker.violation(
                        "$.items",
                        "type-mismatch",
                        "expected an array".to_string(),
                    ),
                    Some(items) => {
                        for (i, item) in items.iter().enumerate() {
                            walker.check_item(i, item);
                        }
                    }
                },
            }
            for key in top.keys().filter(|k| *k != "items") {
                walker.violation(
                    &format!("$.{key}"),
                    "unknown-field",
                    "unknown top-level field".to_string(),
                );
            }
        }
    }

    let valid = walker.violations.is_empty();
    ValidationReport {
        syntactic_ok: true,
        violations: walker.violations,
        warnings: walker.warnings,
        valid,
    }
}

#[derive(Serialize, Deserialize)]
struct PlanDocument {
    items: Vec<ActionItem>,
}

/// Parse a document the validator has accepted into a typed plan.
pub fn parse_plan_document(document: &str, frame: &Frame) -> Result<MaintenancePlan> {
    let report = validate_plan(document, frame);
    if !report.valid {
        let first = report
            .violations
            .first()
            .map(|v| format!("{} at {}: {}", v.rule, v.path, v.message))
            .unwrap_or_else(|| "unknown violation".to_string());
        return Err(Error::Contract(format!(
            "plan document has {} violation(s); first: {first}",
            report.violations.len()
        )));
    }
    let doc: PlanDocument = serde_json::from_str(document)?;
    Ok(MaintenancePlan { items: doc.items, raw_text: document.to_string(), repaired: false })
}

/// Render a plan as its canonical document: fields in schema order, numbers
/// trimmed to at most 6 significant digits, no insignificant whitespace.
pub fn canonicalize_plan(plan: &MaintenancePlan) -> Result<String> {
    plan.validate()?;
    let value = serde_json::to_value(PlanDocument { items: plan.items.clone() })?;
    value_to_canonical(&value)
}

/// How well plan items correspond one-to-one with the detections they
/// describe: greedy same-class matching by descending IoU, scored against
/// the larger cardinality so both hallucinated items and dropped detections
/// cost the same.
pub fn structural_accuracy(plan: &MaintenancePlan, dets: &DetectionSet, iou_threshold: f64) -> f64 {
    if plan.items.is_empty() && dets.is_empty() {
        return 1.0;
    }
    let (matched, denom) = structural_match_counts(plan, dets, iou_threshold);
    matched as f64 / denom as f64
}

/// The raw (matched, max-cardinality) pair behind [structural_accuracy],
/// exposed so corpus scoring can pool counts across plans instead of
/// averaging per-plan ratios.
pub fn structural_match_counts(
    plan: &MaintenancePlan,
    dets: &DetectionSet,
    iou_threshold: f64,
) -> (usize, usize) {
    let items = &plan.items;
    let denom = items.len().max(dets.len());

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ii, item) in items.iter().enumerate() {
        let item_box = item.bbox_as_bbox();
        for (di, det) in dets.iter().enumerate() {
            if item.class_label != det.class_label {
                continue;
            }
            let overlap = item_box.iou(&det.bbox);
            if overlap >= iou_threshold {
                pairs.push((overlap, ii, di));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });

    let mut item_used = vec![false; items.len()];
    let mut det_used = vec![false; dets.len()];
    let mut matched = 0usize;
    for (_, ii, di) in pairs {
        if !item_used[ii] && !det_used[di] {
            item_used[ii] = true;
            det_used[di] = true;
            matched += 1;
        }
    }
    (matched, denom)
}

/// Build a conformant item from its essentials; used by the fallback planner
/// and tests.
#[allow(clippy::too_many_arguments)]
pub fn action_item(
    class_label: &str,
    bbox: [f64; 4],
    confidence: f64,
    severity: Severity,
    loc: &str,
    actions: Vec<String>,
    tools: Vec<String>,
    notes: &str,
) -> ActionItem {
    ActionItem {
        item_type: class_label.to_string(),
        class_label: class_label.to_string(),
        bbox,
        size: [bbox[2] - bbox[0], bbox[3] - bbox[1]],
        size_unit: SizeUnit::Px,
        confidence,
        severity,
        loc: loc.to_string(),
        risks: String::new(),
        causes: String::new(),
        actions: actions.into_iter().map(|text| crate::domain::ActionText { text }).collect(),
        tools,
        notes: notes.to_string(),
    }
}
