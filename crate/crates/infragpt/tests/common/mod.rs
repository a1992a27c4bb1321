//! Builders shared by the integration suites: scripted pipeline contexts,
//! frames, and canned backend payloads.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};

use infragpt::backends::{Backends, DetectorBinding, ScriptedBackend};
use infragpt::detection::{DetectorRegistry, DetectorRoutes};
use infragpt::domain::Frame;
use infragpt::pipeline::{Mode, PipelineConfig, PipelineContext};
use infragpt::planning::FallbackTable;
use infragpt::screening::PromptTemplate;

pub const ZERO_SCREEN: &str = r#"{"crack": false, "leak": false, "other": false}"#;
pub const CRACK_SCREEN: &str = r#"{"crack": true, "leak": false, "other": false}"#;
pub const LEAK_SCREEN: &str = r#"{"crack": false, "leak": true, "other": false}"#;

pub fn fixture_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn binding(model_id: &str, classes: &[&str]) -> DetectorBinding {
    DetectorBinding {
        model_id: model_id.to_string(),
        endpoint: "mock".to_string(),
        classes: classes.iter().map(|c| c.to_string()).collect(),
        confidence_floor: 0.25,
    }
}

pub fn registry() -> DetectorRegistry {
    DetectorRegistry {
        routes: DetectorRoutes {
            crack: binding("det-crack", &["crack"]),
            leak: binding("det-leak", &["leak"]),
            other: binding("det-other", &["pothole", "corrosion"]),
        },
        merge_iou: 0.5,
    }
}

pub fn scripted_config(deterministic: bool, concurrency: usize) -> PipelineConfig {
    PipelineConfig {
        vlm_endpoint: "mock".to_string(),
        vlm_model: "test-vlm".to_string(),
        vlm_max_tokens: 512,
        vlm_temperature: 0.0,
        detectors: registry(),
        screening_template: "unused".into(),
        planning_template: "unused".into(),
        fallback_actions: "unused".into(),
        script: None,
        max_repairs: 2,
        concurrency_limit: concurrency,
        inflight_per_endpoint: 4,
        deterministic,
        output_path: None,
        mode: Mode::Batch,
        poll_interval_ms: 20,
        pixels_per_meter: None,
    }
}

/// A fully assembled scripted context plus the backend handle for call
/// accounting.
pub fn scripted_context(
    script: &Value,
    deterministic: bool,
    concurrency: usize,
) -> (PipelineContext, Arc<ScriptedBackend>) {
    let scripted = Arc::new(ScriptedBackend::from_value(script).expect("test script parses"));
    let backends = Backends::scripted(scripted.clone());
    let screening =
        PromptTemplate::new("screening", "test", "Inspect the frame from {source_id}.").unwrap();
    let planning =
        PromptTemplate::new("planning", "test", "Plan for {source_id}: {detections}").unwrap();
    let fallback = FallbackTable::from_value(&json!({
        "crack": {"actions": ["seal the crack and monitor for growth"], "tools": ["crack sealant"]},
        "leak": {"actions": ["shut the nearest supply valve"], "tools": ["pipe wrench"]},
        "*": {"actions": ["dispatch an inspector for on-site assessment"], "tools": ["inspection kit"]}
    }))
    .unwrap();
    let ctx = PipelineContext::new(
        scripted_config(deterministic, concurrency),
        backends,
        screening,
        planning,
        fallback,
    );
    (ctx, scripted)
}

pub fn frame(id: &str) -> Frame {
    Frame {
        frame_id: id.to_string(),
        image_path: format!("images/{id}.jpg"),
        width_px: 1280,
        height_px: 720,
        source_id: "cam-1".to_string(),
        timestamp: 1_756_000_000_000,
        location: None,
    }
}

pub fn write_manifest(path: &Path, ids: &[String]) {
    let lines: Vec<String> =
        ids.iter().map(|id| serde_json::to_string(&frame(id)).unwrap()).collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// A wire-format detection payload centered at (cx, cy).
pub fn detect_payload(class: &str, cx: f64, cy: f64, w: f64, h: f64, conf: f64) -> Value {
    json!({"detections": [
        {"cx": cx, "cy": cy, "w": w, "h": h, "class": class, "conf": conf}
    ]})
}

/// A schema-valid one-item plan document matching [detect_payload]'s box.
pub fn plan_doc(class: &str, cx: f64, cy: f64, w: f64, h: f64, conf: f64, severity: &str) -> String {
    json!({"items": [{
        "type": class,
        "class": class,
        "bbox": [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0],
        "size": [w, h],
        "size_unit": "px",
        "confidence": conf,
        "severity": severity,
        "loc": "camera cam-1",
        "actions": [{"text": "seal the finding and recheck next week"}],
        "tools": ["repair kit"]
    }]})
    .to_string()
}

/// Script for a frame that screens clean.
pub fn clean_entries(script: &mut serde_json::Map<String, Value>, id: &str) {
    script.insert(format!("{id}/screen"), json!(ZERO_SCREEN));
}

/// Script for a frame that goes all the way to a valid plan.
pub fn planned_entries(script: &mut serde_json::Map<String, Value>, id: &str, latency: bool) {
    let (s, d, p) = if latency { (3, 7, 11) } else { (0, 0, 0) };
    script.insert(format!("{id}/screen"), json!({"text": CRACK_SCREEN, "latency_ms": s}));
    let mut detect = detect_payload("crack", 200.0, 150.0, 80.0, 30.0, 0.9);
    detect["latency_ms"] = json!(d);
    script.insert(format!("{id}/detect"), detect);
    script.insert(
        format!("{id}/plan"),
        json!({"text": plan_doc("crack", 200.0, 150.0, 80.0, 30.0, 0.9, "medium"), "latency_ms": p}),
    );
}
