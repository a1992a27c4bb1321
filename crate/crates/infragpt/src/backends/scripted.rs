//! Deterministic scripted backend for tests and offline replay.
//!
//! A script is a JSON object mapping `"<frame_id>/<call-kind>"` to a canned
//! response, or to an array of responses consumed in order (the final entry
//! keeps being served once the rest are used up, so a single entry repeats
//! forever). Detect calls may be scripted per model via the extended key
//! `"<frame_id>/detect/<model_id>"`, which wins over the plain key.
//!
//! Response forms:
//!   "raw text"                                       vlm reply, latency 0
//!   {"text": "...", "latency_ms": 12}                vlm reply
//!   {"detections": [{...wire dets}], "latency_ms": 3} detect reply
//!   {"error": "anything"}                            hard backend failure

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde_json::Value;

use crate::backends::{
    postprocess_detections, CallKind, DetectResponse, DetectorBinding, DetectorClient, VlmClient,
    VlmResponse, WireDetection,
};
use crate::domain::Frame;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum ScriptEntry {
    Vlm { text: String, latency_ms: u64 },
    Detect { detections: Vec<WireDetection>, latency_ms: u64 },
    Fail { message: String },
}

fn parse_entry(key: &str, value: &Value) -> Result<ScriptEntry> {
    if let Some(text) = value.as_str() {
        return Ok(ScriptEntry::Vlm { text: text.to_string(), latency_ms: 0 });
    }
    let obj = value.as_object().ok_or_else(|| {
        Error::Config(format!("script entry for \"{key}\" must be a string or object"))
    })?;
    let latency_ms = obj.get("latency_ms").and_then(Value::as_u64).unwrap_or(0);
    if let Some(message) = obj.get("error") {
        return Ok(ScriptEntry::Fail {
            message: message.as_str().unwrap_or("scripted failure").to_string(),
        });
    }
    if let Some(text) = obj.get("text") {
        let text = text
            .as_str()
            .ok_or_else(|| Error::Config(format!("script \"{key}\": text must be a string")))?;
        return Ok(ScriptEntry::Vlm { text: text.to_string(), latency_ms });
    }
    if let Some(dets) = obj.get("detections") {
        let detections: Vec<WireDetection> = serde_json::from_value(dets.clone())
            .map_err(|e| Error::Config(format!("script \"{key}\": bad detections: {e}")))?;
        return Ok(ScriptEntry::Detect { detections, latency_ms });
    }
    Err(Error::Config(format!(
        "script entry for \"{key}\" must hold \"text\", \"detections\", or \"error\""
    )))
}

struct Inner {
    script: HashMap<String, VecDeque<ScriptEntry>>,
    /// "frame_id/kind" to the number of calls made.
    calls: HashMap<String, u32>,
}

/// In-memory backend that replays canned responses and counts every call.
pub struct ScriptedBackend {
    inner: Mutex<Inner>,
}

impl ScriptedBackend {
    pub fn from_value(script: &Value) -> Result<ScriptedBackend> {
        let obj = script
            .as_object()
            .ok_or_else(|| Error::Config("script file must hold a JSON object".into()))?;
        let mut map = HashMap::new();
        for (key, value) in obj {
            let entries: VecDeque<ScriptEntry> = match value {
                Value::Array(seq) => {
                    if seq.is_empty() {
                        return Err(Error::Config(format!("script \"{key}\" has an empty sequence")));
                    }
                    seq.iter().map(|v| parse_entry(key, v)).collect::<Result<_>>()?
                }
                single => VecDeque::from([parse_entry(key, single)?]),
            };
            map.insert(key.clone(), entries);
        }
        Ok(ScriptedBackend { inner: Mutex::new(Inner { script: map, calls: HashMap::new() }) })
    }

    pub fn from_file(path: &Path) -> Result<ScriptedBackend> {
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("script {}: {e}", path.display())))?;
        ScriptedBackend::from_value(&value)
    }

    /// Serve the next response for a key: consume sequence entries in order,
    /// re-serving the last one indefinitely.
    fn take(&self, frame_id: &str, kind: CallKind, model_id: Option<&str>) -> Result<ScriptEntry> {
        let mut inner = self.inner.lock().unwrap();
        *inner.calls.entry(format!("{frame_id}/{}", kind.as_str())).or_insert(0) += 1;

        let plain = format!("{frame_id}/{}", kind.as_str());
        let key = match model_id {
            Some(m) => {
                let extended = format!("{plain}/{m}");
                if inner.script.contains_key(&extended) {
                    extended
                } else {
                    plain
                }
            }
            None => plain,
        };
        let entries = inner
            .script
            .get_mut(&key)
            .ok_or_else(|| Error::ScriptMissing(key.clone()))?;
        if entries.len() > 1 {
            Ok(entries.pop_front().expect("non-empty by construction"))
        } else {
            Ok(entries.front().expect("non-empty by construction").clone())
        }
    }

    /// How many times the pipeline called this frame/stage pair.
    pub fn call_count(&self, frame_id: &str, kind: CallKind) -> u32 {
        let inner = self.inner.lock().unwrap();
        *inner.calls.get(&format!("{frame_id}/{}", kind.as_str())).unwrap_or(&0)
    }

    /// Total calls of one kind across all frames.
    pub fn total_calls(&self, kind: CallKind) -> u32 {
        let suffix = format!("/{}", kind.as_str());
        let inner = self.inner.lock().unwrap();
        inner.calls.iter().filter(|(k, _)| k.ends_with(&suffix)).map(|(_, v)| *v).sum()
    }
}

impl VlmClient for ScriptedBackend {
    fn generate(&self, frame: &Frame, kind: CallKind, prompt: &str) -> Result<VlmResponse> {
        if prompt.is_empty() {
            return Err(Error::Precondition("vlm prompt must be non-empty".into()));
        }
        match self.take(&frame.frame_id, kind, None)? {
            ScriptEntry::Vlm { text, latency_ms } => Ok(VlmResponse { text, latency_ms }),
            ScriptEntry::Fail { message } => {
                Err(Error::BackendUnavailable { attempts: 1, message })
            }
            ScriptEntry::Detect { .. } => Err(Error::Config(format!(
                "script entry {}/{} holds detections but was called as vlm",
                frame.frame_id,
                kind.as_str()
            ))),
        }
    }
}

impl DetectorClient for ScriptedBackend {
    fn detect(&self, frame: &Frame, binding: &DetectorBinding) -> Result<DetectResponse> {
        match self.take(&frame.frame_id, CallKind::Detect, Some(&binding.model_id))? {
            ScriptEntry::Detect { detections, latency_ms } => Ok(DetectResponse {
                detections: postprocess_detections(detections, frame, binding)?,
                latency_ms,
            }),
            ScriptEntry::Fail { message } => {
                Err(Error::BackendUnavailable { attempts: 1, message })
            }
            ScriptEntry::Vlm { .. } => Err(Error::Config(format!(
                "script entry {}/detect holds text but was called as detector",
                frame.frame_id
            ))),
        }
    }
}
