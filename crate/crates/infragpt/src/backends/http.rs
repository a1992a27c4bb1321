//! Live HTTP clients for the inference services.
//!
//! Retry policy: 3 attempts per call; transport failures and 5xx statuses
//! retry, everything else fails immediately. Backoff between attempts is
//! fixed (200 ms live, 0 in deterministic mode). In-flight requests are
//! bounded per endpoint.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::Value;

use crate::backends::{
    postprocess_detections, CallKind, DetectResponse, DetectorBinding, DetectorClient, VlmClient,
    VlmRequest, VlmResponse, WireDetection,
};
use crate::domain::Frame;
use crate::error::{Error, Result};

pub const RETRY_ATTEMPTS: u32 = 3;
pub const LIVE_BACKOFF_MS: u64 = 200;

struct Slot {
    count: Mutex<usize>,
    available: Condvar,
}

/// Bounds concurrent requests per endpoint. Acquire blocks until a slot
/// frees up; the guard releases on drop.
pub struct EndpointLimiter {
    max_in_flight: usize,
    slots: Mutex<HashMap<String, Arc<Slot>>>,
}

pub struct InFlightGuard {
    slot: Arc<Slot>,
}

impl Drop for InFlightGuard {
    fn drop(&mut self) {
        let mut count = self.slot.count.lock().unwrap();
        *count -= 1;
        self.slot.available.notify_one();
    }
}

impl EndpointLimiter {
    pub fn new(max_in_flight: usize) -> EndpointLimiter {
        EndpointLimiter { max_in_flight: max_in_flight.max(1), slots: Mutex::new(HashMap::new()) }
    }

    pub fn acquire(&self, endpoint: &str) -> InFlightGuard {
        let slot = {
            let mut slots = self.slots.lock().unwrap();
            slots
                .entry(endpoint.to_string())
                .or_insert_with(|| {
                    Arc::new(Slot { count: Mutex::new(0), available: Condvar::new() })
                })
                .clone()
        };
        let mut count = slot.count.lock().unwrap();
        while *count >= self.max_in_flight {
            count = slot.available.wait(count).unwrap();
        }
        *count += 1;
        drop(count);
        InFlightGuard { slot }
    }
}

/// Talks to live inference endpoints over the documented wire protocol.
pub struct HttpBackend {
    agent: ureq::Agent,
    vlm_endpoint: String,
    vlm_model: String,
    vlm_max_tokens: u32,
    vlm_temperature: f64,
    backoff_ms: u64,
    limiter: EndpointLimiter,
}

impl HttpBackend {
    pub fn new(
        vlm_endpoint: &str,
        vlm_model: &str,
        vlm_max_tokens: u32,
        vlm_temperature: f64,
        backoff_ms: u64,
        max_in_flight: usize,
    ) -> HttpBackend {
        HttpBackend {
            agent: ureq::AgentBuilder::new()
                .timeout_read(Duration::from_secs(120))
                .timeout_write(Duration::from_secs(30))
                .build(),
            vlm_endpoint: vlm_endpoint.trim_end_matches('/').to_string(),
            vlm_model: vlm_model.to_string(),
            vlm_max_tokens,
            vlm_temperature,
            backoff_ms,
            limiter: EndpointLimiter::new(max_in_flight),
        }
    }

    /// POST a JSON body with the retry policy; returns the parsed response
    /// body. Transport errors and 5xx retry; 4xx and malformed bodies fail
    /// at once.
    fn post_json(&self, url: &str, body: &Value) -> Result<Value> {
        let mut last_message = String::new();
        for attempt in 1..=RETRY_ATTEMPTS {
            if attempt > 1 && self.backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.backoff_ms));
            }
            match self.agent.post(url).send_json(body.clone()) {
                Ok(response) => {
                    return response
                        .into_json::<Value>()
                        .map_err(|e| Error::Protocol(format!("{url}: malformed response body: {e}")))
                }
                Err(ureq::Error::Status(code, _)) if code >= 500 => {
                    last_message = format!("{url}: status {code}");
                    log::warn!("attempt {attempt}/{RETRY_ATTEMPTS} failed: {last_message}");
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(Error::Protocol(format!("{url}: status {code}")))
                }
                Err(ureq::Error::Transport(t)) => {
                    last_message = format!("{url}: {t}");
                    log::warn!("attempt {attempt}/{RETRY_ATTEMPTS} failed: {last_message}");
                }
            }
        }
        Err(Error::BackendUnavailable { attempts: RETRY_ATTEMPTS, message: last_message })
    }

    /// Transport-level generate call. Validates the request, then POSTs to
    /// {endpoint}/v1/generate and reads {"text": string}.
    pub fn vlm_generate(&self, request: &VlmRequest, endpoint: &str) -> Result<VlmResponse> {
        request.validate()?;
        let url = format!("{}/v1/generate", endpoint.trim_end_matches('/'));
        let _guard = self.limiter.acquire(endpoint);
        let started = Instant::now();
        let body = self.post_json(&url, &serde_json::to_value(request)?)?;
        let text = body
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Protocol(format!("{url}: response lacks \"text\" string")))?;
        Ok(VlmResponse {
            text: text.to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

fn encode_image(path: &str) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(BASE64.encode(bytes))
}

impl VlmClient for HttpBackend {
    fn generate(&self, frame: &Frame, _kind: CallKind, prompt: &str) -> Result<VlmResponse> {
        let request = VlmRequest {
            model: self.vlm_model.clone(),
            prompt: prompt.to_string(),
            images: vec![encode_image(&frame.image_path)?],
            max_tokens: self.vlm_max_tokens,
            temperature: self.vlm_temperature,
        };
        self.vlm_generate(&request, &self.vlm_endpoint)
    }
}

impl DetectorClient for HttpBackend {
    fn detect(&self, frame: &Frame, binding: &DetectorBinding) -> Result<DetectResponse> {
        binding.validate()?;
        let url = format!("{}/v1/detect", binding.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "image": encode_image(&frame.image_path)?,
            "model": binding.model_id,
            "conf": binding.confidence_floor,
        });
        let _guard = self.limiter.acquire(&binding.endpoint);
        let started = Instant::now();
        let reply = self.post_json(&url, &body)?;
        let wire: Vec<WireDetection> = match reply.get("detections") {
            Some(dets) => serde_json::from_value(dets.clone())
                .map_err(|e| Error::Protocol(format!("{url}: bad detections payload: {e}")))?,
            None => return Err(Error::Protocol(format!("{url}: response lacks \"detections\""))),
        };
        Ok(DetectResponse {
            detections: postprocess_detections(wire, frame, binding)?,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}
