//! End-to-end orchestration: manifest ingestion, the per-frame
//! screen-detect-plan state machine, the concurrent batch runner, and
//! the polling watch loop with urgent alerting.

pub mod config;

pub use config::{Mode, PipelineConfig};

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::backends::{
    Backends, DetectorBinding, DetectorClient, DetectResponse, HttpBackend, ScriptedBackend,
    VlmClient,
};
use crate::canonical::to_canonical_string;
use crate::detection::{run_detection, select_detectors};
use crate::domain::{
    DecisionVector, Frame, MaintenancePlan, PipelineRecord, RecordStatus, Severity, StageLatencies,
};
use crate::error::{Error, Result};
use crate::planning::{generate_plan, FallbackTable};
use crate::schema::{canonicalize_plan, validate_plan};
use crate::screening::{screen, PromptTemplate};

/// Routes each detect call by its binding: "mock" to the scripted backend,
/// anything else to the live client.
struct RoutingDetector {
    scripted: Option<Arc<ScriptedBackend>>,
    http: Option<Arc<HttpBackend>>,
}

impl DetectorClient for RoutingDetector {
    fn detect(&self, frame: &Frame, binding: &DetectorBinding) -> Result<DetectResponse> {
        if binding.endpoint == "mock" {
            self.scripted
                .as_ref()
                .ok_or_else(|| Error::Config("mock detector endpoint without a script".into()))?
                .detect(frame, binding)
        } else {
            self.http
                .as_ref()
                .ok_or_else(|| Error::Config("live detector endpoint without an http client".into()))?
                .detect(frame, binding)
        }
    }
}

/// Everything a worker needs to process frames.
pub struct PipelineContext {
    pub config: PipelineConfig,
    pub backends: Backends,
    pub screening_template: PromptTemplate,
    pub planning_template: PromptTemplate,
    pub fallback: FallbackTable,
}

impl PipelineContext {
    pub fn new(
        config: PipelineConfig,
        backends: Backends,
        screening_template: PromptTemplate,
        planning_template: PromptTemplate,
        fallback: FallbackTable,
    ) -> PipelineContext {
        PipelineContext { config, backends, screening_template, planning_template, fallback }
    }

    /// Load fixtures and assemble backends as the config directs.
    pub fn from_config(config: PipelineConfig) -> Result<PipelineContext> {
        let screening_template = PromptTemplate::from_file(&config.screening_template)?;
        let planning_template = PromptTemplate::from_file(&config.planning_template)?;
        let fallback = FallbackTable::from_file(&config.fallback_actions)?;

        let scripted: Option<Arc<ScriptedBackend>> = match (&config.script, config.any_mocked()) {
            (Some(path), true) => Some(Arc::new(ScriptedBackend::from_file(path)?)),
            _ => None,
        };
        let http: Option<Arc<HttpBackend>> = if config.all_mocked() {
            None
        } else {
            let backoff = if config.deterministic { 0 } else { crate::backends::http::LIVE_BACKOFF_MS };
            Some(Arc::new(HttpBackend::new(
                &config.vlm_endpoint,
                &config.vlm_model,
                config.vlm_max_tokens,
                config.vlm_temperature,
                backoff,
                config.inflight_per_endpoint,
            )))
        };

        let vlm: Arc<dyn VlmClient> = if config.vlm_endpoint == "mock" {
            scripted.clone().expect("validated: mock endpoint implies script")
        } else {
            http.clone().expect("validated: live endpoint implies http client")
        };
        let detector: Arc<dyn DetectorClient> =
            Arc::new(RoutingDetector { scripted: scripted.clone(), http });

        let backends = Backends { vlm, detector, scripted };
        Ok(PipelineContext::new(config, backends, screening_template, planning_template, fallback))
    }
}

/// Parse a manifest: one Frame JSON object per line, unique frame_ids.
pub fn read_manifest(path: &Path) -> Result<Vec<Frame>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut frames = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let frame = parse_manifest_line(line)
            .map_err(|e| Error::Config(format!("manifest line {}: {e}", i + 1)))?;
        if !seen.insert(frame.frame_id.clone()) {
            return Err(Error::Config(format!(
                "manifest line {}: duplicate frame_id {}",
                i + 1,
                frame.frame_id
            )));
        }
        frames.push(frame);
    }
    Ok(frames)
}

fn parse_manifest_line(line: &str) -> Result<Frame> {
    let frame: Frame = serde_json::from_str(line)?;
    frame.validate()?;
    Ok(frame)
}

/// A plan that localizes nothing: emitted when the screener flags a frame
/// but every activated detector comes back empty.
fn empty_plan() -> MaintenancePlan {
    let mut plan = MaintenancePlan { items: Vec::new(), raw_text: String::new(), repaired: false };
    plan.raw_text = canonicalize_plan(&plan).expect("empty plan always canonicalizes");
    plan
}

#[allow(clippy::too_many_arguments)]
fn finish_record(
    frame: &Frame,
    decision: DecisionVector,
    detections: Vec<crate::domain::Detection>,
    plan: Option<MaintenancePlan>,
    status: RecordStatus,
    mut latencies: StageLatencies,
    started: Instant,
    deterministic: bool,
) -> PipelineRecord {
    latencies.total = if deterministic {
        latencies.screen + latencies.detect + latencies.plan
    } else {
        started.elapsed().as_millis() as u64
    };
    PipelineRecord {
        frame_id: frame.frame_id.clone(),
        decision,
        detections,
        plan,
        status,
        latencies_ms: latencies,
    }
}

/// Run one frame through the whole pipeline. Stage failures become record
/// statuses; this function never errors.
pub fn process_frame(frame: &Frame, ctx: &PipelineContext) -> PipelineRecord {
    let deterministic = ctx.config.deterministic;
    let started = Instant::now();
    let mut latencies = StageLatencies::default();

    let screened = match screen(frame, &ctx.screening_template, ctx.backends.vlm.as_ref()) {
        Ok(result) => result,
        Err(e) => {
            log::error!("frame {}: screening failed: {e}", frame.frame_id);
            return finish_record(
                frame,
                DecisionVector::ZERO,
                Vec::new(),
                None,
                RecordStatus::ScreenFailed,
                latencies,
                started,
                deterministic,
            );
        }
    };
    latencies.screen = screened.latency_ms;
    let decision = screened.decision;

    if decision.is_zero() {
        return finish_record(
            frame,
            decision,
            Vec::new(),
            None,
            RecordStatus::NoDefects,
            latencies,
            started,
            deterministic,
        );
    }

    let bindings = select_detectors(&decision, &ctx.config.detectors);
    let outcome = match run_detection(
        frame,
        &bindings,
        ctx.config.detectors.merge_iou,
        ctx.backends.detector.as_ref(),
    ) {
        Ok(outcome) => outcome,
        Err(e) => {
            log::error!("frame {}: detection failed: {e}", frame.frame_id);
            return finish_record(
                frame,
                decision,
                Vec::new(),
                None,
                RecordStatus::DetectionFailed,
                latencies,
                started,
                deterministic,
            );
        }
    };
    latencies.detect = outcome.latency_ms;
    let detections = outcome.detections;

    if detections.is_empty() {
        // Flagged but nothing localized: persist an explicit empty plan
        // rather than prompting the planner with nothing to ground on.
        return finish_record(
            frame,
            decision,
            detections,
            Some(empty_plan()),
            RecordStatus::Planned,
            latencies,
            started,
            deterministic,
        );
    }

    match generate_plan(
        frame,
        &detections,
        &ctx.planning_template,
        ctx.backends.vlm.as_ref(),
        ctx.config.max_repairs,
        &ctx.fallback,
    ) {
        Ok((plan, _attempts, plan_ms)) => {
            latencies.plan = plan_ms;
            finish_record(
                frame,
                decision,
                detections,
                Some(plan),
                RecordStatus::Planned,
                latencies,
                started,
                deterministic,
            )
        }
        Err(failure) => {
            log::error!(
                "frame {}: planning failed after {} attempt(s): {}",
                frame.frame_id,
                failure.attempts.len(),
                failure.source
            );
            finish_record(
                frame,
                decision,
                detections,
                None,
                RecordStatus::PlanFailed,
                latencies,
                started,
                deterministic,
            )
        }
    }
}

/// What one batch run did, for operators and tests.
#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub frames: usize,
    pub status_counts: BTreeMap<String, usize>,
    pub mean_total_latency_ms: f64,
    pub max_total_latency_ms: u64,
    /// total latency minus summed stage latencies, per frame.
    pub mean_overhead_ms: f64,
    pub max_overhead_ms: u64,
    pub plans_emitted: usize,
    pub validity_rate: f64,
}

fn status_name(status: RecordStatus) -> String {
    serde_json::to_value(status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{status:?}"))
}

fn summarize(frames: &[Frame], records: &[PipelineRecord]) -> BatchSummary {
    let mut status_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total_sum = 0u64;
    let mut max_total = 0u64;
    let mut overhead_sum = 0u64;
    let mut max_overhead = 0u64;
    let mut plans = 0usize;
    let mut valid_plans = 0usize;

    for (frame, record) in frames.iter().zip(records) {
        *status_counts.entry(status_name(record.status)).or_insert(0) += 1;
        let l = &record.latencies_ms;
        total_sum += l.total;
        max_total = max_total.max(l.total);
        let overhead = l.total.saturating_sub(l.screen + l.detect + l.plan);
        overhead_sum += overhead;
        max_overhead = max_overhead.max(overhead);
        if let Some(plan) = &record.plan {
            plans += 1;
            let ok = canonicalize_plan(plan)
                .map(|doc| validate_plan(&doc, frame).valid)
                .unwrap_or(false);
            if ok {
                valid_plans += 1;
            }
        }
    }

    let n = records.len().max(1) as f64;
    BatchSummary {
        frames: records.len(),
        status_counts,
        mean_total_latency_ms: total_sum as f64 / n,
        max_total_latency_ms: max_total,
        mean_overhead_ms: overhead_sum as f64 / n,
        max_overhead_ms: max_overhead,
        plans_emitted: plans,
        validity_rate: if plans == 0 { 1.0 } else { valid_plans as f64 / plans as f64 },
    }
}

/// Process every manifest frame with a bounded worker pool and write one
/// canonical record line per frame, ordered by frame_id. Refuses to clobber
/// an existing log unless forced.
pub fn run_batch(
    manifest_path: &Path,
    ctx: &PipelineContext,
    out_path: &Path,
    force: bool,
) -> Result<BatchSummary> {
    let mut frames = read_manifest(manifest_path)?;
    frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));

    if out_path.exists() && !force {
        return Err(Error::Precondition(format!(
            "output {} already exists; pass --force to overwrite",
            out_path.display()
        )));
    }
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }

    let records = process_pool(&frames, ctx);

    let mut log = String::new();
    for record in &records {
        log.push_str(&to_canonical_string(record)?);
        log.push('\n');
    }
    std::fs::write(out_path, log)?;

    Ok(summarize(&frames, &records))
}

/// Scoped worker pool: workers pull frame indices from a shared counter, so
/// output order never depends on scheduling.
fn process_pool(frames: &[Frame], ctx: &PipelineContext) -> Vec<PipelineRecord> {
    let workers = ctx.config.concurrency_limit.min(frames.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<PipelineRecord>>> =
        frames.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= frames.len() {
                    break;
                }
                let record = process_frame(&frames[i], ctx);
                *slots[i].lock().unwrap() = Some(record);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

fn record_is_urgent(record: &PipelineRecord) -> bool {
    record
        .plan
        .as_ref()
        .is_some_and(|plan| plan.items.iter().any(|item| item.severity == Severity::Urgent))
}

/// Watch-loop statistics returned on clean shutdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WatchStats {
    pub frames_processed: usize,
    pub alerts_emitted: usize,
}

/// Poll `<dir>/manifest.jsonl` for new complete lines, process each frame in
/// arrival order, and append records to the log as they finish. Records
/// holding an urgent item are additionally appended to the alerts log at
/// once. A raised stop flag finishes the in-flight frame, flushes, and
/// returns.
pub fn run_watch(
    dir: &Path,
    ctx: &PipelineContext,
    out_path: &Path,
    alerts_path: &Path,
    stop: &AtomicBool,
) -> Result<WatchStats> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("watch directory {} does not exist", dir.display())));
    }
    let manifest = dir.join("manifest.jsonl");
    let mut out = OpenOptions::new().create(true).append(true).open(out_path)?;
    let mut alerts = OpenOptions::new().create(true).append(true).open(alerts_path)?;

    let mut offset: u64 = 0;
    let mut seen: HashSet<String> = HashSet::new();
    let mut stats = WatchStats { frames_processed: 0, alerts_emitted: 0 };

    loop {
        if manifest.is_file() {
            let mut buf = String::new();
            let mut file = File::open(&manifest)?;
            file.seek(SeekFrom::Start(offset))?;
            file.read_to_string(&mut buf)?;

            for line in buf.split_inclusive('\n') {
                if !line.ends_with('\n') {
                    break; // partial tail; the writer is mid-line
                }
                offset += line.len() as u64;
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                let frame = match parse_manifest_line(trimmed) {
                    Ok(frame) => frame,
                    Err(e) => {
                        log::warn!("skipping bad manifest line: {e}");
                        continue;
                    }
                };
                if !seen.insert(frame.frame_id.clone()) {
                    log::warn!("skipping duplicate frame_id {}", frame.frame_id);
                    continue;
                }

                let record = process_frame(&frame, ctx);
                let mut line = to_canonical_string(&record)?;
                line.push('\n');
                out.write_all(line.as_bytes())?;
                out.flush()?;
                if record_is_urgent(&record) {
                    alerts.write_all(line.as_bytes())?;
                    alerts.flush()?;
                    stats.alerts_emitted += 1;
                }
                stats.frames_processed += 1;

                if stop.load(Ordering::SeqCst) {
                    return Ok(stats);
                }
            }
        }
        if stop.load(Ordering::SeqCst) {
            return Ok(stats);
        }
        std::thread::sleep(Duration::from_millis(ctx.config.poll_interval_ms));
    }
}
