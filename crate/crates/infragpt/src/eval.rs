//! Offline scoring harness: reads a pipeline record log, a ground-truth box
//! file, and a reference-summary file, then emits plot-ready CSVs plus a
//! machine-readable summary.
//!
//! Inputs (all JSON lines):
//! - records: one canonical PipelineRecord per line, as written by a run
//! - ground truth: `{"frame_id", "width_px", "height_px",
//!   "boxes": [{"bbox": [x_min, y_min, x_max, y_max], "class": "..."}]}`;
//!   a frame with no defects appears with an empty `boxes` list, and the
//!   listed frames define the detection-evaluation universe
//! - references: `{"frame_id", "reference": "..."}`
//!
//! Outputs under `--out-dir`:
//! - `per_image.csv`: one scored row per reference pair
//! - `parity.csv`: paired ROUGE-L F1 / METEOR columns for correlation plots
//! - `macro.csv`: corpus-mean of each text metric
//! - `deltas.csv`: macro ROUGE-L F1 change between consecutive subsets
//! - `summary.json`: everything above plus detection, structural, and
//!   validity aggregates

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical::{format_f64, to_canonical_string};
use crate::domain::{BBox, Detection, Frame, PipelineRecord};
use crate::error::{Error, Result};
use crate::metrics::{
    average_precision_grouped, corpus_bleu, delta_rouge, macro_scores, map50_grouped, r_squared,
    GtBox, MacroScores, MatchResult, ScoredPair,
};
use crate::metrics::detection::match_detections_grouped;
use crate::schema::{canonicalize_plan, structural_accuracy, structural_match_counts, validate_plan};

/// Number of consecutive subsets the corpus is cut into for the delta table.
pub const DEFAULT_SUBSETS: usize = 4;

#[derive(Debug, Clone, Deserialize)]
struct GtBoxLine {
    bbox: [f64; 4],
    class: String,
}

#[derive(Debug, Clone, Deserialize)]
struct GtLine {
    frame_id: String,
    width_px: u32,
    height_px: u32,
    boxes: Vec<GtBoxLine>,
}

#[derive(Debug, Clone, Deserialize)]
struct RefLine {
    frame_id: String,
    reference: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionSummary {
    pub map50: Option<f64>,
    pub per_class_ap: BTreeMap<String, Option<f64>>,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructuralSummary {
    pub plans: usize,
    /// Unweighted mean of per-plan scores; `None` when no plans were logged.
    pub mean_per_plan: Option<f64>,
    /// Matched pairs over max cardinality, pooled across plans.
    pub pooled: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub records: usize,
    pub pairs: usize,
    /// Full-precision per-pair scores for downstream consumers; the CSVs
    /// round to six significant digits.
    #[serde(skip_serializing)]
    pub per_image: Vec<ScoredPair>,
    pub r#macro: MacroScores,
    pub corpus_bleu: f64,
    pub r_squared: Option<f64>,
    pub deltas: Vec<f64>,
    pub detection: DetectionSummary,
    pub structural: StructuralSummary,
    pub validity_rate: f64,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::EvalInput(format!("cannot read {what} file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(line)
            .map_err(|e| Error::EvalInput(format!("{what} line {}: {e}", i + 1)))?;
        out.push(value);
    }
    if out.is_empty() {
        return Err(Error::EvalInput(format!("{what} file {} has no entries", path.display())));
    }
    Ok(out)
}

/// Every action text in the plan, joined into one candidate summary. Records
/// without a plan score against the empty string.
fn candidate_text(record: Option<&PipelineRecord>) -> String {
    let Some(plan) = record.and_then(|r| r.plan.as_ref()) else {
        return String::new();
    };
    let mut texts: Vec<&str> = Vec::new();
    for item in &plan.items {
        for action in &item.actions {
            texts.push(&action.text);
        }
    }
    texts.join(" ")
}

fn unique_by_frame_id<T>(entries: Vec<T>, id: impl Fn(&T) -> &str, what: &str) -> Result<Vec<T>> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for entry in &entries {
        if !seen.insert(id(entry).to_string()) {
            return Err(Error::EvalInput(format!("duplicate frame_id {} in {what}", id(entry))));
        }
    }
    Ok(entries)
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 48 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

/// Cut pairs into `subsets` consecutive, near-equal runs.
fn chunk_pairs(pairs: &[ScoredPair], subsets: usize) -> Vec<Vec<ScoredPair>> {
    let n = pairs.len();
    (0..subsets).map(|k| pairs[k * n / subsets..(k + 1) * n / subsets].to_vec()).collect()
}

fn gt_frame(line: &GtLine) -> Frame {
    Frame {
        frame_id: line.frame_id.clone(),
        image_path: String::new(),
        width_px: line.width_px,
        height_px: line.height_px,
        source_id: String::new(),
        timestamp: 0,
        location: None,
    }
}

/// Score the corpus and write all artifacts into `out_dir`.
pub fn run_eval(
    records_path: &Path,
    gt_path: &Path,
    refs_path: &Path,
    out_dir: &Path,
    subsets: usize,
) -> Result<EvalSummary> {
    let records: Vec<PipelineRecord> = read_jsonl(records_path, "records")?;
    let records = unique_by_frame_id(records, |r| &r.frame_id, "records")?;
    let gt_lines: Vec<GtLine> = read_jsonl(gt_path, "ground-truth")?;
    let mut gt_lines = unique_by_frame_id(gt_lines, |g| &g.frame_id, "ground truth")?;
    gt_lines.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    let ref_lines: Vec<RefLine> = read_jsonl(refs_path, "references")?;
    let mut ref_lines = unique_by_frame_id(ref_lines, |r| &r.frame_id, "references")?;
    ref_lines.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));

    if subsets < 2 || subsets > ref_lines.len() {
        return Err(Error::EvalInput(format!(
            "subsets must be between 2 and the number of reference pairs ({}), got {subsets}",
            ref_lines.len()
        )));
    }

    std::fs::create_dir_all(out_dir)?;

    let by_id: HashMap<&str, &PipelineRecord> =
        records.iter().map(|r| (r.frame_id.as_str(), r)).collect();

    // Text metrics over the reference corpus.
    let pairs: Vec<ScoredPair> = ref_lines
        .iter()
        .map(|r| {
            let candidate = candidate_text(by_id.get(r.frame_id.as_str()).copied());
            ScoredPair::score(&r.frame_id, &candidate, &r.reference)
        })
        .collect();

    let per_image_rows: Vec<String> = pairs
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{},{}",
                p.id,
                format_f64(p.rouge_p),
                format_f64(p.rouge_r),
                format_f64(p.rouge_f),
                format_f64(p.bleu),
                format_f64(p.meteor)
            )
        })
        .collect();
    write_csv(out_dir, "per_image.csv", "id,rouge_p,rouge_r,rouge_f,bleu,meteor", &per_image_rows)?;

    let parity_rows: Vec<String> = pairs
        .iter()
        .map(|p| format!("{},{},{}", p.id, format_f64(p.rouge_f), format_f64(p.meteor)))
        .collect();
    write_csv(out_dir, "parity.csv", "id,score_a,score_b", &parity_rows)?;

    let macros = macro_scores(&pairs).expect("reference corpus is non-empty");
    let macro_rows = vec![
        format!("rouge_p,{}", format_f64(macros.rouge_p)),
        format!("rouge_r,{}", format_f64(macros.rouge_r)),
        format!("rouge_f,{}", format_f64(macros.rouge_f)),
        format!("bleu,{}", format_f64(macros.bleu)),
        format!("meteor,{}", format_f64(macros.meteor)),
    ];
    write_csv(out_dir, "macro.csv", "metric,value", &macro_rows)?;

    let deltas = delta_rouge(&chunk_pairs(&pairs, subsets))
        .map_err(|e| Error::EvalInput(format!("delta computation: {e}")))?;
    let delta_rows: Vec<String> = deltas
        .iter()
        .enumerate()
        .map(|(k, d)| format!("{},{}", k + 2, format_f64(*d)))
        .collect();
    write_csv(out_dir, "deltas.csv", "subset,delta", &delta_rows)?;

    let fit = {
        let xs: Vec<f64> = pairs.iter().map(|p| p.rouge_f).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.meteor).collect();
        r_squared(&xs, &ys)
    };
    let pooled_bleu = corpus_bleu(
        &pairs.iter().map(|p| (p.candidate.as_str(), p.reference.as_str())).collect::<Vec<_>>(),
    );

    // Detection metrics over the ground-truth universe. Predictions for
    // frames the ground truth never mentions are out of scope.
    let frame_index: HashMap<&str, usize> =
        gt_lines.iter().enumerate().map(|(i, g)| (g.frame_id.as_str(), i)).collect();
    let mut keyed_gts: Vec<(usize, GtBox)> = Vec::new();
    for (i, line) in gt_lines.iter().enumerate() {
        for b in &line.boxes {
            let bbox = BBox::new(b.bbox[0], b.bbox[1], b.bbox[2], b.bbox[3]).map_err(|e| {
                Error::EvalInput(format!("ground truth for {}: {e}", line.frame_id))
            })?;
            keyed_gts.push((i, GtBox { bbox, class_label: b.class.clone() }));
        }
    }
    let mut keyed_preds: Vec<(usize, Detection)> = Vec::new();
    for record in &records {
        let Some(&i) = frame_index.get(record.frame_id.as_str()) else {
            if !record.detections.is_empty() {
                log::warn!(
                    "frame {} has detections but no ground-truth entry; skipping it",
                    record.frame_id
                );
            }
            continue;
        };
        for det in &record.detections {
            keyed_preds.push((i, det.clone()));
        }
    }
    let classes: Vec<String> = keyed_gts
        .iter()
        .map(|(_, g)| g.class_label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let per_class_ap: BTreeMap<String, Option<f64>> = classes
        .iter()
        .map(|c| (c.clone(), average_precision_grouped(&keyed_preds, &keyed_gts, c, 0.5)))
        .collect();
    let matched: MatchResult = match_detections_grouped(&keyed_preds, &keyed_gts, 0.5);
    let detection = DetectionSummary {
        map50: map50_grouped(&keyed_preds, &keyed_gts, &classes),
        per_class_ap,
        precision: matched.precision(),
        recall: matched.recall(),
        true_positives: matched.true_positives,
        false_positives: matched.false_positives,
        false_negatives: matched.false_negatives,
    };

    // Structural and validity aggregates over every record that carries a
    // plan and has a ground-truth frame to validate against.
    let mut plans = 0usize;
    let mut per_plan_sum = 0.0f64;
    let mut pooled_matched = 0usize;
    let mut pooled_denom = 0usize;
    let mut docs: Vec<String> = Vec::new();
    let mut doc_frames: Vec<Frame> = Vec::new();
    for record in &records {
        let Some(plan) = &record.plan else { continue };
        plans += 1;
        per_plan_sum += structural_accuracy(plan, &record.detections, 0.5);
        let (m, d) = structural_match_counts(plan, &record.detections, 0.5);
        pooled_matched += m;
        pooled_denom += d;
        if let Some(&i) = frame_index.get(record.frame_id.as_str()) {
            match canonicalize_plan(plan) {
                Ok(doc) => {
                    docs.push(doc);
                    doc_frames.push(gt_frame(&gt_lines[i]));
                }
                Err(e) => {
                    log::warn!("frame {}: plan does not canonicalize: {e}", record.frame_id);
                    // An uncanonicalizable plan is an invalid document.
                    docs.push("not json".to_string());
                    doc_frames.push(gt_frame(&gt_lines[i]));
                }
            }
        }
    }
    let structural = StructuralSummary {
        plans,
        mean_per_plan: if plans == 0 { None } else { Some(per_plan_sum / plans as f64) },
        pooled: if pooled_denom == 0 { None } else { Some(pooled_matched as f64 / pooled_denom as f64) },
    };
    let validity_rate = if docs.is_empty() {
        log::warn!("no plans overlapped the ground-truth universe; validity is vacuous");
        1.0
    } else {
        let valid = docs
            .iter()
            .zip(&doc_frames)
            .filter(|(doc, frame)| validate_plan(doc, frame).valid)
            .count();
        valid as f64 / docs.len() as f64
    };

    let summary = EvalSummary {
        records: records.len(),
        pairs: pairs.len(),
        per_image: pairs,
        r#macro: macros,
        corpus_bleu: pooled_bleu,
        r_squared: fit,
        deltas,
        detection,
        structural,
        validity_rate,
    };
    let mut text = to_canonical_string(&summary)?;
    text.push('\n');
    std::fs::write(out_dir.join("summary.json"), text)?;
    Ok(summary)
}
