//! Evaluation metrics: detection quality, text similarity, and the
//! aggregate analyses built on top of them.

pub mod detection;
pub mod text;

pub use detection::{
    average_precision, average_precision_grouped, iou, map50, map50_grouped, match_detections,
    match_detections_grouped, GtBox, MatchResult,
};
pub use text::{bleu, corpus_bleu, meteor, rouge_l, tokenize};

use serde::Serialize;

use crate::domain::Frame;
use crate::error::{Error, Result};
use crate::schema::validate_plan;

/// One candidate/reference summary pair with all of its per-pair scores.
#[derive(Debug, Clone, Serialize)]
pub struct ScoredPair {
    pub id: String,
    pub candidate: String,
    pub reference: String,
    pub rouge_p: f64,
    pub rouge_r: f64,
    pub rouge_f: f64,
    pub bleu: f64,
    pub meteor: f64,
}

impl ScoredPair {
    /// Score a candidate against its reference with every text metric.
    pub fn score(id: &str, candidate: &str, reference: &str) -> ScoredPair {
        let (rouge_p, rouge_r, rouge_f) = rouge_l(candidate, reference);
        ScoredPair {
            id: id.to_string(),
            candidate: candidate.to_string(),
            reference: reference.to_string(),
            rouge_p,
            rouge_r,
            rouge_f,
            bleu: bleu(candidate, &[reference]),
            meteor: meteor(candidate, reference),
        }
    }
}

/// Unweighted means of the per-pair scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacroScores {
    pub rouge_p: f64,
    pub rouge_r: f64,
    pub rouge_f: f64,
    pub bleu: f64,
    pub meteor: f64,
}

/// Macro-average every metric over the pairs. `None` for an empty corpus,
/// where the means are undefined.
pub fn macro_scores(pairs: &[ScoredPair]) -> Option<MacroScores> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    Some(MacroScores {
        rouge_p: pairs.iter().map(|p| p.rouge_p).sum::<f64>() / n,
        rouge_r: pairs.iter().map(|p| p.rouge_r).sum::<f64>() / n,
        rouge_f: pairs.iter().map(|p| p.rouge_f).sum::<f64>() / n,
        bleu: pairs.iter().map(|p| p.bleu).sum::<f64>() / n,
        meteor: pairs.iter().map(|p| p.meteor).sum::<f64>() / n,
    })
}

/// Consecutive differences of macro ROUGE-L F1 across ordered subsets:
/// delta_k = macroF1(subset_{k+1}) - macroF1(subset_k).
pub fn delta_rouge(subsets: &[Vec<ScoredPair>]) -> Result<Vec<f64>> {
    if subsets.len() < 2 {
        return Err(Error::Precondition(format!(
            "delta_rouge needs at least 2 subsets, got {}",
            subsets.len()
        )));
    }
    let mut macros = Vec::with_capacity(subsets.len());
    for (i, subset) in subsets.iter().enumerate() {
        let scores = macro_scores(subset)
            .ok_or_else(|| Error::Precondition(format!("subset {i} is empty")))?;
        macros.push(scores.rouge_f);
    }
    Ok(macros.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Squared Pearson correlation. `None` when fewer than two points or either
/// column has zero variance.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x).powi(2);
        var_y += (y - mean_y).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return None;
    }
    Some(cov * cov / (var_x * var_y))
}

/// Fraction of plan documents that validate against their frame. An empty
/// list scores 1.0 by convention and logs a warning.
pub fn validity_rate(documents: &[String], frames: &[Frame]) -> Result<f64> {
    if documents.len() != frames.len() {
        return Err(Error::Precondition(format!(
            "validity_rate got {} documents but {} frames",
            documents.len(),
            frames.len()
        )));
    }
    if documents.is_empty() {
        log::warn!("validity_rate over an empty list is vacuous; reporting 1.0");
        return Ok(1.0);
    }
    let valid = documents
        .iter()
        .zip(frames)
        .filter(|(doc, frame)| validate_plan(doc, frame).valid)
        .count();
    Ok(valid as f64 / documents.len() as f64)
}
