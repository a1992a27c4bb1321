//! Text-similarity metrics over a shared tokenizer.
//!
//! One tokenization rule feeds ROUGE-L, BLEU, and METEOR so that scores are
//! reproducible across runs and insensitive to punctuation-only edits.

use std::collections::HashMap;

/// Lowercase, then split into maximal runs of letters or digits. Everything
/// else is a separator and is dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L precision, recall, and balanced F1. All zero when either side
/// tokenizes to nothing.
pub fn rouge_l(candidate: &str, reference: &str) -> (f64, f64, f64) {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let lcs = lcs_len(&cand, &refr) as f64;
    let p = lcs / cand.len() as f64;
    let r = lcs / refr.len() as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with order-adaptive N = min(4, |candidate|), uniform
/// weights, clipped n-gram precisions, and brevity penalty against the
/// closest reference length (ties resolved toward the shorter reference).
pub fn bleu(candidate: &str, references: &[&str]) -> f64 {
    let cand = tokenize(candidate);
    if cand.is_empty() || references.is_empty() {
        return 0.0;
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let max_order = cand.len().min(4);

    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let cand_counts = ngram_counts(&cand, n);
        let mut clipped = 0usize;
        let mut total = 0usize;
        for (gram, count) in &cand_counts {
            let clip = refs.iter().map(|r| *ngram_counts(r, n).get(*gram).unwrap_or(&0)).max().unwrap_or(0);
            clipped += (*count).min(clip);
            total += count;
        }
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let geo_mean = (log_sum / max_order as f64).exp();

    let c = cand.len() as i64;
    let r = refs
        .iter()
        .map(|r| r.len() as i64)
        .min_by_key(|len| ((len - c).abs(), *len))
        .unwrap_or(0);
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * geo_mean
}

/// Corpus BLEU: identical formula over pooled clipped counts, candidate
/// length, and closest-reference length. Orders a candidate is too short to
/// produce contribute nothing to that pair's counts.
pub fn corpus_bleu(pairs: &[(&str, &str)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut clipped = [0usize; 4];
    let mut total = [0usize; 4];
    let mut c_len = 0i64;
    let mut r_len = 0i64;
    for (candidate, reference) in pairs {
        let cand = tokenize(candidate);
        let refr = tokenize(reference);
        c_len += cand.len() as i64;
        r_len += refr.len() as i64;
        for n in 1..=4usize {
            let cand_counts = ngram_counts(&cand, n);
            let ref_counts = ngram_counts(&refr, n);
            for (gram, count) in &cand_counts {
                clipped[n - 1] += (*count).min(*ref_counts.get(*gram).unwrap_or(&0));
                total[n - 1] += count;
            }
        }
    }
    let used: Vec<usize> = (0..4).filter(|n| total[*n] > 0).collect();
    if used.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in &used {
        if clipped[*n] == 0 {
            return 0.0;
        }
        log_sum += (clipped[*n] as f64 / total[*n] as f64).ln();
    }
    let geo_mean = (log_sum / used.len() as f64).exp();
    let bp = if c_len < r_len && c_len > 0 { (1.0 - r_len as f64 / c_len as f64).exp() } else { 1.0 };
    bp * geo_mean
}

/// Maximum matching size for exact unigram alignment: sum over distinct
/// tokens of min(candidate count, reference count).
fn max_matches(cand: &[String], refr: &[String]) -> usize {
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for t in cand {
        *cand_counts.entry(t).or_insert(0) += 1;
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in refr {
        *ref_counts.entry(t).or_insert(0) += 1;
    }
    cand_counts
        .iter()
        .map(|(t, c)| (*c).min(*ref_counts.get(t).unwrap_or(&0)))
        .sum()
}

struct ChunkSearch<'a> {
    cand: &'a [String],
    refr: &'a [String],
    target: usize,
    best: usize,
}

impl<'a> ChunkSearch<'a> {
    /// Max additional matches available from cand[pos..] against unused refs.
    fn feasible(&self, pos: usize, ref_used: &[bool]) -> usize {
        let mut avail: HashMap<&str, usize> = HashMap::new();
        for (j, t) in self.refr.iter().enumerate() {
            if !ref_used[j] {
                *avail.entry(t).or_insert(0) += 1;
            }
        }
        let mut suffix: HashMap<&str, usize> = HashMap::new();
        for t in &self.cand[pos..] {
            *suffix.entry(t).or_insert(0) += 1;
        }
        suffix.iter().map(|(t, c)| (*c).min(*avail.get(t).unwrap_or(&0))).sum()
    }

    fn search(&mut self, pos: usize, ref_used: &mut Vec<bool>, matched: usize, chunks: usize) {
        if matched == self.target {
            self.best = self.best.min(chunks);
            return;
        }
        if pos >= self.cand.len() || chunks + 1 >= self.best {
            return;
        }
        if matched + self.feasible(pos, ref_used) < self.target {
            return;
        }

        // Start a block here, longest extensions first.
        let mut starts: Vec<(usize, usize)> = Vec::new();
        for j in 0..self.refr.len() {
            if ref_used[j] || self.refr[j] != self.cand[pos] {
                continue;
            }
            let mut len = 1;
            while pos + len < self.cand.len()
                && j + len < self.refr.len()
                && !ref_used[j + len]
                && self.cand[pos + len] == self.refr[j + len]
            {
                len += 1;
            }
            starts.push((j, len));
        }
        starts.sort_by_key(|&(_, len)| std::cmp::Reverse(len));
        for (j, max_len) in starts {
            for len in (1..=max_len).rev() {
                for k in 0..len {
                    ref_used[j + k] = true;
                }
                self.search(pos + len, ref_used, matched + len, chunks + 1);
                for k in 0..len {
                    ref_used[j + k] = false;
                }
            }
        }

        // Leave cand[pos] unmatched.
        self.search(pos + 1, ref_used, matched, chunks);
    }
}

/// Alignment statistics for METEOR: (matches, minimal chunk count) over all
/// maximum-cardinality exact unigram alignments.
fn alignment_stats(cand: &[String], refr: &[String]) -> (usize, usize) {
    let m = max_matches(cand, refr);
    if m == 0 {
        return (0, 0);
    }
    // m singleton blocks always realize a maximum matching, so m bounds chunks.
    let mut search = ChunkSearch { cand, refr, target: m, best: m };
    let mut ref_used = vec![false; refr.len()];
    search.search(0, &mut ref_used, 0, 0);
    (m, search.best)
}

/// METEOR in its original exact-match formulation: recall-weighted harmonic
/// mean F = 10PR/(R+9P) discounted by the fragmentation penalty
/// 0.5*(chunks/matches)^3. Zero when nothing aligns.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let (m, chunks) = alignment_stats(&cand, &refr);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / refr.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f_mean * (1.0 - penalty)
}
