//! Generation metrics (corpus BLEU-1..4, ROUGE-L, METEOR-lite), addressee
//! deduction accuracy, and the heuristic addressee baselines.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::LabelMap;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("hypothesis/reference count mismatch: {hyps} vs {refs}")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("max_n must be 1..=4, got {0}")]
    BadOrder(usize),
    #[error("empty reference at example {0}")]
    EmptyReference(usize),
    #[error("gold map is empty")]
    EmptyGold,
    #[error("utterance 0 has no previous utterance")]
    NoCandidates,
    #[error("no examples to score")]
    NoExamples,
}

pub type Tokens = Vec<String>;

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub addressee_accuracy: Option<f64>,
    pub n_examples: usize,
}

impl EvalReport {
    pub fn compute(hyps: &[Tokens], refs: &[Tokens]) -> Result<EvalReport, MetricsError> {
        if hyps.is_empty() {
            return Err(MetricsError::NoExamples);
        }
        Ok(EvalReport {
            bleu_1: bleu(hyps, refs, 1)?,
            bleu_2: bleu(hyps, refs, 2)?,
            bleu_3: bleu(hyps, refs, 3)?,
            bleu_4: bleu(hyps, refs, 4)?,
            meteor: meteor_lite(hyps, refs)?,
            rouge_l: rouge_l(hyps, refs)?,
            addressee_accuracy: None,
            n_examples: hyps.len(),
        })
    }

    /// Text table in the conventional column order.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str("metric    BLEU-1   BLEU-2   BLEU-3   BLEU-4   METEOR   ROUGE_L\n");
        s.push_str(&format!(
            "score     {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4}\n",
            self.bleu_1, self.bleu_2, self.bleu_3, self.bleu_4, self.meteor, self.rouge_l
        ));
        if let Some(acc) = self.addressee_accuracy {
            s.push_str(&format!("addressee accuracy: {acc:.4}\n"));
        }
        s
    }
}

fn check_pairs(hyps: &[Tokens], refs: &[Tokens]) -> Result<(), MetricsError> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    for (i, r) in refs.iter().enumerate() {
        if r.is_empty() {
            return Err(MetricsError::EmptyReference(i));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

/// Corpus-level BLEU up to `max_n`: clipped modified n-gram precisions under
/// a geometric mean, with the brevity penalty `exp(1 - ref_len/hyp_len)`
/// applied when the hypothesis side is shorter. A zero precision at any
/// order zeroes the score.
pub fn bleu(hyps: &[Tokens], refs: &[Tokens], max_n: usize) -> Result<f64, MetricsError> {
    if !(1..=4).contains(&max_n) {
        return Err(MetricsError::BadOrder(max_n));
    }
    check_pairs(hyps, refs)?;

    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;

    for (hyp, rf) in hyps.iter().zip(refs) {
        hyp_len += hyp.len();
        ref_len += rf.len();
        for n in 1..=max_n {
            if hyp.len() < n {
                continue;
            }
            let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
            if rf.len() >= n {
                for gram in rf.windows(n) {
                    *ref_counts.entry(gram).or_insert(0) += 1;
                }
            }
            let mut hyp_counts: HashMap<&[String], usize> = HashMap::new();
            for gram in hyp.windows(n) {
                *hyp_counts.entry(gram).or_insert(0) += 1;
            }
            for (gram, count) in hyp_counts {
                totals[n - 1] += count;
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
        }
    }

    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        if matches[n] == 0 || totals[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matches[n] as f64 / totals[n] as f64).ln();
    }
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * (log_sum / max_n as f64).exp())
}

// ---------------------------------------------------------------------------
// ROUGE-L
// ---------------------------------------------------------------------------

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

const ROUGE_BETA: f64 = 1.2;

pub fn rouge_l_pair(hyp: &[String], rf: &[String]) -> f64 {
    if hyp.is_empty() || rf.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(hyp, rf) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / hyp.len() as f64;
    let r = lcs / rf.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean LCS-based F-score over examples (beta = 1.2).
pub fn rouge_l(hyps: &[Tokens], refs: &[Tokens]) -> Result<f64, MetricsError> {
    check_pairs(hyps, refs)?;
    let sum: f64 = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| rouge_l_pair(h, r))
        .sum();
    Ok(sum / hyps.len().max(1) as f64)
}

// ---------------------------------------------------------------------------
// METEOR-lite
// ---------------------------------------------------------------------------

/// Light stemmer used by the METEOR-lite stage-two matcher: strips one
/// common English suffix when enough stem remains.
fn stem(token: &str) -> &str {
    for suffix in ["ing", "ed", "ly", "es", "s"] {
        if token.len() > suffix.len() + 2 {
            if let Some(stripped) = token.strip_suffix(suffix) {
                return stripped;
            }
        }
    }
    token
}

/// Unigram alignment score: exact matches first, then suffix-stem matches;
/// `F_mean = 10PR / (R + 9P)` discounted by the chunk fragmentation penalty
/// `0.5 * (chunks/matches)^3`.
pub fn meteor_lite_pair(hyp: &[String], rf: &[String]) -> f64 {
    if hyp.is_empty() || rf.is_empty() {
        return 0.0;
    }
    let mut hyp_to_ref: Vec<Option<usize>> = vec![None; hyp.len()];
    let mut ref_used = vec![false; rf.len()];
    // stage 1: exact
    for (h, tok) in hyp.iter().enumerate() {
        for (r, rtok) in rf.iter().enumerate() {
            if !ref_used[r] && tok == rtok {
                hyp_to_ref[h] = Some(r);
                ref_used[r] = true;
                break;
            }
        }
    }
    // stage 2: stem
    for (h, tok) in hyp.iter().enumerate() {
        if hyp_to_ref[h].is_some() {
            continue;
        }
        for (r, rtok) in rf.iter().enumerate() {
            if !ref_used[r] && stem(tok) == stem(rtok) {
                hyp_to_ref[h] = Some(r);
                ref_used[r] = true;
                break;
            }
        }
    }
    let matches = hyp_to_ref.iter().flatten().count() as f64;
    if matches == 0.0 {
        return 0.0;
    }
    let p = matches / hyp.len() as f64;
    let r = matches / rf.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    // chunks: maximal runs of consecutive hyp positions aligned to
    // consecutive ref positions
    let mut chunks = 0usize;
    let mut prev: Option<(usize, usize)> = None;
    for (h, r) in hyp_to_ref.iter().enumerate().filter_map(|(h, r)| r.map(|r| (h, r))) {
        let adjacent = matches!(prev, Some((ph, pr)) if h == ph + 1 && r == pr + 1);
        if !adjacent {
            chunks += 1;
        }
        prev = Some((h, r));
    }
    let penalty = 0.5 * (chunks as f64 / matches).powi(3);
    f_mean * (1.0 - penalty)
}

pub fn meteor_lite(hyps: &[Tokens], refs: &[Tokens]) -> Result<f64, MetricsError> {
    check_pairs(hyps, refs)?;
    let sum: f64 = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| meteor_lite_pair(h, r))
        .sum();
    Ok(sum / hyps.len().max(1) as f64)
}

// ---------------------------------------------------------------------------
// Addressee deduction accuracy and baselines
// ---------------------------------------------------------------------------

/// Exact-match fraction over the gold entries; a missing prediction counts
/// as wrong.
pub fn addressee_accuracy(predicted: &LabelMap, gold: &LabelMap) -> Result<f64, MetricsError> {
    let total: usize = gold.values().map(|g| g.len()).sum();
    if total == 0 {
        return Err(MetricsError::EmptyGold);
    }
    let mut correct = 0usize;
    for (id, per_utt) in gold {
        for (utt, j) in per_utt {
            if predicted.get(id).and_then(|p| p.get(utt)) == Some(j) {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Random-choice baseline: a previous utterance drawn uniformly.
pub fn heuristic_random(i: usize, rng: &mut ChaCha8Rng) -> Result<usize, MetricsError> {
    if i == 0 {
        return Err(MetricsError::NoCandidates);
    }
    Ok(rng.random_range(0..i))
}

/// Preceding-utterance baseline: always `i - 1`.
pub fn heuristic_preceding(i: usize) -> Result<usize, MetricsError> {
    if i == 0 {
        return Err(MetricsError::NoCandidates);
    }
    Ok(i - 1)
}

/// Applies [`heuristic_random`] to every gold entry, in deterministic
/// (sorted) order under a fixed seed.
pub fn random_baseline(gold: &LabelMap, seed: u64) -> Result<LabelMap, MetricsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = LabelMap::new();
    for (id, per_utt) in gold {
        for &utt in per_utt.keys() {
            let j = heuristic_random(utt, &mut rng)?;
            out.entry(id.clone()).or_default().insert(utt, j);
        }
    }
    Ok(out)
}

pub fn preceding_baseline(gold: &LabelMap) -> Result<LabelMap, MetricsError> {
    let mut out = LabelMap::new();
    for (id, per_utt) in gold {
        for &utt in per_utt.keys() {
            let j = heuristic_preceding(utt)?;
            out.entry(id.clone()).or_default().insert(utt, j);
        }
    }
    Ok(out)
}

/// Analytic accuracy of the uniform-random baseline: the mean over gold
/// entries of one over the candidate count (utterance `i` has `i`
/// candidates).
pub fn expected_random_accuracy(gold: &LabelMap) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for per_utt in gold.values() {
        for &utt in per_utt.keys() {
            if utt == 0 {
                return Err(MetricsError::NoCandidates);
            }
            sum += 1.0 / utt as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyGold);
    }
    Ok(sum / count as f64)
}
