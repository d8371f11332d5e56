//! Text-overlap scores: BLEU-4 with clipped n-gram precision and brevity
//! penalty, ROUGE-L F1 via longest common subsequence, and a METEOR-style
//! unigram F-mean with a fragmentation penalty (exact matching only, no
//! synonym resources).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextOverlapScores {
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub avg_tokens: f64,
}

fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], u64> {
    let mut counts: HashMap<&[&str], u64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_default() += 1;
        }
    }
    counts
}

/// Modified (clipped) n-gram precision of a hypothesis against references.
pub fn modified_precision(hypothesis: &str, references: &[&str], n: usize) -> f64 {
    let hyp = words(hypothesis);
    let hyp_counts = ngram_counts(&hyp, n);
    let total: u64 = hyp_counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let ref_tokens: Vec<Vec<&str>> = references.iter().map(|r| words(r)).collect();
    let ref_counts: Vec<HashMap<&[&str], u64>> =
        ref_tokens.iter().map(|t| ngram_counts(t, n)).collect();
    let mut clipped = 0u64;
    for (gram, count) in &hyp_counts {
        let max_ref = ref_counts
            .iter()
            .map(|c| c.get(gram).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        clipped += (*count).min(max_ref);
    }
    clipped as f64 / total as f64
}

/// BLEU-4: geometric mean of clipped 1..4-gram precisions times the brevity
/// penalty (closest reference length). Zero when any precision is zero.
pub fn bleu(hypothesis: &str, references: &[&str]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::invalid("BLEU requires at least one reference"));
    }
    let c = words(hypothesis).len();
    if c == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let p = modified_precision(hypothesis, references, n);
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    // effective reference length: closest to the hypothesis length
    let r = references
        .iter()
        .map(|r| words(r).len())
        .min_by_key(|len| ((*len as i64) - c as i64).abs())
        .expect("non-empty references");
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok(bp * (log_sum / 4.0).exp())
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut dp = vec![0usize; b.len() + 1];
    for &wa in a {
        let mut prev = 0;
        for (j, &wb) in b.iter().enumerate() {
            let tmp = dp[j + 1];
            dp[j + 1] = if wa == wb {
                prev + 1
            } else {
                dp[j + 1].max(dp[j])
            };
            prev = tmp;
        }
    }
    dp[b.len()]
}

/// ROUGE-L F1 against the best-matching reference.
pub fn rouge_l_f1(hypothesis: &str, references: &[&str]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::invalid("ROUGE-L requires at least one reference"));
    }
    let hyp = words(hypothesis);
    if hyp.is_empty() {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for r in references {
        let rt = words(r);
        if rt.is_empty() {
            continue;
        }
        let lcs = lcs_len(&hyp, &rt) as f64;
        if lcs == 0.0 {
            continue;
        }
        let p = lcs / hyp.len() as f64;
        let rec = lcs / rt.len() as f64;
        best = best.max(2.0 * p * rec / (p + rec));
    }
    Ok(best)
}

/// METEOR-style score: exact unigram matches scored by the recall-weighted
/// harmonic mean 10PR/(R+9P), discounted by a fragmentation penalty
/// 0.5 (chunks/matches)^3. Best reference wins.
pub fn meteor_style(hypothesis: &str, references: &[&str]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::invalid("METEOR requires at least one reference"));
    }
    let hyp = words(hypothesis);
    if hyp.is_empty() {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for r in references {
        let rt = words(r);
        if rt.is_empty() {
            continue;
        }
        // greedy in-order alignment: each hypothesis token takes the first
        // unmatched identical reference token
        let mut taken = vec![false; rt.len()];
        let mut alignment: Vec<Option<usize>> = Vec::with_capacity(hyp.len());
        for &w in &hyp {
            let slot = rt
                .iter()
                .enumerate()
                .position(|(j, &rw)| rw == w && !taken[j]);
            if let Some(j) = slot {
                taken[j] = true;
                alignment.push(Some(j));
            } else {
                alignment.push(None);
            }
        }
        let m = alignment.iter().flatten().count() as f64;
        if m == 0.0 {
            continue;
        }
        // chunks: maximal runs of matches that are contiguous in both sides
        let mut chunks = 0u64;
        let mut prev: Option<usize> = None;
        for slot in &alignment {
            match (slot, prev) {
                (Some(j), Some(p)) if *j == p + 1 => {}
                (Some(_), _) => chunks += 1,
                (None, _) => {}
            }
            prev = *slot;
        }
        let p = m / hyp.len() as f64;
        let rec = m / rt.len() as f64;
        let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
        let penalty = 0.5 * (chunks as f64 / m).powi(3);
        best = best.max(f_mean * (1.0 - penalty));
    }
    Ok(best)
}

/// All overlap scores for one hypothesis. `avg_tokens` is the hypothesis
/// token count; corpus-level callers average these.
pub fn text_overlap(hypothesis: &str, references: &[&str]) -> Result<TextOverlapScores> {
    Ok(TextOverlapScores {
        bleu: bleu(hypothesis, references)?,
        rouge_l: rouge_l_f1(hypothesis, references)?,
        meteor: meteor_style(hypothesis, references)?,
        avg_tokens: words(hypothesis).len() as f64,
    })
}

/// Mean overlap scores over (hypothesis, reference) pairs.
pub fn text_overlap_corpus(pairs: &[(String, String)]) -> Result<TextOverlapScores> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty overlap corpus"));
    }
    let mut acc = TextOverlapScores {
        bleu: 0.0,
        rouge_l: 0.0,
        meteor: 0.0,
        avg_tokens: 0.0,
    };
    for (hyp, reference) in pairs {
        let s = text_overlap(hyp, &[reference.as_str()])?;
        acc.bleu += s.bleu;
        acc.rouge_l += s.rouge_l;
        acc.meteor += s.meteor;
        acc.avg_tokens += s.avg_tokens;
    }
    let n = pairs.len() as f64;
    acc.bleu /= n;
    acc.rouge_l /= n;
    acc.meteor /= n;
    acc.avg_tokens /= n;
    Ok(acc)
}
