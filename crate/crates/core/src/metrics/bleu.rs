use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::{split_spaces, tokenize_batch, TokenizerKind};
use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU. Statistics of disjoint corpora
/// add up, so scoring can be split across workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub hypothesis_length: usize,
    pub reference_length: usize,
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, rhs: Self) {
        self.hypothesis_length += rhs.hypothesis_length;
        self.reference_length += rhs.reference_length;
        for n in 0..MAX_ORDER {
            self.matches[n] += rhs.matches[n];
            self.totals[n] += rhs.totals[n];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// 0..=100.
    pub score: f64,
    /// Per-order precisions in 0..=1, after smoothing.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hypothesis_length: usize,
    pub reference_length: usize,
    /// Set when every hypothesis is empty.
    pub empty_hypotheses: bool,
}

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str]) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    for n in 1..=MAX_ORDER {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Statistics for one pre-tokenized (space-joined) segment pair.
pub fn segment_stats(hypothesis: &str, reference: &str) -> BleuStats {
    let hyp: Vec<&str> = split_spaces(hypothesis).collect();
    let reference: Vec<&str> = split_spaces(reference).collect();
    let ref_counts = ngram_counts(&reference);
    let mut stats = BleuStats {
        hypothesis_length: hyp.len(),
        reference_length: reference.len(),
        ..Default::default()
    };
    for (gram, count) in ngram_counts(&hyp) {
        let n = gram.len() - 1;
        stats.totals[n] += count;
        if let Some(&r) = ref_counts.get(gram) {
            stats.matches[n] += count.min(r);
        }
    }
    stats
}

/// Final score from aggregated statistics, using the toolkit's default
/// exponential smoothing: the k-th order with zero matches gets precision
/// 1 / (2^k * total).
pub fn score_from_stats(stats: &BleuStats) -> BleuScore {
    let c = stats.hypothesis_length;
    let r = stats.reference_length;
    let brevity_penalty = if c < r {
        if c > 0 {
            (1.0 - r as f64 / c as f64).exp()
        } else {
            0.0
        }
    } else {
        1.0
    };
    let mut precisions = [0.0; MAX_ORDER];
    let mut score = 0.0;
    if stats.matches.iter().any(|&m| m > 0) {
        let mut smooth = 1.0;
        for n in 0..MAX_ORDER {
            let total = stats.totals[n];
            if total == 0 {
                break;
            }
            precisions[n] = if stats.matches[n] == 0 {
                smooth *= 2.0;
                1.0 / (smooth * total as f64)
            } else {
                stats.matches[n] as f64 / total as f64
            };
        }
        // Working with fractions rather than percentages keeps a perfect
        // match at exactly 100; the toolkit lands a few ulps above it.
        if precisions.iter().all(|&p| p > 0.0) {
            let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            score = 100.0 * brevity_penalty * mean_log.exp();
        }
    }
    BleuScore {
        score,
        precisions,
        brevity_penalty,
        hypothesis_length: c,
        reference_length: r,
        empty_hypotheses: c == 0,
    }
}

fn check_lengths(hypotheses: usize, references: usize) -> Result<()> {
    if hypotheses != references {
        return Err(Error::Domain(format!(
            "alignment error: {hypotheses} hypotheses but {references} references"
        )));
    }
    if hypotheses == 0 {
        return Err(Error::Domain("cannot score an empty corpus".into()));
    }
    Ok(())
}

pub fn corpus_stats<S: AsRef<str>>(hypotheses: &[S], references: &[S], kind: &TokenizerKind) -> Result<BleuStats> {
    check_lengths(hypotheses.len(), references.len())?;
    // trailing whitespace is stripped before tokenization, as the toolkit does
    let prep = |lines: &[S]| -> Vec<String> {
        lines
            .iter()
            .map(|l| l.as_ref().trim_end_matches(super::tokenize::is_space).to_string())
            .collect()
    };
    let hyp = prep(hypotheses);
    let refs = prep(references);
    let hyp_tok = tokenize_batch(&hyp.iter().map(String::as_str).collect::<Vec<_>>(), kind)?;
    let ref_tok = tokenize_batch(&refs.iter().map(String::as_str).collect::<Vec<_>>(), kind)?;
    let mut total = BleuStats::default();
    for (h, r) in hyp_tok.iter().zip(&ref_tok) {
        total += segment_stats(h, r);
    }
    Ok(total)
}

/// Corpus BLEU against a single reference per segment.
pub fn bleu_corpus<S: AsRef<str>>(hypotheses: &[S], references: &[S], kind: &TokenizerKind) -> Result<BleuScore> {
    Ok(score_from_stats(&corpus_stats(hypotheses, references, kind)?))
}
