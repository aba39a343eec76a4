use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::tokenize::{is_space, split_spaces};
use crate::{Error, Result};

pub const CHAR_ORDER: usize = 6;
pub const WORD_ORDER: usize = 2;
pub const BETA: u32 = 2;
const ORDERS: usize = CHAR_ORDER + WORD_ORDER;

const PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Hypothesis, reference and match counts per n-gram order: six character
/// orders followed by two word orders.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChrFStats {
    pub counts: [[usize; 3]; ORDERS],
}

impl std::ops::AddAssign for ChrFStats {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.counts.iter_mut().zip(rhs.counts) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChrFScore {
    /// 0..=100.
    pub score: f64,
    pub char_order: usize,
    pub word_order: usize,
    pub beta: u32,
}

fn counter<K: Eq + Hash>(items: impl Iterator<Item = K>) -> HashMap<K, usize> {
    let mut map = HashMap::new();
    for k in items {
        *map.entry(k).or_insert(0) += 1;
    }
    map
}

fn match_counts<K: Eq + Hash>(hyp: &HashMap<K, usize>, reference: &HashMap<K, usize>) -> [usize; 3] {
    let mut matched = 0;
    let mut hyp_count = 0;
    for (gram, &count) in hyp {
        hyp_count += count;
        if let Some(&r) = reference.get(gram) {
            matched += count.min(r);
        }
    }
    // an empty reference side contributes no hypothesis n-grams either
    let hyp_count = if reference.is_empty() { 0 } else { hyp_count };
    [hyp_count, reference.values().sum(), matched]
}

/// Words with one leading or trailing ASCII punctuation mark split off.
fn split_punctuation(sentence: &str) -> Vec<&str> {
    let is_punct = |c: char| PUNCTUATION.contains(c);
    let mut out = Vec::new();
    for w in split_spaces(sentence) {
        let mut chars = w.chars();
        let first = chars.next().expect("non-empty word");
        let last = chars.next_back();
        match last {
            None => out.push(w),
            Some(last) if is_punct(last) => {
                let cut = w.len() - last.len_utf8();
                out.push(&w[..cut]);
                out.push(&w[cut..]);
            }
            Some(_) if is_punct(first) => {
                out.push(&w[..1]);
                out.push(&w[1..]);
            }
            Some(_) => out.push(w),
        }
    }
    out
}

struct Grams {
    chars: Vec<HashMap<Vec<char>, usize>>,
    words: Vec<HashMap<String, usize>>,
}

fn extract(sentence: &str) -> Grams {
    let chars: Vec<char> = sentence.chars().filter(|&c| !is_space(c)).collect();
    let words = split_punctuation(sentence);
    Grams {
        chars: (1..=CHAR_ORDER)
            .map(|n| counter(chars.windows(n).map(<[char]>::to_vec)))
            .collect(),
        words: (1..=WORD_ORDER)
            .map(|n| counter(words.windows(n).map(|w| w.join(" "))))
            .collect(),
    }
}

pub fn segment_stats(hypothesis: &str, reference: &str) -> ChrFStats {
    let h = extract(hypothesis);
    let r = extract(reference);
    let mut stats = ChrFStats::default();
    for n in 0..CHAR_ORDER {
        stats.counts[n] = match_counts(&h.chars[n], &r.chars[n]);
    }
    for n in 0..WORD_ORDER {
        stats.counts[CHAR_ORDER + n] = match_counts(&h.words[n], &r.words[n]);
    }
    stats
}

/// F-beta over precision and recall averaged across the orders for which
/// both sides have n-grams.
pub fn score_from_stats(stats: &ChrFStats) -> ChrFScore {
    let factor = f64::from(BETA * BETA);
    let mut avg_prec = 0.0;
    let mut avg_rec = 0.0;
    let mut effective = 0usize;
    for &[n_hyp, n_ref, n_match] in &stats.counts {
        if n_hyp > 0 && n_ref > 0 {
            avg_prec += n_match as f64 / n_hyp as f64;
            avg_rec += n_match as f64 / n_ref as f64;
            effective += 1;
        }
    }
    let score = if effective == 0 {
        0.0
    } else {
        avg_prec /= effective as f64;
        avg_rec /= effective as f64;
        if avg_prec + avg_rec > 0.0 {
            100.0 * (1.0 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec)
        } else {
            0.0
        }
    };
    ChrFScore {
        score,
        char_order: CHAR_ORDER,
        word_order: WORD_ORDER,
        beta: BETA,
    }
}

pub fn corpus_stats<S: AsRef<str>>(hypotheses: &[S], references: &[S]) -> Result<ChrFStats> {
    if hypotheses.len() != references.len() {
        return Err(Error::Domain(format!(
            "alignment error: {} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::Domain("cannot score an empty corpus".into()));
    }
    let mut total = ChrFStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total += segment_stats(h.as_ref(), r.as_ref());
    }
    Ok(total)
}

/// Corpus chrF++ (character order 6, word order 2, beta 2).
pub fn chrf_corpus<S: AsRef<str>>(hypotheses: &[S], references: &[S]) -> Result<ChrFScore> {
    Ok(score_from_stats(&corpus_stats(hypotheses, references)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_100() {
        let refs = ["Der Hund bellt.", "Zweiter Satz, etwas länger!"];
        assert_eq!(chrf_corpus(&refs, &refs).unwrap().score, 100.0);
    }

    #[test]
    fn empty_hypotheses_score_zero() {
        assert_eq!(chrf_corpus(&["", ""], &["abc", "de"]).unwrap().score, 0.0);
    }

    #[test]
    fn punctuation_split() {
        assert_eq!(split_punctuation("Hello, (world) ! x"), ["Hello", ",", "(world", ")", "!", "x"]);
        assert_eq!(split_punctuation("\"quoted"), ["\"", "quoted"]);
        assert_eq!(split_punctuation("ünï."), ["ünï", "."]);
    }

    #[test]
    fn empty_reference_zeroes_hypothesis_counts() {
        let s = segment_stats("abc", "");
        assert!(s.counts.iter().all(|c| *c == [0, 0, 0]));
    }

    #[test]
    fn stats_are_additive() {
        let mut a = segment_stats("the cat", "a cat");
        a += segment_stats("dog", "dogs");
        assert_eq!(a, corpus_stats(&["the cat", "dog"], &["a cat", "dogs"]).unwrap());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(chrf_corpus(&["a"], &["a", "b"]).is_err());
    }
}
