use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trace::RefinementTrace;
use super::SelectionMetric;
use crate::corpus::{SampledSet, TestInstance};
use crate::metrics::{bleu_corpus, chrf_corpus, NeuralScorer, TokenizerKind};
use crate::prompts::PromptKind;
use crate::{Error, Result};

/// Corpus scores of one candidate slot across the scored instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationScores {
    pub base: String,
    /// `Translate` for the base translation itself.
    pub strategy: PromptKind,
    pub iteration: u32,
    pub segments: usize,
    /// Digest of the scored instance ids.
    pub sample_digest: String,
    pub bleu: Option<f64>,
    pub chrf: Option<f64>,
    pub da: Option<f64>,
    pub qe: Option<f64>,
}

impl IterationScores {
    pub fn metric(&self, metric: SelectionMetric) -> Option<f64> {
        match metric {
            SelectionMetric::Qe => self.qe,
            SelectionMetric::Da => self.da,
            SelectionMetric::Bleu => self.bleu,
            SelectionMetric::Chrf => self.chrf,
        }
    }
}

/// Every score of a run, at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub pair: String,
    pub reference: String,
    pub instance_ids: Vec<usize>,
    pub sample_digest: String,
    /// QE of the reference translations against the sources.
    pub reference_qe: Option<f64>,
    pub records: Vec<IterationScores>,
}

impl ScoreSheet {
    pub fn record(&self, base: &str, strategy: PromptKind, iteration: u32) -> Option<&IterationScores> {
        self.records
            .iter()
            .find(|r| r.base == base && r.strategy == strategy && r.iteration == iteration)
    }
}

pub fn ids_digest(ids: &[usize]) -> String {
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update((*id as u64).to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

pub struct Scorers {
    /// `None` disables BLEU and chrF++.
    pub tokenizer: Option<TokenizerKind>,
    pub reference: String,
    pub da: Option<NeuralScorer>,
    pub qe: Option<NeuralScorer>,
}

impl Scorers {
    /// References of all instances, or `None` if no instance has one.
    fn references<'a>(&self, instances: &[&'a TestInstance]) -> Result<Option<Vec<&'a str>>> {
        let refs: Vec<Option<&str>> = instances.iter().map(|i| i.reference(&self.reference)).collect();
        if refs.iter().all(Option::is_none) {
            return Ok(None);
        }
        refs.iter()
            .zip(instances)
            .map(|(r, inst)| {
                r.ok_or_else(|| {
                    Error::Scoring(format!("instance {} lacks reference `{}`", inst.id, self.reference))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn score(
        &self,
        instances: &[&TestInstance],
        hypotheses: &[&str],
        base: &str,
        strategy: PromptKind,
        iteration: u32,
    ) -> Result<IterationScores> {
        let ids: Vec<usize> = instances.iter().map(|i| i.id).collect();
        let sources: Vec<&str> = instances.iter().map(|i| i.source.as_str()).collect();
        let refs = self.references(instances)?;
        let (bleu, chrf) = match (&self.tokenizer, &refs) {
            (Some(tok), Some(r)) => (
                Some(bleu_corpus(hypotheses, r, tok)?.score),
                Some(chrf_corpus(hypotheses, r)?.score),
            ),
            _ => (None, None),
        };
        let da = match (&self.da, &refs) {
            (Some(scorer), Some(r)) => Some(scorer.score(&sources, hypotheses, Some(r))?.mean),
            _ => None,
        };
        let qe = match &self.qe {
            Some(scorer) => Some(scorer.score(&sources, hypotheses, None)?.mean),
            None => None,
        };
        Ok(IterationScores {
            base: base.to_string(),
            strategy,
            iteration,
            segments: instances.len(),
            sample_digest: ids_digest(&ids),
            bleu,
            chrf,
            da,
            qe,
        })
    }

    /// Scores the base and every iteration of every strategy found in
    /// `traces`, over the sample minus `excluded`.
    pub fn score_traces(
        &self,
        set: &SampledSet,
        traces: &[RefinementTrace],
        excluded: &BTreeSet<usize>,
    ) -> Result<ScoreSheet> {
        let mut instances: Vec<&TestInstance> =
            set.instances.iter().filter(|i| !excluded.contains(&i.id)).collect();
        instances.sort_by_key(|i| i.id);
        if instances.is_empty() {
            return Err(Error::Scoring("every instance was excluded".into()));
        }
        let ids: Vec<usize> = instances.iter().map(|i| i.id).collect();

        // (base, strategy) groups in order of first appearance
        let mut groups: Vec<(String, PromptKind)> = Vec::new();
        let mut index: BTreeMap<(String, PromptKind), BTreeMap<usize, &RefinementTrace>> = BTreeMap::new();
        for t in traces {
            let key = (t.base.clone(), t.strategy);
            if !index.contains_key(&key) {
                groups.push(key.clone());
            }
            index.entry(key).or_default().insert(t.instance_id, t);
        }

        let lookup = |key: &(String, PromptKind), iteration: u32| -> Result<Vec<&str>> {
            let by_id = &index[key];
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id)
                        .and_then(|t| t.candidate(iteration))
                        .ok_or_else(|| {
                            Error::Comparability(format!(
                                "{}/{} has no iteration {iteration} for instance {id}",
                                key.0, key.1
                            ))
                        })
                })
                .collect()
        };

        let mut records = Vec::new();
        let mut bases_done = BTreeSet::new();
        for key in &groups {
            if bases_done.insert(key.0.clone()) {
                // the base translation, taken from the first group that has it
                let hyps = lookup(key, 0)?;
                records.push(self.score(&instances, &hyps, &key.0, PromptKind::Translate, 0)?);
            }
            if key.1 == PromptKind::Translate {
                continue;
            }
            let depth = index[key].values().map(|t| t.candidates.len()).max().unwrap_or(1) as u32 - 1;
            for iteration in 1..=depth {
                let hyps = lookup(key, iteration)?;
                records.push(self.score(&instances, &hyps, &key.0, key.1, iteration)?);
            }
        }

        let reference_qe = match (&self.qe, self.references(&instances)?) {
            (Some(scorer), Some(refs)) => {
                let sources: Vec<&str> = instances.iter().map(|i| i.source.as_str()).collect();
                Some(scorer.score(&sources, &refs, None)?.mean)
            }
            _ => None,
        };
        Ok(ScoreSheet {
            pair: set.pair().map(|p| p.label()).unwrap_or_default(),
            reference: self.reference.clone(),
            sample_digest: ids_digest(&ids),
            instance_ids: ids,
            reference_qe,
            records,
        })
    }
}
