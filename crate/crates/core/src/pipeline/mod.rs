//! Iterative translation strategies over a sampled test set.
//!
//! A run translates every instance once, then hands the same base
//! translations to each refinement strategy. Strategies are independent of
//! each other after the base. Within a strategy, iterations of one segment
//! are sequential while segments run on a bounded worker pool.

mod experiment;
mod runner;
mod scoring;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use experiment::{
    rebuild_report, run_experiment, Artifacts, Exclusion, Experiment, ExperimentOutcome, Mode, RunManifest,
    ARTIFACT_FILES,
};
pub use runner::{base_translations, refine_external, run_refinement, run_translate, RunContext, TRANSLATE_BASE};
pub use scoring::{ids_digest, IterationScores, ScoreSheet, Scorers};
pub use trace::{read_traces, write_traces, RefinementTrace, TraceStep};

use crate::corpus::SampledSet;
use crate::prompts::PromptKind;
use crate::rng::SeededRng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: PromptKind,
    /// Number of refinement calls T; zero for the base translation.
    pub iterations: u32,
}

impl Strategy {
    pub const DEFAULT_ITERATIONS: u32 = 4;

    pub fn translate() -> Self {
        Strategy {
            kind: PromptKind::Translate,
            iterations: 0,
        }
    }

    pub fn new(kind: PromptKind, iterations: u32) -> Self {
        Strategy { kind, iterations }
    }

    pub fn validate(&self, max_iterations: u32) -> Result<()> {
        match self.kind {
            PromptKind::Translate if self.iterations != 0 => {
                Err(Error::Config("translate has no iterations".into()))
            }
            PromptKind::Translate => Ok(()),
            _ if self.iterations == 0 || self.iterations > max_iterations => Err(Error::Config(format!(
                "{}: iterations must be in 1..={max_iterations}, got {}",
                self.kind, self.iterations
            ))),
            _ => Ok(()),
        }
    }
}

/// Corpus metric that picks the best refinement iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    #[default]
    Qe,
    Da,
    Bleu,
    Chrf,
}

impl SelectionMetric {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMetric::Qe => "qe",
            SelectionMetric::Da => "da",
            SelectionMetric::Bleu => "bleu",
            SelectionMetric::Chrf => "chrf",
        }
    }
}

/// Index (1-based) of the highest score; the earliest wins ties.
pub fn select_best_iteration(scores: &[f64]) -> Result<u32> {
    if scores.is_empty() {
        return Err(Error::Scoring("no iteration scores to select from".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Scoring(format!("non-finite score at iteration {}", i + 1)));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best as u32 + 1)
}

/// Name of the random-target policy, recorded in run manifests.
pub const RANDOM_TARGET_POLICY: &str = "derangement-of-references";

/// Gives every instance the reference of a different instance, chosen by a
/// seeded derangement over the sample order.
pub fn assign_random_targets(set: &SampledSet, reference: &str, seed: u64) -> Result<BTreeMap<usize, String>> {
    let n = set.instances.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "random targets need at least two instances, the sample has {n}"
        )));
    }
    let texts: Vec<&str> = set
        .instances
        .iter()
        .map(|inst| {
            inst.reference(reference).ok_or_else(|| {
                Error::Domain(format!("instance {} has no reference `{reference}`", inst.id))
            })
        })
        .collect::<Result<_>>()?;
    let perm = SeededRng::new(seed).derangement(n);
    Ok(set
        .instances
        .iter()
        .zip(perm)
        .map(|(inst, j)| (inst.id, texts[j].to_string()))
        .collect())
}
