//! Builds campaign specs from pipeline run directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use itref_core::corpus::{read_lines, SampleManifest, SampledSet};
use itref_core::pipeline::{read_traces, Artifacts, RefinementTrace, TRANSLATE_BASE};
use itref_core::prompts::PromptKind;
use serde::{Deserialize, Serialize};

use crate::campaign::{CampaignSpec, SystemTexts, DEFAULT_CAMPAIGN_SIZE};
use crate::error::{EvalError, Result};

fn default_base() -> String {
    TRANSLATE_BASE.to_string()
}

fn default_reference_key() -> String {
    "A".to_string()
}

/// Reads a JSON object keyed by decimal instance ids.
fn id_keyed<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<usize, String>, D::Error> {
    let raw = BTreeMap::<String, String>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse()
                .map(|id| (id, v))
                .map_err(|_| serde::de::Error::custom(format!("`{k}` is not an instance id")))
        })
        .collect()
}

/// Where the texts of one compared system come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSource {
    /// Texts given inline, by instance id.
    Texts {
        label: String,
        #[serde(deserialize_with = "id_keyed")]
        texts: BTreeMap<usize, String>,
    },
    /// Candidates at one iteration of a strategy in the run's traces.
    Trace {
        label: Option<String>,
        #[serde(default = "default_base")]
        base: String,
        strategy: PromptKind,
        iteration: u32,
    },
    /// A human reference stored with the run's sample.
    Reference {
        label: Option<String>,
        #[serde(default = "default_reference_key")]
        key: String,
    },
    /// A file line-aligned with the full test set.
    File { label: String, path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignRequest {
    pub comparison: Option<String>,
    /// Run directory providing the sample, traces and target language.
    pub run_dir: Option<PathBuf>,
    /// Target language name; taken from the run when omitted.
    pub language: Option<String>,
    /// Candidate instance ids; the run's sample when omitted.
    pub ids: Option<Vec<usize>>,
    pub size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub question: Option<String>,
    pub first: SystemSource,
    pub second: SystemSource,
}

struct Run {
    dir: PathBuf,
    set: SampledSet,
    traces: Option<Vec<RefinementTrace>>,
}

impl Run {
    fn open(dir: &Path) -> Result<Self> {
        let manifest = SampleManifest::read(&dir.join(Artifacts::SAMPLE))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            set: manifest.set,
            traces: None,
        })
    }

    fn traces(&mut self) -> Result<&[RefinementTrace]> {
        if self.traces.is_none() {
            self.traces = Some(read_traces(&self.dir.join(Artifacts::TRACES))?);
        }
        Ok(self.traces.as_deref().expect("traces loaded"))
    }
}

fn resolve(source: &SystemSource, run: Option<&mut Run>) -> Result<SystemTexts> {
    let need_run = || EvalError::Validation("this system source needs a run directory".into());
    match source {
        SystemSource::Texts { label, texts } => Ok(SystemTexts {
            label: label.clone(),
            texts: texts.clone(),
        }),
        SystemSource::Trace {
            label,
            base,
            strategy,
            iteration,
        } => {
            let run = run.ok_or_else(need_run)?;
            let texts = run
                .traces()?
                .iter()
                .filter(|t| t.base == *base && t.strategy == *strategy)
                .filter_map(|t| t.candidate(*iteration).map(|c| (t.instance_id, c.to_string())))
                .collect();
            let default_label = if base == TRANSLATE_BASE {
                strategy.label().to_string()
            } else {
                format!("{base}+{}", strategy.label())
            };
            Ok(SystemTexts {
                label: label.clone().unwrap_or(default_label),
                texts,
            })
        }
        SystemSource::Reference { label, key } => {
            let run = run.ok_or_else(need_run)?;
            let texts = run
                .set
                .instances
                .iter()
                .filter_map(|i| i.reference(key).map(|r| (i.id, r.to_string())))
                .collect();
            Ok(SystemTexts {
                label: label.clone().unwrap_or_else(|| format!("Reference_{key}")),
                texts,
            })
        }
        SystemSource::File { label, path } => {
            let run = run.ok_or_else(need_run)?;
            let path = if path.is_relative() { run.dir.join(path) } else { path.clone() };
            let lines = read_lines(&path)?;
            if lines.len() != run.set.population {
                return Err(EvalError::Validation(format!(
                    "{} has {} lines, the test set has {}",
                    path.display(),
                    lines.len(),
                    run.set.population
                )));
            }
            Ok(SystemTexts {
                label: label.clone(),
                texts: run.set.ids().into_iter().map(|id| (id, lines[id].clone())).collect(),
            })
        }
    }
}

/// Resolves a request into a campaign spec.
pub fn build_spec(request: &CampaignRequest) -> Result<CampaignSpec> {
    let mut run = request.run_dir.as_deref().map(Run::open).transpose()?;
    let first = resolve(&request.first, run.as_mut())?;
    let second = resolve(&request.second, run.as_mut())?;
    let language = match (&request.language, &run) {
        (Some(l), _) => l.clone(),
        (None, Some(run)) => run
            .set
            .pair()
            .map(|p| p.target_display_name.clone())
            .ok_or_else(|| EvalError::Validation("run sample is empty".into()))?,
        (None, None) => return Err(EvalError::Validation("language is required without a run".into())),
    };
    let ids = match (&request.ids, &run) {
        (Some(ids), _) => ids.clone(),
        (None, Some(run)) => run.set.ids(),
        (None, None) => return Err(EvalError::Validation("ids are required without a run".into())),
    };
    Ok(CampaignSpec {
        comparison: request.comparison.clone(),
        language,
        ids,
        first,
        second,
        size: request.size.unwrap_or(DEFAULT_CAMPAIGN_SIZE),
        seed: request.seed,
        question: request.question.clone(),
    })
}
