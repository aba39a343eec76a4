//! Campaign construction: a seeded subsample of instances, each shown as
//! two anonymous translations in a seeded order.

use std::collections::{BTreeMap, BTreeSet};

use itref_core::rng::SeededRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EvalError, Result};

pub const DEFAULT_CAMPAIGN_SIZE: usize = 50;

/// Evaluation question; `${language}` is replaced by the target language.
pub const QUESTION_TEMPLATE: &str =
    "Please choose the translation that is more fluent, natural, and reflecting better use of ${language}";

pub fn question_for(template: &str, language: &str) -> String {
    template.replace("${language}", language)
}

/// Outputs of one system, by instance id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemTexts {
    pub label: String,
    pub texts: BTreeMap<usize, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignSpec {
    /// Defaults to "<first> vs <second>".
    pub comparison: Option<String>,
    pub language: String,
    /// Candidate instances, in sample order.
    pub ids: Vec<usize>,
    pub first: SystemTexts,
    pub second: SystemTexts,
    pub size: usize,
    pub seed: u64,
    /// Overrides [`QUESTION_TEMPLATE`].
    pub question: Option<String>,
}

/// One comparison. `first_system`/`second_system` are the hidden labels of
/// the texts in presentation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub index: usize,
    pub instance_id: usize,
    pub first_text: String,
    pub second_text: String,
    pub first_system: String,
    pub second_system: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Campaign {
    pub id: String,
    pub comparison: String,
    pub language: String,
    pub question: String,
    pub seed: u64,
    /// Labels of the two systems, in the order they were given.
    pub systems: [String; 2],
    pub items: Vec<Item>,
}

impl Campaign {
    pub fn size(&self) -> usize {
        self.items.len()
    }

    pub fn item(&self, index: usize) -> Result<&Item> {
        self.items
            .get(index)
            .ok_or_else(|| EvalError::Validation(format!("campaign {} has no item {index}", self.id)))
    }
}

fn check_coverage(system: &SystemTexts, ids: &[usize]) -> Result<()> {
    let missing: Vec<usize> = ids.iter().copied().filter(|id| !system.texts.contains_key(id)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(EvalError::Coverage {
            system: system.label.clone(),
            missing,
        })
    }
}

fn content_id(campaign: &Campaign) -> String {
    let body = serde_json::to_vec(&(&campaign.comparison, &campaign.question, campaign.seed, &campaign.systems, &campaign.items))
        .expect("campaign serializes");
    format!("c{}", hex::encode(&Sha256::digest(&body)[..8]))
}

/// Draws `size` instances and a presentation order for each. The id is a
/// digest of the content, so equal specs give equal campaigns.
pub fn create_campaign(spec: &CampaignSpec) -> Result<Campaign> {
    let (a, b) = (&spec.first, &spec.second);
    if a.label.trim().is_empty() || b.label.trim().is_empty() || a.label == b.label {
        return Err(EvalError::Validation(format!(
            "system labels must be distinct and non-empty, got `{}` and `{}`",
            a.label, b.label
        )));
    }
    if spec.language.trim().is_empty() {
        return Err(EvalError::Validation("target language is empty".into()));
    }
    let unique: BTreeSet<usize> = spec.ids.iter().copied().collect();
    if unique.len() != spec.ids.len() {
        return Err(EvalError::Validation("instance ids contain duplicates".into()));
    }
    if spec.size == 0 || spec.size > spec.ids.len() {
        return Err(EvalError::Validation(format!(
            "campaign size must be in 1..={}, got {}",
            spec.ids.len(),
            spec.size
        )));
    }
    check_coverage(a, &spec.ids)?;
    check_coverage(b, &spec.ids)?;

    let mut rng = SeededRng::new(spec.seed);
    let picks = rng.sample_indices(spec.ids.len(), spec.size);
    let items = picks
        .into_iter()
        .enumerate()
        .map(|(index, k)| {
            let id = spec.ids[k];
            let (first, second) = if rng.coin() { (b, a) } else { (a, b) };
            Item {
                index,
                instance_id: id,
                first_text: first.texts[&id].clone(),
                second_text: second.texts[&id].clone(),
                first_system: first.label.clone(),
                second_system: second.label.clone(),
            }
        })
        .collect();
    let template = spec.question.as_deref().unwrap_or(QUESTION_TEMPLATE);
    let mut campaign = Campaign {
        id: String::new(),
        comparison: spec
            .comparison
            .clone()
            .unwrap_or_else(|| format!("{} vs {}", a.label, b.label)),
        language: spec.language.clone(),
        question: question_for(template, &spec.language),
        seed: spec.seed,
        systems: [a.label.clone(), b.label.clone()],
        items,
    };
    if campaign.question.contains("${") {
        return Err(EvalError::Validation(format!(
            "question has an unknown placeholder: {}",
            campaign.question
        )));
    }
    campaign.id = content_id(&campaign);
    Ok(campaign)
}
