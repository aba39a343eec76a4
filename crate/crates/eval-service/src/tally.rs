use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::campaign::Campaign;
use crate::error::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
    Tie,
}

impl FromStr for Choice {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(Choice::First),
            "second" => Ok(Choice::Second),
            "tie" => Ok(Choice::Tie),
            other => Err(EvalError::Validation(format!(
                "choice must be first, second or tie, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Choice::First => "first",
            Choice::Second => "second",
            Choice::Tie => "tie",
        })
    }
}

/// One line of a campaign's append-only judgment log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    /// Position in the log, from 1.
    pub seq: u64,
    pub campaign: String,
    pub item: usize,
    pub choice: Choice,
    /// Hidden label of the system shown first.
    pub first_system: String,
    pub evaluator: String,
    pub timestamp_ms: u64,
    /// Sequence number of the judgment this one replaces.
    pub replaces: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemCount {
    pub label: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub systems: Vec<SystemCount>,
    pub tie: u64,
    pub total: u64,
}

impl Counts {
    fn new(campaign: &Campaign) -> Self {
        Counts {
            systems: campaign
                .systems
                .iter()
                .map(|label| SystemCount {
                    label: label.clone(),
                    count: 0,
                })
                .collect(),
            tie: 0,
            total: 0,
        }
    }

    pub fn count(&self, label: &str) -> u64 {
        self.systems.iter().find(|s| s.label == label).map_or(0, |s| s.count)
    }

    fn add(&mut self, winner: Option<&str>) {
        self.total += 1;
        match winner {
            Some(label) => {
                if let Some(s) = self.systems.iter_mut().find(|s| s.label == label) {
                    s.count += 1;
                }
            }
            None => self.tie += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceTally {
    pub campaign: String,
    pub comparison: String,
    #[serde(flatten)]
    pub counts: Counts,
    pub per_evaluator: BTreeMap<String, Counts>,
}

/// Folds the current judgments (one per item and evaluator) into counts.
pub fn tally(campaign: &Campaign, current: &[JudgmentRecord]) -> PreferenceTally {
    let mut counts = Counts::new(campaign);
    let mut per_evaluator: BTreeMap<String, Counts> = BTreeMap::new();
    for record in current {
        let Some(item) = campaign.items.get(record.item) else {
            continue;
        };
        let winner = match record.choice {
            Choice::First => Some(item.first_system.as_str()),
            Choice::Second => Some(item.second_system.as_str()),
            Choice::Tie => None,
        };
        counts.add(winner);
        per_evaluator
            .entry(record.evaluator.clone())
            .or_insert_with(|| Counts::new(campaign))
            .add(winner);
    }
    PreferenceTally {
        campaign: campaign.id.clone(),
        comparison: campaign.comparison.clone(),
        counts,
        per_evaluator,
    }
}
