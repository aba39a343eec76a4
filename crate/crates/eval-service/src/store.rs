//! Durable campaign state. Campaign definitions are written once; judgments
//! go to one append-only log per campaign and are synced to disk before
//! they are acknowledged. The in-memory view is rebuilt from the logs on
//! open; a torn final line (a write that was never acknowledged) is cut.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use itref_core::gateway::Clock;
use serde::{Deserialize, Serialize};

use crate::campaign::Campaign;
use crate::error::{EvalError, Result};
use crate::tally::{tally, Choice, JudgmentRecord, PreferenceTally};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluator {
    pub name: String,
    pub token: String,
}

/// What an evaluator sees: two texts and the question, nothing else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub campaign: String,
    pub item: usize,
    pub completed: usize,
    pub total: usize,
    pub question: String,
    pub first: String,
    pub second: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextTask {
    Task(TaskView),
    Done {
        campaign: String,
        completed: usize,
        total: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub campaign: String,
    pub item: usize,
    pub choice: Choice,
    pub seq: u64,
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub id: String,
    pub comparison: String,
    pub language: String,
    pub size: usize,
    pub judgments: usize,
}

/// Evaluator-facing listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedCampaign {
    pub id: String,
    pub completed: usize,
    pub total: usize,
}

#[derive(Default)]
struct Judgments {
    log: Vec<JudgmentRecord>,
    /// (evaluator, item) → index into `log` of the judgment in force.
    current: BTreeMap<(String, usize), usize>,
}

impl Judgments {
    fn apply(&mut self, record: JudgmentRecord) {
        self.current
            .insert((record.evaluator.clone(), record.item), self.log.len());
        self.log.push(record);
    }

    fn completed_by(&self, evaluator: &str) -> usize {
        self.current.keys().filter(|(e, _)| e == evaluator).count()
    }

    fn current_records(&self) -> Vec<JudgmentRecord> {
        let mut idx: Vec<usize> = self.current.values().copied().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| self.log[i].clone()).collect()
    }
}

#[derive(Default)]
struct State {
    campaigns: BTreeMap<String, Arc<Campaign>>,
    judgments: BTreeMap<String, Judgments>,
    /// token → evaluator name
    evaluators: BTreeMap<String, String>,
}

pub struct Store {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    state: RwLock<State>,
    writer: Mutex<()>,
}

const CAMPAIGN_DIR: &str = "campaigns";
const JUDGMENT_DIR: &str = "judgments";
const EVALUATORS: &str = "evaluators.jsonl";

fn sync_dir(dir: &Path) -> Result<()> {
    File::open(dir)
        .and_then(|d| d.sync_all())
        .map_err(|e| EvalError::storage(dir, e))
}

/// Appends one line and syncs it to disk.
fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut line = serde_json::to_vec(value).expect("record serializes");
    line.push(b'\n');
    let created = !path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| EvalError::storage(path, e))?;
    file.write_all(&line).map_err(|e| EvalError::storage(path, e))?;
    file.sync_data().map_err(|e| EvalError::storage(path, e))?;
    match path.parent() {
        Some(dir) if created => sync_dir(dir),
        _ => Ok(()),
    }
}

/// Reads a line-delimited log, cutting a partial last line.
fn read_log<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(EvalError::storage(path, e)),
    };
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| EvalError::storage(path, e))?;
        file.set_len(keep as u64).map_err(|e| EvalError::storage(path, e))?;
        file.sync_all().map_err(|e| EvalError::storage(path, e))?;
        bytes.truncate(keep);
    }
    let text = String::from_utf8(bytes).map_err(|e| EvalError::Corrupt {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Corrupt {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn new_token() -> Result<String> {
    let mut bytes = [0u8; 16];
    getrandom::fill(&mut bytes)
        .map_err(|e| EvalError::storage(Path::new("<random>"), std::io::Error::other(e.to_string())))?;
    Ok(hex::encode(bytes))
}

impl Store {
    pub fn open(root: &Path, clock: Arc<dyn Clock>) -> Result<Self> {
        for dir in [root.to_path_buf(), root.join(CAMPAIGN_DIR), root.join(JUDGMENT_DIR)] {
            fs::create_dir_all(&dir).map_err(|e| EvalError::storage(&dir, e))?;
        }
        let mut state = State::default();
        let campaign_dir = root.join(CAMPAIGN_DIR);
        let mut entries: Vec<PathBuf> = fs::read_dir(&campaign_dir)
            .map_err(|e| EvalError::storage(&campaign_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let text = fs::read_to_string(&path).map_err(|e| EvalError::storage(&path, e))?;
            let campaign: Campaign = serde_json::from_str(&text).map_err(|e| EvalError::Corrupt {
                path: path.clone(),
                line: 0,
                message: e.to_string(),
            })?;
            let mut judgments = Judgments::default();
            for record in read_log::<JudgmentRecord>(&Self::log_path(root, &campaign.id))? {
                judgments.apply(record);
            }
            state.judgments.insert(campaign.id.clone(), judgments);
            state.campaigns.insert(campaign.id.clone(), Arc::new(campaign));
        }
        for ev in read_log::<Evaluator>(&root.join(EVALUATORS))? {
            state.evaluators.insert(ev.token, ev.name);
        }
        Ok(Store {
            root: root.to_path_buf(),
            clock,
            state: RwLock::new(state),
            writer: Mutex::new(()),
        })
    }

    fn log_path(root: &Path, id: &str) -> PathBuf {
        root.join(JUDGMENT_DIR).join(format!("{id}.jsonl"))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().expect("store state poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().expect("store state poisoned")
    }

    /// Stores a campaign. Adding an identical campaign again is a no-op.
    pub fn add_campaign(&self, campaign: Campaign) -> Result<Arc<Campaign>> {
        let _guard = self.writer.lock().expect("store writer poisoned");
        if let Some(existing) = self.read().campaigns.get(&campaign.id) {
            if **existing == campaign {
                return Ok(existing.clone());
            }
            return Err(EvalError::Conflict(format!("campaign {} already exists", campaign.id)));
        }
        let dir = self.root.join(CAMPAIGN_DIR);
        let path = dir.join(format!("{}.json", campaign.id));
        let tmp = dir.join(format!(".{}.json.tmp", campaign.id));
        let text = serde_json::to_vec_pretty(&campaign).expect("campaign serializes");
        let mut file = File::create(&tmp).map_err(|e| EvalError::storage(&tmp, e))?;
        file.write_all(&text).map_err(|e| EvalError::storage(&tmp, e))?;
        file.sync_all().map_err(|e| EvalError::storage(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| EvalError::storage(&path, e))?;
        sync_dir(&dir)?;
        let campaign = Arc::new(campaign);
        let mut state = self.write();
        state.judgments.insert(campaign.id.clone(), Judgments::default());
        state.campaigns.insert(campaign.id.clone(), campaign.clone());
        Ok(campaign)
    }

    pub fn campaign(&self, id: &str) -> Result<Arc<Campaign>> {
        self.read()
            .campaigns
            .get(id)
            .cloned()
            .ok_or_else(|| EvalError::NotFound(id.to_string()))
    }

    pub fn campaigns(&self) -> Vec<CampaignSummary> {
        let state = self.read();
        state
            .campaigns
            .values()
            .map(|c| CampaignSummary {
                id: c.id.clone(),
                comparison: c.comparison.clone(),
                language: c.language.clone(),
                size: c.size(),
                judgments: state.judgments.get(&c.id).map_or(0, |j| j.current.len()),
            })
            .collect()
    }

    pub fn assigned(&self, evaluator: &str) -> Vec<AssignedCampaign> {
        let state = self.read();
        state
            .campaigns
            .values()
            .map(|c| AssignedCampaign {
                id: c.id.clone(),
                completed: state.judgments.get(&c.id).map_or(0, |j| j.completed_by(evaluator)),
                total: c.size(),
            })
            .collect()
    }

    /// Registers an evaluator; a fresh random token is issued unless one is
    /// given.
    pub fn register_evaluator(&self, name: &str, token: Option<String>) -> Result<Evaluator> {
        if name.trim().is_empty() {
            return Err(EvalError::Validation("evaluator name is empty".into()));
        }
        let token = match token {
            Some(t) if t.len() < 8 || t.chars().any(char::is_whitespace) => {
                return Err(EvalError::Validation("tokens need at least 8 non-space characters".into()))
            }
            Some(t) => t,
            None => new_token()?,
        };
        let _guard = self.writer.lock().expect("store writer poisoned");
        {
            let state = self.read();
            if state.evaluators.contains_key(&token) {
                return Err(EvalError::Conflict("token already in use".into()));
            }
            if state.evaluators.values().any(|n| n == name) {
                return Err(EvalError::Conflict(format!("evaluator `{name}` already exists")));
            }
        }
        let evaluator = Evaluator {
            name: name.to_string(),
            token,
        };
        append_line(&self.root.join(EVALUATORS), &evaluator)?;
        self.write()
            .evaluators
            .insert(evaluator.token.clone(), evaluator.name.clone());
        Ok(evaluator)
    }

    pub fn evaluator_for(&self, token: &str) -> Option<String> {
        self.read().evaluators.get(token).cloned()
    }

    /// The lowest-index item this evaluator has not judged yet.
    pub fn next_task(&self, id: &str, evaluator: &str) -> Result<NextTask> {
        let state = self.read();
        let campaign = state.campaigns.get(id).ok_or_else(|| EvalError::NotFound(id.to_string()))?;
        let judgments = &state.judgments[id];
        let completed = judgments.completed_by(evaluator);
        let next = campaign
            .items
            .iter()
            .find(|item| !judgments.current.contains_key(&(evaluator.to_string(), item.index)));
        Ok(match next {
            Some(item) => NextTask::Task(TaskView {
                campaign: campaign.id.clone(),
                item: item.index,
                completed,
                total: campaign.size(),
                question: campaign.question.clone(),
                first: item.first_text.clone(),
                second: item.second_text.clone(),
            }),
            None => NextTask::Done {
                campaign: campaign.id.clone(),
                completed,
                total: campaign.size(),
            },
        })
    }

    /// Records a judgment, replacing this evaluator's earlier judgment of
    /// the same item. Returns only after the record is on disk.
    pub fn submit(&self, id: &str, item: usize, choice: Choice, evaluator: &str) -> Result<Ack> {
        let campaign = self.campaign(id)?;
        let shown = campaign.item(item)?;
        let _guard = self.writer.lock().expect("store writer poisoned");
        let (seq, replaces) = {
            let state = self.read();
            let judgments = &state.judgments[id];
            let replaces = judgments
                .current
                .get(&(evaluator.to_string(), item))
                .map(|&i| judgments.log[i].seq);
            (judgments.log.len() as u64 + 1, replaces)
        };
        let record = JudgmentRecord {
            seq,
            campaign: id.to_string(),
            item,
            choice,
            first_system: shown.first_system.clone(),
            evaluator: evaluator.to_string(),
            timestamp_ms: self.clock.now_ms(),
            replaces,
        };
        append_line(&Self::log_path(&self.root, id), &record)?;
        self.write()
            .judgments
            .get_mut(id)
            .expect("campaign has a judgment log")
            .apply(record);
        Ok(Ack {
            campaign: id.to_string(),
            item,
            choice,
            seq,
            replaced: replaces.is_some(),
        })
    }

    /// Every judgment ever recorded, replaced ones included.
    pub fn audit_log(&self, id: &str) -> Result<Vec<JudgmentRecord>> {
        self.read()
            .judgments
            .get(id)
            .map(|j| j.log.clone())
            .ok_or_else(|| EvalError::NotFound(id.to_string()))
    }

    /// The judgments in force, one per (evaluator, item), in log order.
    pub fn current_judgments(&self, id: &str) -> Result<Vec<JudgmentRecord>> {
        self.read()
            .judgments
            .get(id)
            .map(Judgments::current_records)
            .ok_or_else(|| EvalError::NotFound(id.to_string()))
    }

    pub fn tally(&self, id: &str) -> Result<PreferenceTally> {
        let campaign = self.campaign(id)?;
        Ok(tally(&campaign, &self.current_judgments(id)?))
    }
}
