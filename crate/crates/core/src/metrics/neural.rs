//! Client side of the neural DA/QE scorers. The models themselves run
//! elsewhere; this module only speaks the batch contracts and provides
//! cheap deterministic stubs for tests and dry runs.

use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralScore {
    pub value: f64,
    pub scorer_id: String,
    pub reference_based: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralReport {
    pub scorer_id: String,
    pub segments: Vec<NeuralScore>,
    /// Arithmetic mean of the segment values.
    pub mean: f64,
}

/// Deterministic stand-ins for the neural scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StubFunction {
    /// 1 − normalized character edit distance to the reference.
    EditSimilarity,
    /// min(|h|, |s|) / max(|h|, |s|) over character counts of hypothesis and
    /// source; 1 when both are empty.
    LengthRatio,
    Constant(f64),
}

impl StubFunction {
    pub fn reference_based(&self) -> bool {
        matches!(self, StubFunction::EditSimilarity)
    }

    pub fn apply(&self, source: &str, hypothesis: &str, reference: Option<&str>) -> f64 {
        match self {
            StubFunction::EditSimilarity => {
                strsim::normalized_levenshtein(hypothesis, reference.unwrap_or_default())
            }
            StubFunction::LengthRatio => {
                let h = hypothesis.chars().count();
                let s = source.chars().count();
                if h.max(s) == 0 {
                    1.0
                } else {
                    h.min(s) as f64 / h.max(s) as f64
                }
            }
            StubFunction::Constant(v) => *v,
        }
    }
}

fn default_batch_size() -> usize {
    64
}

fn default_timeout_ms() -> u64 {
    600_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScorerConfig {
    /// Reads tab-separated `source\thypothesis[\treference]` lines on stdin,
    /// writes one decimal per line.
    Subprocess {
        id: String,
        command: Vec<String>,
        reference_based: bool,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
    },
    /// POSTs `{"source": [..], "mt": [..], "ref": [..]}` and expects
    /// `{"scores": [..]}`.
    Http {
        id: String,
        url: String,
        reference_based: bool,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    Stub { id: String, function: StubFunction },
}

impl ScorerConfig {
    pub fn id(&self) -> &str {
        match self {
            ScorerConfig::Subprocess { id, .. }
            | ScorerConfig::Http { id, .. }
            | ScorerConfig::Stub { id, .. } => id,
        }
    }

    pub fn reference_based(&self) -> bool {
        match self {
            ScorerConfig::Subprocess { reference_based, .. }
            | ScorerConfig::Http { reference_based, .. } => *reference_based,
            ScorerConfig::Stub { function, .. } => function.reference_based(),
        }
    }

    fn batch_size(&self) -> usize {
        match self {
            ScorerConfig::Subprocess { batch_size, .. } | ScorerConfig::Http { batch_size, .. } => {
                (*batch_size).max(1)
            }
            ScorerConfig::Stub { .. } => usize::MAX,
        }
    }
}

/// A configured scorer. Batches sent to one scorer are serialized.
pub struct NeuralScorer {
    config: ScorerConfig,
    lock: Mutex<()>,
}

#[derive(Serialize)]
struct HttpBatch<'a> {
    source: &'a [&'a str],
    mt: &'a [&'a str],
    #[serde(skip_serializing_if = "Option::is_none")]
    r#ref: Option<&'a [&'a str]>,
}

#[derive(Deserialize)]
struct HttpScores {
    scores: Vec<f64>,
}

fn one_line(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl NeuralScorer {
    pub fn new(config: ScorerConfig) -> Self {
        NeuralScorer {
            config,
            lock: Mutex::new(()),
        }
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn id(&self) -> &str {
        self.config.id()
    }

    pub fn reference_based(&self) -> bool {
        self.config.reference_based()
    }

    /// Scores every segment and averages. References must be given exactly
    /// when the scorer is reference-based.
    pub fn score(&self, sources: &[&str], hypotheses: &[&str], references: Option<&[&str]>) -> Result<NeuralReport> {
        let id = self.id().to_string();
        if sources.len() != hypotheses.len() {
            return Err(Error::Scoring(format!(
                "{id}: {} sources but {} hypotheses",
                sources.len(),
                hypotheses.len()
            )));
        }
        match (self.reference_based(), references) {
            (true, None) => return Err(Error::Scoring(format!("{id} needs references"))),
            (false, Some(_)) => {
                return Err(Error::Scoring(format!("{id} is reference-free but references were given")))
            }
            (_, Some(r)) if r.len() != sources.len() => {
                return Err(Error::Scoring(format!(
                    "{id}: {} sources but {} references",
                    sources.len(),
                    r.len()
                )))
            }
            _ => {}
        }
        if sources.is_empty() {
            return Err(Error::Scoring(format!("{id}: nothing to score")));
        }
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let step = self.config.batch_size();
        let mut values = Vec::with_capacity(sources.len());
        let mut start = 0;
        while start < sources.len() {
            let end = sources.len().min(start.saturating_add(step));
            let refs = references.map(|r| &r[start..end]);
            let batch = self.score_batch(&sources[start..end], &hypotheses[start..end], refs)?;
            if batch.len() != end - start {
                return Err(Error::Scoring(format!(
                    "{id}: expected {} scores, got {}",
                    end - start,
                    batch.len()
                )));
            }
            values.extend(batch);
            start = end;
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Scoring(format!("{id}: non-finite score for segment {i}")));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let reference_based = self.reference_based();
        Ok(NeuralReport {
            segments: values
                .into_iter()
                .map(|value| NeuralScore {
                    value,
                    scorer_id: id.clone(),
                    reference_based,
                })
                .collect(),
            scorer_id: id,
            mean,
        })
    }

    fn score_batch(&self, sources: &[&str], hypotheses: &[&str], references: Option<&[&str]>) -> Result<Vec<f64>> {
        match &self.config {
            ScorerConfig::Stub { function, .. } => Ok((0..sources.len())
                .map(|i| function.apply(sources[i], hypotheses[i], references.map(|r| r[i])))
                .collect()),
            ScorerConfig::Subprocess { id, command, .. } => run_subprocess(id, command, sources, hypotheses, references),
            ScorerConfig::Http {
                id, url, timeout_ms, ..
            } => {
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .timeout_global(Some(std::time::Duration::from_millis(*timeout_ms)))
                    .build()
                    .into();
                let body = HttpBatch {
                    source: sources,
                    mt: hypotheses,
                    r#ref: references,
                };
                let parsed: HttpScores = agent
                    .post(url)
                    .send_json(&body)
                    .and_then(|mut r| r.body_mut().read_json())
                    .map_err(|e| Error::Scoring(format!("{id} unavailable: {e}")))?;
                Ok(parsed.scores)
            }
        }
    }
}

fn run_subprocess(
    id: &str,
    command: &[String],
    sources: &[&str],
    hypotheses: &[&str],
    references: Option<&[&str]>,
) -> Result<Vec<f64>> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::Scoring(format!("{id}: empty scorer command")))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Scoring(format!("{id} unavailable: cannot start `{program}`: {e}")))?;
    let mut input = String::new();
    for i in 0..sources.len() {
        input.push_str(&one_line(sources[i]));
        input.push('\t');
        input.push_str(&one_line(hypotheses[i]));
        if let Some(r) = references {
            input.push('\t');
            input.push_str(&one_line(r[i]));
        }
        input.push('\n');
    }
    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let output = child
        .wait_with_output()
        .map_err(|e| Error::Scoring(format!("{id}: {e}")))?;
    let _ = writer.join();
    if !output.status.success() {
        return Err(Error::Scoring(format!(
            "{id} exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    String::from_utf8_lossy(&output.stdout)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.trim()
                .parse::<f64>()
                .map_err(|e| Error::Scoring(format!("{id}: bad score on output line {}: {e}", i + 1)))
        })
        .collect()
}

/// Convenience wrapper for one-off scoring.
pub fn neural_score(
    sources: &[&str],
    hypotheses: &[&str],
    references: Option<&[&str]>,
    scorer: &ScorerConfig,
) -> Result<NeuralReport> {
    NeuralScorer::new(scorer.clone()).score(sources, hypotheses, references)
}
