use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::prompts::PromptKind;
use crate::{Error, Result};

/// One model call within a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Candidate slot this call filled (0 for the base translation).
    pub iteration: u32,
    /// Rendered prompt; empty if rendering itself failed.
    pub prompt: String,
    pub raw_response: Option<String>,
    pub sanitized_response: Option<String>,
    pub cache_key: Option<String>,
    /// Set when the call failed and the previous candidate was kept.
    pub failure: Option<String>,
}

/// Candidates of one segment under one strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub instance_id: usize,
    pub strategy: PromptKind,
    /// Where candidates[0] came from: "Translate" or a submission name.
    pub base: String,
    /// candidates[t] is the translation after t calls.
    pub candidates: Vec<String>,
    pub steps: Vec<TraceStep>,
    pub random_seed_target: Option<String>,
}

impl RefinementTrace {
    pub fn flagged(&self) -> bool {
        self.steps.iter().any(|s| s.failure.is_some())
    }

    /// True when no call of this trace succeeded.
    pub fn all_failed(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| s.failure.is_some())
    }

    pub fn candidate(&self, iteration: u32) -> Option<&str> {
        self.candidates.get(iteration as usize).map(String::as_str)
    }
}

pub fn write_traces(path: &Path, traces: &[RefinementTrace]) -> Result<()> {
    let mut out = Vec::new();
    for trace in traces {
        serde_json::to_writer(&mut out, trace).map_err(|e| Error::json("trace", e))?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_traces(path: &Path) -> Result<Vec<RefinementTrace>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut traces = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        traces.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{} line {}", path.display(), n + 1), e))?,
        );
    }
    Ok(traces)
}
