#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use itref_core::config::RunConfig;
use itref_core::gateway::mock::{MockBackend, MockScript};
use itref_core::gateway::{ChatBackend, FixedClock};
use itref_core::pipeline::{run_experiment, Experiment, ExperimentOutcome, Mode};

pub const INSTANCES: usize = 20;
pub const FIXED_TIME_MS: u64 = 1_700_000_000_000;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// A de→en run over 20 of the 60 fixture lines with stub scorers.
pub fn mock_config(out: &Path, cache: Option<&Path>, script: &str) -> RunConfig {
    let cache_line = cache
        .map(|c| format!("cache_dir = {:?}\n", c.display().to_string()))
        .unwrap_or_default();
    let text = format!(
        r#"
[corpus]
source = {src:?}
references = {{ A = {ra:?}, B = {rb:?} }}
source_lang = "de"
target_lang = "en"
sample_size = {INSTANCES}
sample_seed = 7

[run]
output_dir = {out:?}
random_target_seed = 11

[backend]
kind = "mock"
script = "{script}"
script_seed = 3
parallelism = 4
max_retries = 0
{cache_line}
[scorers.da]
kind = "stub"
id = "stub-edit-similarity"
function = "edit-similarity"

[scorers.qe]
kind = "stub"
id = "stub-length-ratio"
function = "length-ratio"

[external.systems]
sysA = {sys:?}
"#,
        src = fixture("pipeline/src.de").display().to_string(),
        ra = fixture("pipeline/ref_a.en").display().to_string(),
        rb = fixture("pipeline/ref_b.en").display().to_string(),
        sys = fixture("pipeline/system.en").display().to_string(),
        out = out.display().to_string(),
    );
    RunConfig::from_toml(&text).expect("fixture config parses")
}

pub fn run_with(config: RunConfig, mode: Mode, backend: Arc<dyn ChatBackend>) -> ExperimentOutcome {
    let exp = Experiment {
        config,
        mode,
        backend,
        clock: Arc::new(FixedClock(FIXED_TIME_MS)),
    };
    run_experiment(&exp).expect("run succeeds")
}

/// Runs with a fresh mock backend for the config's script; returns the
/// outcome and the number of prompts the backend saw.
pub fn run_mock(config: RunConfig, mode: Mode) -> (ExperimentOutcome, Arc<MockBackend>) {
    let script = config.backend.script.clone().expect("mock script");
    let backend = Arc::new(MockBackend::new(
        MockScript::by_name(&script, config.backend.script_seed).expect("known script"),
    ));
    let outcome = run_with(config, mode, backend.clone());
    (outcome, backend)
}

pub fn read_bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

/// Files whose bytes must not depend on scheduling or cache state.
pub const STABLE_ARTIFACTS: [&str; 7] = [
    "manifest.json",
    "sample.json",
    "traces.jsonl",
    "scores.json",
    "table.csv",
    "trends.jsonl",
    "cases.txt",
];
