mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use common::*;
use itref_core::corpus::{load_parallel_corpus, read_lines, sample_instances, LanguagePair};
use itref_core::gateway::mock::{MockBackend, MockScript};
use itref_core::gateway::{BackendConfig, BackendFailure, ChatBackend, ChatRequest, Gateway};
use itref_core::pipeline::{
    assign_random_targets, base_translations, read_traces, rebuild_report, run_refinement, run_translate, Mode,
    RunContext, Strategy, TRANSLATE_BASE,
};
use itref_core::prompts::{PromptKind, TemplateSet};
use itref_core::Error;

#[test]
fn full_run_makes_one_call_per_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, backend) = run_mock(mock_config(dir.path(), None, "shuffle"), Mode::Refine);
    assert_eq!(backend.calls(), INSTANCES * (1 + 4 * 4));
    assert_eq!(outcome.stats.network_calls, 340);
    assert_eq!(outcome.stats.cache_hits, 0);
    assert_eq!(outcome.traces.len(), INSTANCES * 5);
    for t in &outcome.traces {
        let expected = if t.strategy == PromptKind::Translate { 1 } else { 5 };
        assert_eq!(t.candidates.len(), expected, "{} {}", t.instance_id, t.strategy);
    }
}

#[test]
fn two_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    run_mock(mock_config(dir.path(), None, "shuffle"), Mode::Refine);
    let first: Vec<Vec<u8>> = STABLE_ARTIFACTS.iter().map(|f| read_bytes(dir.path(), f)).collect();
    run_mock(mock_config(dir.path(), None, "shuffle"), Mode::Refine);
    for (name, before) in STABLE_ARTIFACTS.iter().zip(&first) {
        assert!(*before == read_bytes(dir.path(), name), "{name} differs between runs");
    }
}

#[test]
fn worker_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut serial = mock_config(a.path(), None, "shuffle");
    serial.backend.config.parallelism = 1;
    let mut wide = mock_config(b.path(), None, "shuffle");
    wide.backend.config.parallelism = 16;
    run_mock(serial, Mode::Refine);
    run_mock(wide, Mode::Refine);
    for name in ["traces.jsonl", "scores.json", "table.csv", "trends.jsonl", "cases.txt"] {
        assert!(read_bytes(a.path(), name) == read_bytes(b.path(), name), "{name}");
    }
}

#[test]
fn warm_cache_rerun_makes_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    let (cold, cold_backend) = run_mock(mock_config(dir.path(), Some(cache.path()), "shuffle"), Mode::Refine);
    assert!(cold_backend.calls() > 0);
    let first: Vec<Vec<u8>> = STABLE_ARTIFACTS.iter().map(|f| read_bytes(dir.path(), f)).collect();

    let (warm, warm_backend) = run_mock(mock_config(dir.path(), Some(cache.path()), "shuffle"), Mode::Refine);
    assert_eq!(warm_backend.calls(), 0);
    assert_eq!(warm.stats.network_calls, 0);
    assert_eq!(warm.stats.cache_hits, 340);
    assert_eq!(cold.traces, warm.traces);
    for (name, before) in STABLE_ARTIFACTS.iter().zip(&first) {
        assert!(*before == read_bytes(dir.path(), name), "{name} differs after cached rerun");
    }
}

#[test]
fn paraphrase_prompts_never_show_the_source() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, _) = run_mock(mock_config(dir.path(), None, "shuffle"), Mode::Refine);
    let mut checked = 0;
    for t in outcome.traces.iter().filter(|t| t.strategy == PromptKind::Paraphrase) {
        let source = &outcome.set.get(t.instance_id).unwrap().source;
        for (i, step) in t.steps.iter().enumerate() {
            assert!(!step.prompt.contains("Source:"));
            assert!(!step.prompt.contains(source.as_str()));
            assert_eq!(step.prompt, format!(
                "Sentence: {}\nPlease give me a paraphrase in English without any explanation.",
                t.candidates[i]
            ));
            checked += 1;
        }
    }
    assert_eq!(checked, INSTANCES * 4);
}

#[test]
fn refinement_prompts_carry_the_previous_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, _) = run_mock(mock_config(dir.path(), None, "shuffle"), Mode::Refine);
    for t in outcome.traces.iter().filter(|t| t.strategy == PromptKind::Refine) {
        for (i, step) in t.steps.iter().enumerate() {
            assert!(step.prompt.contains(&format!("\nTranslation: {}\n", t.candidates[i])));
            assert_eq!(step.sanitized_response.as_deref(), Some(t.candidates[i + 1].as_str()));
        }
    }
    let base = base_translations(&outcome.traces);
    for t in outcome.traces.iter().filter(|t| t.strategy != PromptKind::Translate) {
        assert_eq!(t.candidates[0], base[&t.instance_id]);
    }
}

#[test]
fn random_refinement_starts_from_another_reference() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, _) = run_mock(mock_config(dir.path(), None, "shuffle"), Mode::Refine);
    let targets = assign_random_targets(&outcome.set, "A", 11).unwrap();
    for t in outcome.traces.iter().filter(|t| t.strategy == PromptKind::RefineRandom) {
        let inst = outcome.set.get(t.instance_id).unwrap();
        let target = &targets[&t.instance_id];
        assert_eq!(t.random_seed_target.as_ref(), Some(target));
        assert!(t.steps[0].prompt.contains(&format!("\nBad translation: {target}\n")));
        assert!(t.steps[1].prompt.contains(&format!("\nBad translation: {}\n", t.candidates[1])));
        let donor = outcome.set.instances.iter().position(|i| i.reference("A") == Some(target.as_str()));
        assert!(donor.is_some());
        assert_ne!(outcome.set.instances[donor.unwrap()].id, inst.id);
    }
}

#[test]
fn drift_marker_count_equals_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, _) = run_mock(mock_config(dir.path(), None, "drift"), Mode::Refine);
    for t in outcome.traces.iter().filter(|t| t.strategy != PromptKind::Translate) {
        for (i, c) in t.candidates.iter().enumerate() {
            assert_eq!(c.matches(" +").count(), i, "{c}");
        }
    }
}

#[test]
fn external_submission_lines_are_indexed_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = mock_config(dir.path(), None, "identity");
    config.corpus.sample_size = Some(60);
    let (outcome, backend) = run_mock(config, Mode::RefineExternal);
    let lines = read_lines(&fixture("pipeline/system.en")).unwrap();
    assert_eq!(backend.calls(), 60 * 4 * 4);
    let t = outcome
        .traces
        .iter()
        .find(|t| t.instance_id == 57 && t.strategy == PromptKind::Refine)
        .unwrap();
    assert_eq!(t.base, "sysA");
    assert_eq!(t.candidates[0], lines[57]);
    for t in outcome.traces.iter().filter(|t| t.strategy != PromptKind::RefineRandom) {
        assert!(t.candidates.iter().all(|c| *c == lines[t.instance_id]));
    }
    let groups: Vec<&str> = outcome.rows.iter().map(|r| r.group.as_str()).collect();
    assert!(groups.contains(&"sysA"));
}

#[test]
fn misaligned_submission_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = mock_config(dir.path(), None, "identity");
    config.external.systems.insert("sysA".into(), fixture("pipeline/short.en"));
    let exp = itref_core::pipeline::Experiment {
        config,
        mode: Mode::RefineExternal,
        backend: Arc::new(MockBackend::new(MockScript::identity())),
        clock: Arc::new(itref_core::gateway::FixedClock(0)),
    };
    match itref_core::pipeline::run_experiment(&exp) {
        Err(Error::Alignment { left_lines, right_lines, .. }) => {
            assert_eq!((left_lines, right_lines), (59, 60));
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("misaligned submission accepted"),
    }
}

#[test]
fn processing_order_does_not_change_traces() {
    let pair = LanguagePair::new("de", "en", &BTreeMap::new()).unwrap();
    let refs = BTreeMap::from([("A".to_string(), fixture("pipeline/ref_a.en"))]);
    let full = load_parallel_corpus(&fixture("pipeline/src.de"), &refs, &pair).unwrap();
    let set = sample_instances(&full, INSTANCES, 7).unwrap();
    let mut reversed = set.clone();
    reversed.instances.reverse();

    let run = |set: &itref_core::corpus::SampledSet, workers: usize| {
        let config = BackendConfig {
            parallelism: workers,
            ..BackendConfig::default()
        };
        let backend = Arc::new(MockBackend::new(MockScript::word_shuffle(5)));
        let gateway = Gateway::new(backend, config).unwrap();
        let templates = TemplateSet::default();
        let ctx = RunContext {
            gateway: &gateway,
            templates: &templates,
        };
        let base_traces = run_translate(set, &ctx).unwrap();
        let base = base_translations(&base_traces);
        let targets = assign_random_targets(&set_in_order(set), "A", 11).unwrap();
        let mut all = base_traces;
        for kind in [PromptKind::Refine, PromptKind::RefineRandom, PromptKind::Paraphrase] {
            all.extend(
                run_refinement(set, &base, TRANSLATE_BASE, Strategy::new(kind, 4), Some(&targets), &ctx).unwrap(),
            );
        }
        all
    };
    assert_eq!(run(&set, 1), run(&reversed, 7));
}

/// The set with instances in the sampled order, so that random targets
/// do not depend on the processing order under test.
fn set_in_order(set: &itref_core::corpus::SampledSet) -> itref_core::corpus::SampledSet {
    let mut s = set.clone();
    s.instances.sort_by_key(|i| i.id);
    s
}

/// Fails every call mentioning `poison`; answers blank to the second
/// occurrence of `blank_once`; otherwise echoes like the identity mock.
struct FlakyBackend {
    poison: String,
    blank_once: String,
    seen: Mutex<BTreeMap<String, usize>>,
}

impl ChatBackend for FlakyBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure> {
        let text = &request.messages[0].content;
        if text.contains(&self.poison) {
            return Err(BackendFailure::Fatal {
                status: Some(400),
                message: "rejected".into(),
            });
        }
        let mut seen = self.seen.lock().unwrap();
        let n = seen.entry(text.clone()).or_default();
        *n += 1;
        if text.contains(&self.blank_once) && text.contains("Bad translation: ") && *n == 2 {
            return Ok("   ".into());
        }
        Ok(MockScript::identity().apply(text))
    }
}

#[test]
fn failed_segments_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let config = mock_config(dir.path(), None, "identity");
    let (probe, _) = run_mock(config.clone(), Mode::Translate);
    let poisoned = probe.set.instances[3].clone();
    let blanked = probe.set.instances[5].clone();
    let backend = Arc::new(FlakyBackend {
        poison: poisoned.source.clone(),
        blank_once: blanked.source.clone(),
        seen: Mutex::new(BTreeMap::new()),
    });
    let outcome = run_with(config, Mode::Refine, backend);

    let excluded: Vec<usize> = outcome.manifest.excluded.iter().map(|e| e.instance_id).collect();
    assert_eq!(excluded, vec![poisoned.id]);
    assert!(!outcome.sheet.instance_ids.contains(&poisoned.id));
    assert_eq!(outcome.sheet.instance_ids.len(), INSTANCES - 1);
    assert!(outcome.sheet.records.iter().all(|r| r.segments == INSTANCES - 1));

    let poisoned_traces: Vec<_> = outcome.traces.iter().filter(|t| t.instance_id == poisoned.id).collect();
    assert_eq!(poisoned_traces.len(), 1);
    assert!(poisoned_traces[0].all_failed());
    assert!(poisoned_traces[0].candidates.is_empty());

    let flagged: BTreeSet<(usize, PromptKind)> = outcome
        .traces
        .iter()
        .filter(|t| t.flagged() && !t.all_failed())
        .map(|t| (t.instance_id, t.strategy))
        .collect();
    // both strategies repeat a "Bad translation" prompt for that instance
    assert_eq!(
        flagged,
        BTreeSet::from([(blanked.id, PromptKind::RefineContrast), (blanked.id, PromptKind::RefineRandom)])
    );
    let t = outcome
        .traces
        .iter()
        .find(|t| t.instance_id == blanked.id && t.strategy == PromptKind::RefineContrast)
        .unwrap();
    assert_eq!(t.candidates.len(), 5);
    assert!(t.steps[1].failure.is_some());
    assert_eq!(t.candidates[2], t.candidates[1]);
}

#[test]
fn report_rebuild_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    run_mock(mock_config(dir.path(), None, "shuffle"), Mode::Refine);
    let names = ["table.csv", "table.txt", "trends.jsonl", "cases.txt"];
    let before: Vec<Vec<u8>> = names.iter().map(|f| read_bytes(dir.path(), f)).collect();
    for name in names {
        std::fs::remove_file(dir.path().join(name)).unwrap();
    }
    rebuild_report(dir.path()).unwrap();
    for (name, b) in names.iter().zip(before) {
        assert!(b == read_bytes(dir.path(), name), "{name}");
    }
    let traces = read_traces(&dir.path().join("traces.jsonl")).unwrap();
    assert_eq!(traces.len(), INSTANCES * 5);
}

#[test]
fn table_lists_every_strategy_with_its_selected_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, _) = run_mock(mock_config(dir.path(), None, "drift"), Mode::Refine);
    let labels: Vec<&str> = outcome.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(
        labels,
        ["Reference_A", "Translate", "Refine", "Refine_Contrast", "Refine_Random", "Paraphrase"]
    );
    for row in &outcome.rows[2..] {
        // length ratio falls with every appended marker
        assert_eq!(row.best_iteration, Some(1), "{}", row.label);
    }
}
