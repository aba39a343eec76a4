use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::runner::{base_translations, refine_external, run_refinement, run_translate, RunContext, TRANSLATE_BASE};
use super::scoring::{ScoreSheet, Scorers};
use super::trace::{write_traces, RefinementTrace};
use super::{assign_random_targets, SelectionMetric, Strategy, RANDOM_TARGET_POLICY};
use crate::config::{BackendSection, RunConfig};
use crate::corpus::{load_parallel_corpus, sample_instances, LanguagePair, SampleManifest, SampledSet};
use crate::gateway::{ChatBackend, Clock, Gateway, GatewayStats, ResponseCache};
use crate::metrics::NeuralScorer;
use crate::prompts::{PromptKind, TemplateSet};
use crate::report::{self, StrategyRow, TrendSeries};
use crate::{Error, Result};

/// Which stages a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Base translations only.
    Translate,
    /// Base translations, then every configured strategy.
    Refine,
    /// Every configured strategy on each configured submission.
    RefineExternal,
}

/// File names written into the output directory.
pub struct Artifacts;

impl Artifacts {
    pub const MANIFEST: &'static str = "manifest.json";
    pub const SAMPLE: &'static str = "sample.json";
    pub const TRACES: &'static str = "traces.jsonl";
    pub const SCORES: &'static str = "scores.json";
    pub const TABLE_CSV: &'static str = "table.csv";
    pub const TABLE_TEXT: &'static str = "table.txt";
    pub const TRENDS: &'static str = "trends.jsonl";
    pub const CASES: &'static str = "cases.txt";
    pub const STATS: &'static str = "stats.json";
}

pub const ARTIFACT_FILES: [&str; 9] = [
    Artifacts::MANIFEST,
    Artifacts::SAMPLE,
    Artifacts::TRACES,
    Artifacts::SCORES,
    Artifacts::TABLE_CSV,
    Artifacts::TABLE_TEXT,
    Artifacts::TRENDS,
    Artifacts::CASES,
    Artifacts::STATS,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub instance_id: usize,
    pub reason: String,
}

/// Everything needed to re-execute a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub mode: Mode,
    pub pair: LanguagePair,
    pub source_path: PathBuf,
    pub reference_paths: BTreeMap<String, PathBuf>,
    pub sample_origin: String,
    pub sample_seed: u64,
    pub sample_size: usize,
    pub sample_ids: Vec<usize>,
    pub generator: String,
    pub strategies: Vec<Strategy>,
    pub external_systems: BTreeMap<String, PathBuf>,
    pub backend: BackendSection,
    pub templates: BTreeMap<PromptKind, String>,
    pub tokenizer: Option<String>,
    pub da_scorer: Option<String>,
    pub qe_scorer: Option<String>,
    pub reference: String,
    pub selection_metric: SelectionMetric,
    pub random_target_seed: u64,
    pub random_target_policy: String,
    pub excluded: Vec<Exclusion>,
    pub started_ms: u64,
    pub finished_ms: u64,
    /// Artifact file names, relative to the manifest.
    pub artifacts: Vec<String>,
}

pub struct Experiment {
    pub config: RunConfig,
    pub mode: Mode,
    pub backend: Arc<dyn ChatBackend>,
    pub clock: Arc<dyn Clock>,
}

pub struct ExperimentOutcome {
    pub manifest: RunManifest,
    pub set: SampledSet,
    pub traces: Vec<RefinementTrace>,
    pub sheet: ScoreSheet,
    pub rows: Vec<StrategyRow>,
    pub series: Vec<TrendSeries>,
    pub stats: GatewayStats,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn exclusions(traces: &[RefinementTrace]) -> Vec<Exclusion> {
    let mut out: BTreeMap<usize, String> = BTreeMap::new();
    for t in traces {
        if t.all_failed() {
            let reason = format!("{}/{}: every call failed", t.base, t.strategy);
            out.entry(t.instance_id)
                .and_modify(|r| {
                    r.push_str("; ");
                    r.push_str(&reason)
                })
                .or_insert(reason);
        }
    }
    out.into_iter()
        .map(|(instance_id, reason)| Exclusion { instance_id, reason })
        .collect()
}

/// Runs the configured stages, scores every iteration and writes all
/// artifacts into the output directory.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentOutcome> {
    let cfg = &exp.config;
    cfg.validate()?;
    let started_ms = exp.clock.now_ms();
    let pair = cfg.language_pair()?;
    let full = load_parallel_corpus(&cfg.corpus.source, &cfg.corpus.references, &pair)?;
    let size = cfg.corpus.sample_size.unwrap_or(full.len());
    let set = sample_instances(&full, size, cfg.corpus.sample_seed)?;
    let templates = match &cfg.run.templates {
        Some(path) => TemplateSet::load(path)?,
        None => TemplateSet::default(),
    };
    let mut gateway = Gateway::new(exp.backend.clone(), cfg.backend.config.clone())?.with_clock(exp.clock.clone());
    if let Some(dir) = &cfg.backend.cache_dir {
        gateway = gateway.with_cache(ResponseCache::open(dir)?);
    }
    let ctx = RunContext {
        gateway: &gateway,
        templates: &templates,
    };

    let strategies = match exp.mode {
        Mode::Translate => Vec::new(),
        _ => cfg.strategies()?,
    };
    let random_targets = if strategies.iter().any(|s| s.kind == PromptKind::RefineRandom) {
        Some(assign_random_targets(&set, &cfg.run.reference, cfg.run.random_target_seed)?)
    } else {
        None
    };

    let mut traces = Vec::new();
    match exp.mode {
        Mode::Translate | Mode::Refine => {
            let base_traces = run_translate(&set, &ctx)?;
            let base = base_translations(&base_traces);
            traces.extend(base_traces);
            for &strategy in &strategies {
                traces.extend(run_refinement(
                    &set,
                    &base,
                    TRANSLATE_BASE,
                    strategy,
                    random_targets.as_ref(),
                    &ctx,
                )?);
            }
        }
        Mode::RefineExternal => {
            if cfg.external.systems.is_empty() {
                return Err(Error::Config("no external systems configured".into()));
            }
            for (system, path) in &cfg.external.systems {
                for &strategy in &strategies {
                    traces.extend(refine_external(&set, path, system, strategy, random_targets.as_ref(), &ctx)?);
                }
            }
        }
    }

    let excluded = exclusions(&traces);
    let excluded_ids: BTreeSet<usize> = excluded.iter().map(|e| e.instance_id).collect();
    let scorers = Scorers {
        tokenizer: cfg.text_tokenizer(),
        reference: cfg.run.reference.clone(),
        da: cfg.scorers.da.clone().map(NeuralScorer::new),
        qe: cfg.scorers.qe.clone().map(NeuralScorer::new),
    };
    let sheet = scorers.score_traces(&set, &traces, &excluded_ids)?;

    let out = &cfg.run.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let sample_manifest = SampleManifest::new(&set, &cfg.corpus.source, &cfg.corpus.references);
    sample_manifest.write(&out.join(Artifacts::SAMPLE))?;
    write_traces(&out.join(Artifacts::TRACES), &traces)?;
    write_json(&out.join(Artifacts::SCORES), &sheet)?;
    let (rows, series) = write_report(out, &set, &traces, &sheet, &cfg.run.reference, cfg.run.selection_metric)?;
    let stats = gateway.stats();
    write_json(&out.join(Artifacts::STATS), &stats)?;

    let manifest = RunManifest {
        tool: format!("itref {}", env!("CARGO_PKG_VERSION")),
        mode: exp.mode,
        pair,
        source_path: cfg.corpus.source.clone(),
        reference_paths: cfg.corpus.references.clone(),
        sample_origin: set.origin.clone(),
        sample_seed: set.seed,
        sample_size: set.size,
        sample_ids: set.ids(),
        generator: sample_manifest.generator.clone(),
        strategies,
        external_systems: cfg.external.systems.clone(),
        backend: cfg.backend.clone(),
        templates: PromptKind::ALL
            .into_iter()
            .map(|k| (k, templates.get(k).to_string()))
            .collect(),
        tokenizer: scorers.tokenizer.as_ref().map(|t| t.name().to_string()),
        da_scorer: cfg.scorers.da.as_ref().map(|s| s.id().to_string()),
        qe_scorer: cfg.scorers.qe.as_ref().map(|s| s.id().to_string()),
        reference: cfg.run.reference.clone(),
        selection_metric: cfg.run.selection_metric,
        random_target_seed: cfg.run.random_target_seed,
        random_target_policy: RANDOM_TARGET_POLICY.to_string(),
        excluded,
        started_ms,
        finished_ms: exp.clock.now_ms(),
        artifacts: ARTIFACT_FILES.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&out.join(Artifacts::MANIFEST), &manifest)?;

    Ok(ExperimentOutcome {
        manifest,
        set,
        traces,
        sheet,
        rows,
        series,
        stats,
    })
}

/// Writes the score table, trend series and case file derived from a
/// score sheet and its traces.
fn write_report(
    out: &Path,
    set: &SampledSet,
    traces: &[RefinementTrace],
    sheet: &ScoreSheet,
    reference: &str,
    metric: SelectionMetric,
) -> Result<(Vec<StrategyRow>, Vec<TrendSeries>)> {
    let rows = report::build_score_table(sheet, metric)?;
    let series = report::build_trend_series(sheet)?;
    report::write_table(&out.join(Artifacts::TABLE_CSV), &rows)?;
    let text_path = out.join(Artifacts::TABLE_TEXT);
    fs::write(&text_path, report::render_table_text(&rows)).map_err(|e| Error::io(&text_path, e))?;
    report::write_series(&out.join(Artifacts::TRENDS), &series)?;
    let selected = report::selected_iterations(sheet, metric)?;
    let mut cases = Vec::new();
    let bases: BTreeSet<&str> = traces.iter().map(|t| t.base.as_str()).collect();
    for base in bases {
        let picks: Vec<(PromptKind, u32)> = [PromptKind::RefineContrast, PromptKind::Paraphrase]
            .into_iter()
            .filter_map(|k| selected.get(&(base.to_string(), k)).map(|&it| (k, it)))
            .collect();
        cases.extend(report::build_cases(set, reference, traces, base, &picks, &sheet.instance_ids)?);
    }
    report::write_cases(&out.join(Artifacts::CASES), &cases)?;
    Ok((rows, series))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Regenerates the report files of a finished run from its stored
/// manifest, sample, traces and scores, without touching the backend.
pub fn rebuild_report(dir: &Path) -> Result<RunManifest> {
    let manifest: RunManifest = read_json(&dir.join(Artifacts::MANIFEST))?;
    let sample = SampleManifest::read(&dir.join(Artifacts::SAMPLE))?;
    let traces = super::trace::read_traces(&dir.join(Artifacts::TRACES))?;
    let sheet: ScoreSheet = read_json(&dir.join(Artifacts::SCORES))?;
    write_report(dir, &sample.set, &traces, &sheet, &manifest.reference, manifest.selection_metric)?;
    Ok(manifest)
}
