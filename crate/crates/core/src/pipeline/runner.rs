use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::trace::{RefinementTrace, TraceStep};
use super::Strategy;
use crate::corpus::{read_lines, SampledSet, TestInstance};
use crate::gateway::Gateway;
use crate::prompts::{PromptInputs, PromptKind, TemplateSet};
use crate::{Error, Result};

/// Base label of traces that start from the model's own translation.
pub const TRANSLATE_BASE: &str = "Translate";

/// What every stage needs to talk to the model.
#[derive(Clone, Copy)]
pub struct RunContext<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
}

/// Applies `f` to every item on at most `workers` threads; results keep
/// the input order.
pub(crate) fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot poisoned").expect("worker filled slot"))
        .collect()
}

/// Errors confined to one call: the segment is flagged, the run goes on.
fn isolated(error: &Error) -> bool {
    error.is_call_failure() || matches!(error, Error::Injection { .. })
}

fn attempt(ctx: &RunContext<'_>, kind: PromptKind, inputs: &PromptInputs<'_>, iteration: u32) -> Result<TraceStep> {
    let mut step = TraceStep {
        iteration,
        prompt: String::new(),
        raw_response: None,
        sanitized_response: None,
        cache_key: None,
        failure: None,
    };
    let outcome = ctx.templates.render(kind, inputs).and_then(|prompt| {
        step.prompt = prompt.text.clone();
        ctx.gateway.complete(&prompt)
    });
    match outcome {
        Ok(exchange) => {
            step.cache_key = Some(exchange.cache_key.as_str().to_string());
            step.raw_response = Some(exchange.raw_response);
            step.sanitized_response = Some(exchange.sanitized_response);
        }
        Err(e) if isolated(&e) => step.failure = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(step)
}

fn target_language(set: &SampledSet) -> Result<&str> {
    set.pair()
        .map(|p| p.target_display_name.as_str())
        .ok_or_else(|| Error::Domain("empty sample".into()))
}

fn by_id(mut traces: Vec<RefinementTrace>) -> Vec<RefinementTrace> {
    traces.sort_by_key(|t| t.instance_id);
    traces
}

/// One Translate call per instance. A failed call leaves the trace with no
/// candidates.
pub fn run_translate(set: &SampledSet, ctx: &RunContext<'_>) -> Result<Vec<RefinementTrace>> {
    let lang = target_language(set)?;
    let results = parallel_map(&set.instances, ctx.gateway.config().parallelism, |inst| {
        let inputs = PromptInputs {
            source: Some(&inst.source),
            lang,
            is_first_iteration: true,
            ..Default::default()
        };
        let step = attempt(ctx, PromptKind::Translate, &inputs, 0).map_err(|e| e.for_instance(inst.id))?;
        Ok(RefinementTrace {
            instance_id: inst.id,
            strategy: PromptKind::Translate,
            base: TRANSLATE_BASE.to_string(),
            candidates: step.sanitized_response.iter().cloned().collect(),
            steps: vec![step],
            random_seed_target: None,
        })
    });
    Ok(by_id(results.into_iter().collect::<Result<_>>()?))
}

/// Base translations of the successful Translate traces.
pub fn base_translations(traces: &[RefinementTrace]) -> BTreeMap<usize, String> {
    traces
        .iter()
        .filter_map(|t| t.candidates.first().map(|c| (t.instance_id, c.clone())))
        .collect()
}

fn refine_one(
    ctx: &RunContext<'_>,
    inst: &TestInstance,
    lang: &str,
    base: &str,
    base_name: &str,
    strategy: Strategy,
    random_target: Option<&str>,
) -> Result<RefinementTrace> {
    let mut candidates = vec![base.to_string()];
    let mut steps = Vec::with_capacity(strategy.iterations as usize);
    for t in 1..=strategy.iterations {
        let prev = candidates.last().expect("base candidate").clone();
        let inputs = PromptInputs {
            source: (strategy.kind != PromptKind::Paraphrase).then_some(inst.source.as_str()),
            prev_translation: Some(&prev),
            random_target,
            lang,
            is_first_iteration: t == 1,
        };
        let step = attempt(ctx, strategy.kind, &inputs, t)?;
        candidates.push(step.sanitized_response.clone().unwrap_or(prev));
        steps.push(step);
    }
    Ok(RefinementTrace {
        instance_id: inst.id,
        strategy: strategy.kind,
        base: base_name.to_string(),
        candidates,
        steps,
        random_seed_target: random_target.map(str::to_string),
    })
}

/// Runs `strategy` for T rounds from the given base translations. Instances
/// without a base translation are skipped. `random_targets` must cover the
/// set for Refine_Random.
pub fn run_refinement(
    set: &SampledSet,
    base: &BTreeMap<usize, String>,
    base_name: &str,
    strategy: Strategy,
    random_targets: Option<&BTreeMap<usize, String>>,
    ctx: &RunContext<'_>,
) -> Result<Vec<RefinementTrace>> {
    if strategy.kind == PromptKind::Translate || strategy.iterations == 0 {
        return Err(Error::Config(format!(
            "{} with {} iterations is not a refinement strategy",
            strategy.kind, strategy.iterations
        )));
    }
    let lang = target_language(set)?;
    let work: Vec<(&TestInstance, &str)> = set
        .instances
        .iter()
        .filter_map(|inst| base.get(&inst.id).map(|b| (inst, b.as_str())))
        .collect();
    let results = parallel_map(&work, ctx.gateway.config().parallelism, |&(inst, base_text)| {
        let random_target = match strategy.kind {
            PromptKind::RefineRandom => Some(
                random_targets
                    .and_then(|m| m.get(&inst.id))
                    .map(String::as_str)
                    .ok_or_else(|| Error::Domain(format!("no random target for instance {}", inst.id)))?,
            ),
            _ => None,
        };
        refine_one(ctx, inst, lang, base_text, base_name, strategy, random_target).map_err(|e| e.for_instance(inst.id))
    });
    Ok(by_id(results.into_iter().collect::<Result<_>>()?))
}

/// Refines a submission file instead of the model's own translations.
/// The file is aligned with the full test set; sampled ids index into it.
pub fn refine_external(
    set: &SampledSet,
    hypothesis_path: &Path,
    system: &str,
    strategy: Strategy,
    random_targets: Option<&BTreeMap<usize, String>>,
    ctx: &RunContext<'_>,
) -> Result<Vec<RefinementTrace>> {
    let lines = read_lines(hypothesis_path)?;
    if lines.len() != set.population {
        return Err(Error::Alignment {
            left: hypothesis_path.to_path_buf(),
            left_lines: lines.len(),
            right: format!("sampled test set ({})", set.origin).into(),
            right_lines: set.population,
        });
    }
    let base: BTreeMap<usize, String> = set.instances.iter().map(|i| (i.id, lines[i.id].clone())).collect();
    run_refinement(set, &base, system, strategy, random_targets, ctx)
}
