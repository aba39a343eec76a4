//! Score tables, per-iteration trend series and side-by-side case files,
//! all derived from stored run artifacts. Numbers are rounded only when
//! rendered.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SampledSet;
use crate::metrics::{format_neural, format_text_metric, parse_score};
use crate::pipeline::{select_best_iteration, IterationScores, RefinementTrace, ScoreSheet, SelectionMetric};
use crate::prompts::PromptKind;
use crate::{Error, Result};

const TRANSLATE_BASE: &str = "Translate";
const REFERENCE_GROUP: &str = "Reference";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    /// Base the row belongs to: "Translate", a submission name, or
    /// "Reference".
    pub group: String,
    pub label: String,
    pub bleu: Option<f64>,
    pub chrf: Option<f64>,
    pub da: Option<f64>,
    pub qe: Option<f64>,
    pub best_iteration: Option<u32>,
}

impl StrategyRow {
    fn from_record(group: &str, label: &str, r: &IterationScores, best_iteration: Option<u32>) -> Self {
        StrategyRow {
            group: group.to_string(),
            label: label.to_string(),
            bleu: r.bleu,
            chrf: r.chrf,
            da: r.da,
            qe: r.qe,
            best_iteration,
        }
    }
}

fn base_label(base: &str) -> &'static str {
    if base == TRANSLATE_BASE {
        "Translate"
    } else {
        "Submission"
    }
}

fn reference_label(sheet: &ScoreSheet) -> String {
    format!("Reference_{}", sheet.reference)
}

fn check_comparable(sheet: &ScoreSheet) -> Result<()> {
    for r in &sheet.records {
        if r.sample_digest != sheet.sample_digest {
            return Err(Error::Comparability(format!(
                "{}/{} iteration {} was scored on a different sample ({} vs {})",
                r.base, r.strategy, r.iteration, r.sample_digest, sheet.sample_digest
            )));
        }
    }
    Ok(())
}

fn bases(sheet: &ScoreSheet) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for r in &sheet.records {
        if !out.contains(&r.base.as_str()) {
            out.push(&r.base);
        }
    }
    out
}

fn iterations<'a>(sheet: &'a ScoreSheet, base: &str, kind: PromptKind) -> Vec<&'a IterationScores> {
    let mut v: Vec<&IterationScores> = sheet
        .records
        .iter()
        .filter(|r| r.base == base && r.strategy == kind && r.iteration >= 1)
        .collect();
    v.sort_by_key(|r| r.iteration);
    v
}

/// Best iteration of every refinement strategy, by base.
pub fn selected_iterations(sheet: &ScoreSheet, metric: SelectionMetric) -> Result<BTreeMap<(String, PromptKind), u32>> {
    let mut out = BTreeMap::new();
    for base in bases(sheet) {
        for kind in PromptKind::ALL.into_iter().skip(1) {
            let its = iterations(sheet, base, kind);
            if its.is_empty() {
                continue;
            }
            let scores = its
                .iter()
                .map(|r| {
                    r.metric(metric).ok_or_else(|| {
                        Error::Scoring(format!(
                            "selection metric `{}` missing for {base}/{kind} iteration {}",
                            metric.name(),
                            r.iteration
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            out.insert((base.to_string(), kind), select_best_iteration(&scores)?);
        }
    }
    Ok(out)
}

/// One row per base and strategy, with refinement rows showing their
/// selected iteration. Order: reference, then per base the base row and
/// the strategies in prompt order.
pub fn build_score_table(sheet: &ScoreSheet, metric: SelectionMetric) -> Result<Vec<StrategyRow>> {
    check_comparable(sheet)?;
    let selected = selected_iterations(sheet, metric)?;
    let mut rows = Vec::new();
    if let Some(qe) = sheet.reference_qe {
        rows.push(StrategyRow {
            group: REFERENCE_GROUP.into(),
            label: reference_label(sheet),
            bleu: None,
            chrf: None,
            da: None,
            qe: Some(qe),
            best_iteration: None,
        });
    }
    for base in bases(sheet) {
        if let Some(r) = sheet.record(base, PromptKind::Translate, 0) {
            rows.push(StrategyRow::from_record(base, base_label(base), r, None));
        }
        for kind in PromptKind::ALL.into_iter().skip(1) {
            if let Some(&best) = selected.get(&(base.to_string(), kind)) {
                let r = sheet.record(base, kind, best).expect("selected iteration exists");
                rows.push(StrategyRow::from_record(base, kind.label(), r, Some(best)));
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub group: String,
    pub label: String,
    pub metric: String,
    /// Values at iterations 1..=T.
    pub values: Vec<f64>,
    /// Score of the base translation.
    pub baseline: Option<f64>,
    /// Score of the reference, where one exists (QE only).
    pub reference: Option<f64>,
}

const TREND_METRICS: [SelectionMetric; 4] = [
    SelectionMetric::Bleu,
    SelectionMetric::Chrf,
    SelectionMetric::Da,
    SelectionMetric::Qe,
];

/// One series per (base, strategy, metric), plus constant series for the
/// base translation and for the reference QE.
pub fn build_trend_series(sheet: &ScoreSheet) -> Result<Vec<TrendSeries>> {
    check_comparable(sheet)?;
    let mut out = Vec::new();
    let mut longest = 0;
    for base in bases(sheet) {
        let Some(base_record) = sheet.record(base, PromptKind::Translate, 0) else {
            continue;
        };
        let strategies: Vec<(PromptKind, Vec<&IterationScores>)> = PromptKind::ALL
            .into_iter()
            .skip(1)
            .map(|k| (k, iterations(sheet, base, k)))
            .filter(|(_, its)| !its.is_empty())
            .collect();
        let t_max = strategies.iter().map(|(_, its)| its.len()).max().unwrap_or(0);
        if t_max == 0 {
            continue;
        }
        longest = longest.max(t_max);
        for metric in TREND_METRICS {
            let Some(baseline) = base_record.metric(metric) else {
                continue;
            };
            let reference = (metric == SelectionMetric::Qe).then_some(sheet.reference_qe).flatten();
            out.push(TrendSeries {
                group: base.to_string(),
                label: base_label(base).to_string(),
                metric: metric.name().to_string(),
                values: vec![baseline; t_max],
                baseline: Some(baseline),
                reference,
            });
            for (kind, its) in &strategies {
                let values = its
                    .iter()
                    .map(|r| {
                        r.metric(metric).filter(|v| v.is_finite()).ok_or_else(|| {
                            Error::Scoring(format!("{base}/{kind}: missing {} at iteration {}", metric.name(), r.iteration))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                out.push(TrendSeries {
                    group: base.to_string(),
                    label: kind.label().to_string(),
                    metric: metric.name().to_string(),
                    values,
                    baseline: Some(baseline),
                    reference,
                });
            }
        }
    }
    if let (Some(qe), true) = (sheet.reference_qe, longest > 0) {
        out.push(TrendSeries {
            group: REFERENCE_GROUP.into(),
            label: reference_label(sheet),
            metric: SelectionMetric::Qe.name().into(),
            values: vec![qe; longest],
            baseline: None,
            reference: Some(qe),
        });
    }
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

const TABLE_HEADER: [&str; 7] = ["group", "strategy", "bleu", "chrf++", "da", "qe", "best_iteration"];

fn cells(row: &StrategyRow) -> [String; 7] {
    let text = |v: Option<f64>| v.map(format_text_metric).unwrap_or_default();
    let neural = |v: Option<f64>| v.map(format_neural).unwrap_or_default();
    [
        row.group.clone(),
        row.label.clone(),
        text(row.bleu),
        text(row.chrf),
        neural(row.da),
        neural(row.qe),
        row.best_iteration.map(|b| b.to_string()).unwrap_or_default(),
    ]
}

/// Comma-separated score table with presentation rounding.
pub fn table_to_csv(rows: &[StrategyRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Domain(format!("csv: {e}"));
    writer.write_record(TABLE_HEADER).map_err(csv_err)?;
    for row in rows {
        writer.write_record(cells(row)).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Domain(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn table_from_csv(text: &str) -> Result<Vec<StrategyRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Domain(format!("csv: {e}")))?;
    if header.iter().ne(TABLE_HEADER) {
        return Err(Error::Domain(format!("unexpected table header {header:?}")));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_score(s).map(Some)
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Domain(format!("csv: {e}")))?;
        let best = match &r[6] {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Domain(format!("bad best_iteration {s:?}")))?),
        };
        rows.push(StrategyRow {
            group: r[0].to_string(),
            label: r[1].to_string(),
            bleu: opt(&r[2])?,
            chrf: opt(&r[3])?,
            da: opt(&r[4])?,
            qe: opt(&r[5])?,
            best_iteration: best,
        });
    }
    Ok(rows)
}

/// Fixed-width table; missing values print as `-`.
pub fn render_table_text(rows: &[StrategyRow]) -> String {
    let mut grid: Vec<[String; 7]> = vec![TABLE_HEADER.map(str::to_string)];
    for row in rows {
        grid.push(cells(row).map(|c| if c.is_empty() { "-".to_string() } else { c }));
    }
    let widths: Vec<usize> = (0..7)
        .map(|i| grid.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, row) in grid.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i < 2 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if n == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

pub fn write_table(path: &Path, rows: &[StrategyRow]) -> Result<()> {
    write_bytes(path, table_to_csv(rows)?.as_bytes())
}

pub fn read_table(path: &Path) -> Result<Vec<StrategyRow>> {
    table_from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// One JSON record per line, full precision.
pub fn series_to_jsonl(series: &[TrendSeries]) -> Result<String> {
    let mut out = String::new();
    for s in series {
        out.push_str(&serde_json::to_string(s).map_err(|e| Error::json("trend series", e))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn series_from_jsonl(text: &str) -> Result<Vec<TrendSeries>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("trend series line {}", i + 1), e)))
        .collect()
}

pub fn write_series(path: &Path, series: &[TrendSeries]) -> Result<()> {
    write_bytes(path, series_to_jsonl(series)?.as_bytes())
}

pub fn read_series(path: &Path) -> Result<Vec<TrendSeries>> {
    series_from_jsonl(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// One segment shown under several strategies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub instance_id: usize,
    /// (label, text) in display order.
    pub lines: Vec<(String, String)>,
}

/// Cases listing source, reference, base translation and the chosen
/// iteration of each requested strategy.
pub fn build_cases(
    set: &SampledSet,
    reference: &str,
    traces: &[RefinementTrace],
    base: &str,
    picks: &[(PromptKind, u32)],
    ids: &[usize],
) -> Result<Vec<CaseRecord>> {
    let find = |id: usize, kind: PromptKind| {
        traces
            .iter()
            .find(|t| t.instance_id == id && t.base == base && t.strategy == kind)
    };
    let mut out = Vec::new();
    for &id in ids {
        let inst = set
            .get(id)
            .ok_or_else(|| Error::Domain(format!("instance {id} is not in the sample")))?;
        let mut lines = vec![("Source".to_string(), inst.source.clone())];
        if let Some(r) = inst.reference(reference) {
            lines.push(("Reference".to_string(), r.to_string()));
        }
        let base_text = traces
            .iter()
            .find(|t| t.instance_id == id && t.base == base)
            .and_then(|t| t.candidate(0))
            .ok_or_else(|| Error::Domain(format!("no base translation for instance {id}")))?;
        lines.push((base_label(base).to_string(), base_text.to_string()));
        for &(kind, iteration) in picks {
            let text = find(id, kind)
                .and_then(|t| t.candidate(iteration))
                .ok_or_else(|| Error::Domain(format!("no {kind} iteration {iteration} for instance {id}")))?;
            lines.push((kind.label().to_string(), text.to_string()));
        }
        out.push(CaseRecord { instance_id: id, lines });
    }
    Ok(out)
}

/// Plain-text side-by-side layout: a header per case, then one labelled
/// line per system.
pub fn render_cases(cases: &[CaseRecord]) -> String {
    let mut out = String::new();
    for case in cases {
        let width = case.lines.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
        out.push_str(&format!("# instance {}\n", case.instance_id));
        for (label, text) in &case.lines {
            out.push_str(&format!("{label:<width$}  {text}\n"));
        }
        out.push('\n');
    }
    out
}

pub fn write_cases(path: &Path, cases: &[CaseRecord]) -> Result<()> {
    write_bytes(path, render_cases(cases).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, v: [Option<f64>; 4], best: Option<u32>) -> StrategyRow {
        StrategyRow {
            group: "Translate".into(),
            label: label.into(),
            bleu: v[0],
            chrf: v[1],
            da: v[2],
            qe: v[3],
            best_iteration: best,
        }
    }

    fn table2_block() -> Vec<StrategyRow> {
        let mut reference = row("Reference_A", [None, None, None, Some(0.0919)], None);
        reference.group = "Reference".into();
        vec![
            reference,
            row("Translate", [Some(30.90), Some(57.55), Some(0.8606), Some(0.1128)], None),
            row("Refine", [Some(23.14), Some(51.91), Some(0.8525), Some(0.1116)], Some(2)),
            row("Refine_Contrast", [Some(22.88), Some(52.47), Some(0.8452), Some(0.1162)], Some(1)),
            row("Refine_Random", [Some(18.83), Some(51.79), Some(0.7777), Some(0.0770)], Some(3)),
            row("Paraphrase", [Some(11.01), Some(40.05), Some(0.8044), Some(0.0919)], Some(1)),
        ]
    }

    #[test]
    fn csv_round_trip() {
        let rows = table2_block();
        let text = table_to_csv(&rows).unwrap();
        assert!(text.contains("Translate,Translate,30.90,57.55,.8606,.1128,\n"));
        assert_eq!(table_from_csv(&text).unwrap(), rows);
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(table_to_csv(&[]).unwrap(), "group,strategy,bleu,chrf++,da,qe,best_iteration\n");
        assert!(table_from_csv(&table_to_csv(&[]).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn text_table_shape() {
        let text = render_table_text(&table2_block());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        assert!(lines[2].starts_with("Reference"));
        assert!(lines[2].contains(" -  "));
        assert!(lines[3].contains("30.90") && lines[3].contains(".8606"));
    }

    #[test]
    fn series_round_trip() {
        let series = vec![TrendSeries {
            group: "Translate".into(),
            label: "Refine".into(),
            metric: "qe".into(),
            values: vec![0.1061, 0.1116, 0.1087, 0.1085, 1.0 / 3.0],
            baseline: Some(0.1128),
            reference: Some(0.0919),
        }];
        assert_eq!(series_from_jsonl(&series_to_jsonl(&series).unwrap()).unwrap(), series);
    }

    #[test]
    fn cases_render_labelled_lines() {
        let case = CaseRecord {
            instance_id: 3,
            lines: vec![
                ("Source".into(), "src".into()),
                ("Reference".into(), "ref".into()),
                ("Translate".into(), "t".into()),
                ("Refine_Contrast".into(), "rc".into()),
                ("Paraphrase".into(), "p".into()),
            ],
        };
        let text = render_cases(&[case]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# instance 3");
        assert_eq!(lines[1], "Source           src");
        assert_eq!(lines[4], "Refine_Contrast  rc");
        assert_eq!(lines.len(), 7);
    }
}
