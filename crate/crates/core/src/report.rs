//! Aggregation of annotations, classifier labels and surface metrics into
//! result tables and figures.
//!
//! Every function here is a pure transform over immutable snapshots. Rows are
//! keyed by run id and emitted in lexicographic order, and every percentage
//! travels with the count it was computed from.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    average_overlap_acceptability, group_by_output, reconcile_layer1, validate_record, Agreement, AnnotationError,
    AnnotationRecord, Layer1Label, Layer2Label, OutputKey,
};
use crate::corpus::CorpusEntry;
use crate::postprocess::SystemOutput;
use crate::prompt::{SetId, TemplateKind};
use crate::stats::{
    bleu, chrf, f1_agreement, fleiss_kappa, icc3, interpret_kappa, kendall_tau, BinaryLabel, CountsMatrix, F1Report,
    RatingsMatrix, StatsError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("unresolved consensus for {}", join_keys(.0))]
    Unresolved(Vec<OutputKey>),
    #[error("gating violation on {key} by `{rater}`: {message}")]
    Gating {
        key: OutputKey,
        rater: String,
        message: String,
    },
    #[error("no acceptability-bearing outputs")]
    NoAcceptability,
    #[error("classifier labels missing for {}", join_keys(.0))]
    CoverageGap(Vec<OutputKey>),
    #[error("no annotated outputs")]
    Empty,
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("no reference for entry `{0}`")]
    MissingReference(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn join_keys(keys: &[OutputKey]) -> String {
    keys.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Reconciled judgment for one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    pub layer1: Layer1Label,
    pub layer2: Option<Layer2Label>,
    /// Mean numeric acceptability when several raters judged the output.
    pub mean_acceptability: Option<f64>,
    pub raters: usize,
    pub agreement: Agreement,
}

/// Consensus labels for every annotated output, using each rater's latest
/// record. Single-rater outputs take that rater's labels; multi-rater
/// outputs use the strict majority for neutrality and the averaged
/// acceptability of the raters who judged the output N or P.
pub fn consensus_labels(records: &[AnnotationRecord]) -> Result<BTreeMap<OutputKey, Consensus>, ReportError> {
    let mut out = BTreeMap::new();
    let mut unresolved = Vec::new();
    for (key, group) in group_by_output(records) {
        for r in &group {
            if let Err(violations) = validate_record(r) {
                let message = violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; ");
                return Err(ReportError::Gating {
                    key,
                    rater: r.rater_id.clone(),
                    message,
                });
            }
        }
        if let [only] = group.as_slice() {
            out.insert(
                key,
                Consensus {
                    layer1: only.layer1,
                    layer2: only.layer2,
                    mean_acceptability: None,
                    raters: 1,
                    agreement: Agreement::Unanimous,
                },
            );
            continue;
        }
        let outcome = reconcile_layer1(&group)?;
        let Some(layer1) = outcome.label else {
            unresolved.push(key);
            continue;
        };
        let (layer2, mean_acceptability) = if layer1.requires_acceptability() {
            let bearing: Vec<AnnotationRecord> = group
                .iter()
                .filter(|r| r.layer1.requires_acceptability())
                .cloned()
                .collect();
            let (mean, label) = average_overlap_acceptability(&bearing)?;
            (Some(label), Some(mean))
        } else {
            (None, None)
        };
        out.insert(
            key,
            Consensus {
                layer1,
                layer2,
                mean_acceptability,
                raters: group.len(),
                agreement: outcome.agreement,
            },
        );
    }
    if unresolved.is_empty() {
        Ok(out)
    } else {
        Err(ReportError::Unresolved(unresolved))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub label: String,
    pub count: u64,
    pub percent: f64,
}

/// Counts over an ordered label set with their exact percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub total: u64,
    pub shares: Vec<Share>,
}

impl Distribution {
    fn from_counts(labels: &[&str], counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let shares = labels
            .iter()
            .zip(counts)
            .map(|(label, &count)| Share {
                label: (*label).to_string(),
                count,
                percent: if total == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / total as f64
                },
            })
            .collect();
        Distribution { total, shares }
    }

    pub fn percent(&self, label: &str) -> Option<f64> {
        self.shares.iter().find(|s| s.label == label).map(|s| s.percent)
    }

    pub fn count(&self, label: &str) -> Option<u64> {
        self.shares.iter().find(|s| s.label == label).map(|s| s.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralityRow {
    pub run_id: String,
    pub distribution: Distribution,
}

const NEUTRALITY_LABELS: [&str; 3] = ["N", "G", "P"];

/// N/G/P shares per run over consensus labels.
pub fn neutrality_distribution(consensus: &BTreeMap<OutputKey, Consensus>) -> Vec<NeutralityRow> {
    let mut counts: BTreeMap<&str, [u64; 3]> = BTreeMap::new();
    for (key, c) in consensus {
        let slot = match c.layer1 {
            Layer1Label::N => 0,
            Layer1Label::G => 1,
            Layer1Label::P => 2,
        };
        counts.entry(key.run_id.as_str()).or_default()[slot] += 1;
    }
    counts
        .into_iter()
        .map(|(run_id, c)| NeutralityRow {
            run_id: run_id.to_string(),
            distribution: Distribution::from_counts(&NEUTRALITY_LABELS, &c),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptabilityRow {
    pub run_id: String,
    /// `None` when N and P outputs are pooled.
    pub layer1: Option<Layer1Label>,
    pub distribution: Distribution,
}

const ACCEPTABILITY_LABELS: [&str; 4] = ["Acc", "S_Acc", "S_Un", "Un"];

/// Acceptability shares per run over outputs whose consensus is N or P.
/// With `pooled == false` N and P outputs get separate rows.
pub fn acceptability_distribution(
    consensus: &BTreeMap<OutputKey, Consensus>,
    pooled: bool,
) -> Result<Vec<AcceptabilityRow>, ReportError> {
    let mut counts: BTreeMap<(&str, Option<Layer1Label>), [u64; 4]> = BTreeMap::new();
    for (key, c) in consensus {
        if !c.layer1.requires_acceptability() {
            continue;
        }
        let layer2 = c.layer2.ok_or_else(|| {
            ReportError::Annotation(AnnotationError::MissingAcceptability {
                key: key.clone(),
                rater: "consensus".into(),
            })
        })?;
        let group = if pooled { None } else { Some(c.layer1) };
        counts.entry((key.run_id.as_str(), group)).or_default()[usize::from(4 - layer2.numeric())] += 1;
    }
    if counts.is_empty() {
        return Err(ReportError::NoAcceptability);
    }
    Ok(counts
        .into_iter()
        .map(|((run_id, layer1), c)| AcceptabilityRow {
            run_id: run_id.to_string(),
            layer1,
            distribution: Distribution::from_counts(&ACCEPTABILITY_LABELS, &c),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Kendall τ-b between the two rankings; `None` when it is undefined
    /// (fewer than two systems or a constant ranking).
    pub tau: Option<f64>,
    pub f1_table: BTreeMap<String, F1Report>,
    /// Consensus-N count per system.
    pub ranking_human: BTreeMap<String, u64>,
    /// Classifier-N count per system over the same outputs.
    pub ranking_classifier: BTreeMap<String, u64>,
}

/// Compares classifier labels with human consensus on the annotated outputs
/// of `systems` (every annotated run when empty). Partially neutral human
/// labels count as gendered.
pub fn build_comparison(
    consensus: &BTreeMap<OutputKey, Consensus>,
    classifier: &BTreeMap<OutputKey, BinaryLabel>,
    systems: &[String],
) -> Result<ComparisonReport, ReportError> {
    let annotated: BTreeSet<&str> = consensus.keys().map(|k| k.run_id.as_str()).collect();
    let selected: BTreeSet<&str> = if systems.is_empty() {
        annotated.clone()
    } else {
        let mut s = BTreeSet::new();
        for system in systems {
            if !annotated.contains(system.as_str()) {
                return Err(ReportError::UnknownSystem(system.clone()));
            }
            s.insert(system.as_str());
        }
        s
    };
    if selected.is_empty() {
        return Err(ReportError::Empty);
    }

    let mut human: BTreeMap<&str, Vec<Layer1Label>> = BTreeMap::new();
    let mut predicted: BTreeMap<&str, Vec<BinaryLabel>> = BTreeMap::new();
    let mut missing = Vec::new();
    for (key, c) in consensus.iter().filter(|(k, _)| selected.contains(k.run_id.as_str())) {
        match classifier.get(key) {
            Some(&label) => {
                human.entry(key.run_id.as_str()).or_default().push(c.layer1);
                predicted.entry(key.run_id.as_str()).or_default().push(label);
            }
            None => missing.push(key.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(ReportError::CoverageGap(missing));
    }

    let mut f1_table = BTreeMap::new();
    let mut ranking_human = BTreeMap::new();
    let mut ranking_classifier = BTreeMap::new();
    for system in &selected {
        let h = &human[system];
        let p = &predicted[system];
        f1_table.insert(system.to_string(), f1_agreement(h, p)?);
        ranking_human.insert(
            system.to_string(),
            h.iter().filter(|&&l| l == Layer1Label::N).count() as u64,
        );
        ranking_classifier.insert(
            system.to_string(),
            p.iter().filter(|&&l| l == BinaryLabel::N).count() as u64,
        );
    }
    let a: Vec<f64> = ranking_human.values().map(|&v| v as f64).collect();
    let b: Vec<f64> = ranking_classifier.values().map(|&v| v as f64).collect();
    let tau = kendall_tau(&a, &b).ok();
    Ok(ComparisonReport {
        tau,
        f1_table,
        ranking_human,
        ranking_classifier,
    })
}

/// Agreement among raters on the outputs they all judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapAgreement {
    pub raters: Vec<String>,
    /// Outputs judged by every rater.
    pub items: usize,
    /// Shared outputs still missing a judgment from some rater.
    pub incomplete: usize,
    pub kappa: Option<f64>,
    pub kappa_interpretation: Option<String>,
    /// Outputs where every rater gave an acceptability score.
    pub icc_items: usize,
    pub icc: Option<f64>,
}

/// Fleiss' κ on neutrality labels and ICC(3,1) on acceptability scores over
/// the `shared` outputs. Undefined statistics come back as `None`.
pub fn overlap_agreement(
    records: &[AnnotationRecord],
    shared: &[OutputKey],
    raters: &[String],
) -> Result<OverlapAgreement, ReportError> {
    let mut raters: Vec<String> = raters.to_vec();
    raters.sort();
    raters.dedup();
    let grouped = group_by_output(records);
    let mut label_rows = Vec::new();
    let mut score_rows = Vec::new();
    let mut incomplete = 0;
    for key in shared {
        let by_rater: HashMap<&str, &AnnotationRecord> = grouped
            .get(key)
            .map(|g| g.iter().map(|r| (r.rater_id.as_str(), r)).collect())
            .unwrap_or_default();
        let judged: Option<Vec<&AnnotationRecord>> = raters.iter().map(|r| by_rater.get(r.as_str()).copied()).collect();
        let Some(judged) = judged else {
            incomplete += 1;
            continue;
        };
        label_rows.push(judged.iter().map(|r| r.layer1.index()).collect::<Vec<_>>());
        if let Some(scores) = judged
            .iter()
            .map(|r| r.layer2.map(|l| f64::from(l.numeric())))
            .collect::<Option<Vec<f64>>>()
        {
            score_rows.push(scores);
        }
    }
    let kappa = CountsMatrix::from_assignments(&label_rows, Layer1Label::ALL.len())
        .and_then(|m| fleiss_kappa(&m))
        .ok();
    let icc_items = score_rows.len();
    let icc = RatingsMatrix::new(score_rows).and_then(|m| icc3(&m)).ok();
    Ok(OverlapAgreement {
        raters,
        items: label_rows.len(),
        incomplete,
        kappa,
        kappa_interpretation: kappa.map(|k| interpret_kappa(k).to_string()),
        icc_items,
        icc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub run_id: String,
    pub segments: usize,
    pub bleu_gendered: f64,
    pub chrf_gendered: f64,
    pub bleu_neutral: f64,
    pub chrf_neutral: f64,
    /// Externally supplied neural metric scores.
    pub bleurt: Option<f64>,
    pub comet: Option<f64>,
}

/// Corpus BLEU and chrF per run against both references.
pub fn score_runs(outputs: &[SystemOutput], corpus: &[CorpusEntry]) -> Result<Vec<ScoreRow>, ReportError> {
    let refs: HashMap<&str, &CorpusEntry> = corpus.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut runs: BTreeMap<&str, Vec<&SystemOutput>> = BTreeMap::new();
    for o in outputs {
        runs.entry(o.run_id.as_str()).or_default().push(o);
    }
    let mut rows = Vec::new();
    for (run_id, mut outs) in runs {
        outs.sort_by(|a, b| a.entry_id.cmp(&b.entry_id));
        let mut hyps = Vec::with_capacity(outs.len());
        let mut gendered = Vec::with_capacity(outs.len());
        let mut neutral = Vec::with_capacity(outs.len());
        for o in outs {
            let entry = refs
                .get(o.entry_id.as_str())
                .ok_or_else(|| ReportError::MissingReference(o.entry_id.clone()))?;
            hyps.push(o.extracted.as_str());
            gendered.push(entry.ref_gendered.as_str());
            neutral.push(entry.ref_neutral.as_str());
        }
        rows.push(ScoreRow {
            run_id: run_id.to_string(),
            segments: hyps.len(),
            bleu_gendered: bleu(&hyps, &gendered)?,
            chrf_gendered: chrf(&hyps, &gendered)?,
            bleu_neutral: bleu(&hyps, &neutral)?,
            chrf_neutral: chrf(&hyps, &neutral)?,
            bleurt: None,
            comet: None,
        });
    }
    Ok(rows)
}

/// Descriptive metadata for a run, recovered from its outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub system_name: String,
    pub template_kind: TemplateKind,
    pub set_id: Option<SetId>,
    pub outputs: usize,
}

pub fn run_index(outputs: &[SystemOutput]) -> BTreeMap<String, RunInfo> {
    let mut index: BTreeMap<String, RunInfo> = BTreeMap::new();
    for o in outputs {
        index
            .entry(o.run_id.clone())
            .or_insert_with(|| RunInfo {
                system_name: o.system_name.clone(),
                template_kind: o.template_kind,
                set_id: o.set_id.clone(),
                outputs: 0,
            })
            .outputs += 1;
    }
    index
}

/// Everything the `report` step emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: BTreeMap<String, RunInfo>,
    pub neutrality: Vec<NeutralityRow>,
    pub acceptability: Vec<AcceptabilityRow>,
    pub acceptability_pooled: bool,
    pub agreement: Option<OverlapAgreement>,
    pub comparison: Option<ComparisonReport>,
    pub scores: Vec<ScoreRow>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned plain-text tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = |title: &str, table: Table| {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "{title}");
            out.push_str(&table.render());
        };

        let mut t = Table::new(["run", "total", "N", "G", "P", "N%", "G%", "P%"]);
        for row in &self.neutrality {
            t.push(distribution_cells(&row.run_id, &row.distribution));
        }
        section("Neutrality", t);

        let mut t = Table::new([
            "run", "group", "total", "Acc", "S_Acc", "S_Un", "Un", "Acc%", "S_Acc%", "S_Un%", "Un%",
        ]);
        for row in &self.acceptability {
            let mut cells = distribution_cells(&row.run_id, &row.distribution);
            let group = row.layer1.map_or("N+P".to_string(), |l| l.to_string());
            cells.insert(1, group);
            t.push(cells);
        }
        section("Acceptability", t);

        if let Some(a) = &self.agreement {
            let mut t = Table::new(["statistic", "value", "items"]);
            t.push(vec!["fleiss_kappa".into(), fmt_opt(a.kappa, 4), a.items.to_string()]);
            t.push(vec![
                "kappa_band".into(),
                a.kappa_interpretation.clone().unwrap_or_else(|| "-".into()),
                a.items.to_string(),
            ]);
            t.push(vec!["icc3_1".into(), fmt_opt(a.icc, 4), a.icc_items.to_string()]);
            t.push(vec!["incomplete".into(), a.incomplete.to_string(), "-".into()]);
            section(&format!("Overlap agreement ({})", a.raters.join(", ")), t);
        }

        if let Some(c) = &self.comparison {
            let mut t = Table::new(["run", "human_N", "classifier_N", "F1_overall", "F1_N", "F1_G"]);
            for (run, f1) in &c.f1_table {
                t.push(vec![
                    run.clone(),
                    c.ranking_human[run].to_string(),
                    c.ranking_classifier[run].to_string(),
                    format!("{:.2}", f1.weighted),
                    format!("{:.2}", f1.per_class[&BinaryLabel::N]),
                    format!("{:.2}", f1.per_class[&BinaryLabel::G]),
                ]);
            }
            section(&format!("Classifier comparison (tau = {})", fmt_opt(c.tau, 4)), t);
        }

        if !self.scores.is_empty() {
            let mut t = Table::new([
                "run", "segments", "BLEU_g", "chrF_g", "BLEU_n", "chrF_n", "BLEURT", "COMET",
            ]);
            for s in &self.scores {
                t.push(vec![
                    s.run_id.clone(),
                    s.segments.to_string(),
                    format!("{:.2}", s.bleu_gendered),
                    format!("{:.2}", s.chrf_gendered),
                    format!("{:.2}", s.bleu_neutral),
                    format!("{:.2}", s.chrf_neutral),
                    fmt_opt(s.bleurt, 2),
                    fmt_opt(s.comet, 2),
                ]);
            }
            section("Surface metrics", t);
        }
        out
    }
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.decimals$}"))
}

fn distribution_cells(run_id: &str, d: &Distribution) -> Vec<String> {
    let mut cells = vec![run_id.to_string(), d.total.to_string()];
    cells.extend(d.shares.iter().map(|s| s.count.to_string()));
    cells.extend(d.shares.iter().map(|s| format!("{:.2}", s.percent)));
    cells
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new<const N: usize>(header: [&str; N]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// First column left-aligned, the rest right-aligned.
    fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                let pad = w - cell.chars().count();
                if i == 0 {
                    s.push_str(cell);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str(&" ".repeat(pad));
                    s.push_str(cell);
                }
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

const PALETTE: [&str; 4] = ["#2b8a3e", "#c92a2a", "#e67700", "#868e96"];
const LABEL_WIDTH: f64 = 220.0;
const BAR_WIDTH: f64 = 500.0;
const BAR_HEIGHT: f64 = 22.0;
const ROW_GAP: f64 = 8.0;
const TOP: f64 = 40.0;

fn svg_open(out: &mut String, title: &str, rows: usize, legend: &[&str]) {
    let width = LABEL_WIDTH + BAR_WIDTH + 40.0;
    let height = TOP + rows as f64 * (BAR_HEIGHT + ROW_GAP) + 40.0;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="10" y="20" font-size="14" font-weight="bold">{}</text>"#,
        escape_xml(title)
    );
    let legend_y = height - 15.0;
    for (i, label) in legend.iter().enumerate() {
        let x = LABEL_WIDTH + i as f64 * 90.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{legend_y:.1}">{}</text>"#,
            legend_y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 16.0,
            escape_xml(label)
        );
    }
}

/// Horizontal 100% stacked bars, one per row.
fn stacked_bars(title: &str, legend: &[&str], rows: &[(String, &Distribution)]) -> String {
    let mut out = String::new();
    svg_open(&mut out, title, rows.len(), legend);
    for (i, (label, dist)) in rows.iter().enumerate() {
        let y = TOP + i as f64 * (BAR_HEIGHT + ROW_GAP);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LABEL_WIDTH - 8.0,
            y + BAR_HEIGHT * 0.7,
            escape_xml(label)
        );
        let mut x = LABEL_WIDTH;
        for (j, share) in dist.shares.iter().enumerate() {
            let w = BAR_WIDTH * share.percent / 100.0;
            if w > 0.0 {
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{BAR_HEIGHT:.0}" fill="{}"><title>{} {:.2}% ({})</title></rect>"#,
                    PALETTE[j % PALETTE.len()],
                    escape_xml(&share.label),
                    share.percent,
                    share.count
                );
            }
            x += w;
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn neutrality_svg(rows: &[NeutralityRow]) -> String {
    let rows: Vec<(String, &Distribution)> = rows.iter().map(|r| (r.run_id.clone(), &r.distribution)).collect();
    stacked_bars("Neutrality (consensus labels)", &NEUTRALITY_LABELS, &rows)
}

pub fn acceptability_svg(rows: &[AcceptabilityRow]) -> String {
    let rows: Vec<(String, &Distribution)> = rows
        .iter()
        .map(|r| {
            let label = match r.layer1 {
                Some(l) => format!("{} [{l}]", r.run_id),
                None => r.run_id.clone(),
            };
            (label, &r.distribution)
        })
        .collect();
    stacked_bars("Acceptability of N and P outputs", &ACCEPTABILITY_LABELS, &rows)
}

/// Paired bars of human and classifier neutral counts per system.
pub fn classifier_svg(comparison: Option<&ComparisonReport>) -> String {
    let empty = BTreeMap::new();
    let (human, classifier) = comparison.map_or((&empty, &empty), |c| (&c.ranking_human, &c.ranking_classifier));
    let max = human
        .values()
        .chain(classifier.values())
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let title = match comparison.and_then(|c| c.tau) {
        Some(tau) => format!("Neutral outputs: human vs classifier (tau = {tau:.4})"),
        None => "Neutral outputs: human vs classifier".to_string(),
    };
    let mut out = String::new();
    svg_open(&mut out, &title, human.len(), &["human", "classifier"]);
    let half = BAR_HEIGHT / 2.0;
    for (i, (run, &h)) in human.iter().enumerate() {
        let y = TOP + i as f64 * (BAR_HEIGHT + ROW_GAP);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LABEL_WIDTH - 8.0,
            y + BAR_HEIGHT * 0.7,
            escape_xml(run)
        );
        for (j, count) in [h, classifier[run]].into_iter().enumerate() {
            let w = BAR_WIDTH * count as f64 / max;
            let _ = writeln!(
                out,
                r#"<rect x="{LABEL_WIDTH:.1}" y="{:.1}" width="{w:.2}" height="{half:.1}" fill="{}"><title>{count}</title></rect>"#,
                y + j as f64 * half,
                PALETTE[j],
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
