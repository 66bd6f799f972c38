//! Subcommand definitions and their implementations. Each command returns
//! the text printed on success.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use gnt_core::annotation::{read_annotations, sample_runs, AnnotationStore};
use gnt_core::backend::build_backend;
use gnt_core::corpus::{derive_term_spans, parse_corpus};
use gnt_core::pipeline::{neutral_fixture, outputs_to_jsonl, translate_corpus, PromptConfig};
use gnt_core::prompt::{builtin_exemplars, parse_exemplars, DEFAULT_SHOTS};
use gnt_core::report::{
    acceptability_distribution, acceptability_svg, build_comparison, classifier_svg, consensus_labels,
    neutrality_distribution, neutrality_svg, overlap_agreement, run_index, score_runs, ComparisonReport,
    OverlapAgreement, Report, ReportError, ScoreRow,
};
use gnt_core::stats::parse_classifier_labels;
use gnt_core::{AnnotationRecord, BackendConfig, BackendKind, ExemplarSet, ExtractionStatus, SetId, TemplateKind};

use crate::config::ConfigFile;
use crate::run_dir::{self, failure_log_name, CorpusRecord, RunDir, SampleRecord, TranslationRecord};
use crate::server::{self, ServerState};

#[derive(Debug, Parser)]
#[command(name = "gntbench", version, about = "Gender-neutral translation bench")]
pub struct Cli {
    /// Run directory holding every artifact of one study.
    #[arg(long, global = true, default_value = "run")]
    pub run_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a TSV corpus and derive the gendered term spans.
    Prepare(PrepareArgs),
    /// Prompt a backend for every corpus entry and store the extracted outputs.
    Translate(TranslateArgs),
    /// Draw the annotation sample and split it among raters.
    Sample(SampleArgs),
    /// Serve annotation tasks over HTTP.
    Serve(ServeArgs),
    /// Inter-rater agreement on the shared outputs.
    Agree(AgreeArgs),
    /// BLEU and chrF against both references.
    Score(ScoreArgs),
    /// Classifier labels against human consensus.
    Compare(CompareArgs),
    /// Tables and figures from the annotations.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::Translate(_) => "translate",
            Command::Sample(_) => "sample",
            Command::Serve(_) => "serve",
            Command::Agree(_) => "agree",
            Command::Score(_) => "score",
            Command::Compare(_) => "compare",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// TSV with columns id, src_en, ref_gendered, ref_neutral.
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// TOML file with `[prompt]` and `[backend]` defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// zero_shot, contr, cot_src or cot_tgt.
    #[arg(long)]
    pub template: Option<TemplateKind>,
    /// Exemplar set: seen, not_seen or custom:NAME.
    #[arg(long)]
    pub exemplars: Option<SetId>,
    /// TSV of exemplar sets replacing the bundled ones.
    #[arg(long)]
    pub exemplar_file: Option<PathBuf>,
    /// Number of demonstrations kept from the set.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Run the three few-shot templates with both bundled sets.
    #[arg(long, conflicts_with_all = ["template", "exemplars"])]
    pub matrix: bool,
    /// Label for the system in run ids; defaults to the model or mock name.
    #[arg(long)]
    pub system_name: Option<String>,
    /// http_chat, mock_echo_neutral or mock_fixed.
    #[arg(long)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub endpoint_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Name of the environment variable that holds the API key.
    #[arg(long)]
    pub credential_env: Option<String>,
    /// Answer returned by the mock_fixed backend.
    #[arg(long)]
    pub fixed_text: Option<String>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Outputs sampled per run.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    pub raters: Vec<String>,
    /// Fraction of each run's sample judged by every rater.
    #[arg(long, default_value_t = 0.10)]
    pub overlap: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the same source entries for every run.
    #[arg(long)]
    pub same_entries: bool,
    /// Restrict sampling to these run ids.
    #[arg(long, value_delimiter = ',')]
    pub runs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Annotation store; defaults to annotations.jsonl in the run directory.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Directory with a built UI bundle; a minimal page is served otherwise.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Classifier labels; defaults to classifier_labels.tsv in the run directory.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Run ids to compare; all annotated runs when omitted.
    #[arg(long, value_delimiter = ',')]
    pub systems: Vec<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report N and P acceptability separately instead of pooled.
    #[arg(long)]
    pub separate_np: bool,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub systems: Vec<String>,
}

pub fn run(cli: Cli) -> Result<String> {
    let dir = RunDir::new(cli.run_dir);
    match cli.command {
        Command::Prepare(a) => prepare(&dir, &a),
        Command::Translate(a) => translate(&dir, &a),
        Command::Sample(a) => sample(&dir, &a),
        Command::Serve(a) => serve(&dir, a),
        Command::Agree(a) => agree(&dir, &a),
        Command::Score(a) => score(&dir, &a),
        Command::Compare(a) => compare(&dir, &a),
        Command::Report(a) => report(&dir, &a),
    }
}

pub fn prepare(dir: &RunDir, args: &PrepareArgs) -> Result<String> {
    let text =
        std::fs::read_to_string(&args.corpus).with_context(|| format!("cannot read {}", args.corpus.display()))?;
    let mut entries = parse_corpus(&text)?;
    derive_term_spans(&mut entries);
    dir.create()?;
    let mut jsonl = String::new();
    for e in &entries {
        jsonl.push_str(&serde_json::to_string(e)?);
        jsonl.push('\n');
    }
    dir.write(run_dir::CORPUS, &jsonl)?;
    let with_spans = entries.iter().filter(|e| !e.term_spans.is_empty()).count();
    let mut manifest = dir.load_manifest()?;
    manifest.corpus = Some(CorpusRecord {
        source_path: args.corpus.display().to_string(),
        entries: entries.len(),
        entries_with_spans: with_spans,
        prepared_at: Utc::now(),
    });
    dir.save_manifest(&mut manifest)?;
    Ok(format!(
        "{} entries, {with_spans} with gendered term spans\n",
        entries.len()
    ))
}

fn backend_config(args: &TranslateArgs, file: &ConfigFile) -> Result<BackendConfig> {
    let mut c = file.backend.clone();
    if let Some(k) = args.backend {
        c.kind = k;
    }
    if let Some(u) = &args.endpoint_url {
        c.endpoint_url = Some(u.clone());
    }
    if let Some(m) = &args.model {
        c.model_name = m.clone();
    }
    if let Some(t) = args.temperature {
        c.temperature = t;
    }
    if let Some(n) = args.max_attempts {
        c.max_attempts = n;
    }
    if let Some(n) = args.max_in_flight {
        c.max_in_flight = n;
    }
    if let Some(v) = &args.credential_env {
        c.credential_env_var = v.clone();
    }
    if let Some(t) = &args.fixed_text {
        c.fixed_text = Some(t.clone());
    }
    c.validate()?;
    Ok(c)
}

fn prompt_configs(args: &TranslateArgs, file: &ConfigFile) -> Result<Vec<(PromptConfig, Option<usize>)>> {
    let sets = match &args.exemplar_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            parse_exemplars(&text)?
        }
        None => builtin_exemplars(),
    };
    let shots = args.shots.or(file.prompt.shots).unwrap_or(DEFAULT_SHOTS);
    let pick = |id: &SetId| -> Result<ExemplarSet> {
        let set = sets
            .iter()
            .find(|s| &s.set_id == id)
            .cloned()
            .ok_or_else(|| anyhow!("no exemplar set `{id}`"))?;
        if shots == 0 || shots > set.triplets.len() {
            bail!("--shots {shots} outside 1..={} for set `{id}`", set.triplets.len());
        }
        Ok(set.truncated(shots))
    };

    if args.matrix {
        let mut configs = Vec::new();
        for kind in TemplateKind::FEW_SHOT {
            for id in [SetId::Seen, SetId::NotSeen] {
                configs.push((
                    PromptConfig {
                        template_kind: kind,
                        exemplars: Some(pick(&id)?),
                    },
                    Some(shots),
                ));
            }
        }
        return Ok(configs);
    }

    let kind = match (args.template, &file.prompt.template) {
        (Some(k), _) => k,
        (None, Some(s)) => s.parse()?,
        (None, None) => bail!("no template given; use --template or --matrix"),
    };
    if !kind.is_few_shot() {
        return Ok(vec![(
            PromptConfig {
                template_kind: kind,
                exemplars: None,
            },
            None,
        )]);
    }
    let id = match (&args.exemplars, &file.prompt.exemplars) {
        (Some(id), _) => id.clone(),
        (None, Some(s)) => s.parse()?,
        (None, None) => bail!("template `{kind}` needs --exemplars"),
    };
    Ok(vec![(
        PromptConfig {
            template_kind: kind,
            exemplars: Some(pick(&id)?),
        },
        Some(shots),
    )])
}

pub fn translate(dir: &RunDir, args: &TranslateArgs) -> Result<String> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let backend_cfg = backend_config(args, &file)?;
    let configs = prompt_configs(args, &file)?;
    let system_name = args
        .system_name
        .clone()
        .or_else(|| file.prompt.system_name.clone())
        .unwrap_or_else(|| match backend_cfg.kind {
            BackendKind::HttpChat => backend_cfg.model_name.clone(),
            BackendKind::MockEchoNeutral => "mock_echo".to_string(),
            BackendKind::MockFixed => "mock_fixed".to_string(),
        });
    if system_name.is_empty() || system_name.contains(['/', '\\']) {
        bail!("system name `{system_name}` must be non-empty and free of `/` and `\\`");
    }

    let corpus = dir.load_corpus()?;
    let backend = build_backend(&backend_cfg, neutral_fixture(&corpus))?;
    let mut manifest = dir.load_manifest()?;
    let mut out = String::new();
    for (config, shots) in configs {
        let result = translate_corpus(
            &corpus,
            &system_name,
            &config,
            backend.as_ref(),
            backend_cfg.max_in_flight,
        )?;
        let outputs_rel = format!("{}/{}.jsonl", run_dir::OUTPUTS_DIR, result.run_id);
        dir.write(&outputs_rel, &outputs_to_jsonl(&result.outputs))?;
        let failures_rel = failure_log_name(&result.run_id);
        if result.failures.is_empty() {
            let _ = std::fs::remove_file(dir.path(&failures_rel));
        } else {
            let mut log = String::new();
            for f in &result.failures {
                log.push_str(&serde_json::to_string(f)?);
                log.push('\n');
            }
            dir.write(&failures_rel, &log)?;
        }
        let marker = result
            .outputs
            .iter()
            .filter(|o| o.extraction_status == ExtractionStatus::Marker)
            .count();
        let _ = write!(
            out,
            "{}: {} outputs, {} failures, {} marker extractions",
            result.run_id,
            result.outputs.len(),
            result.failures.len(),
            marker
        );
        if let Some(len) = result.prompt_length {
            let _ = write!(
                out,
                ", prompt {} tokens / {} chars",
                len.whitespace_tokens, len.characters
            );
        }
        out.push('\n');
        manifest.translations.insert(
            result.run_id.clone(),
            TranslationRecord {
                system_name: system_name.clone(),
                config_name: config.name(),
                template_kind: config.template_kind,
                set_id: config.set_id().cloned(),
                shots,
                backend: backend_cfg.clone(),
                outputs_path: outputs_rel,
                outputs: result.outputs.len(),
                failures: result.failures.len(),
                prompt_length: result.prompt_length,
                finished_at: Utc::now(),
            },
        );
    }
    dir.save_manifest(&mut manifest)?;
    Ok(out)
}

pub fn sample(dir: &RunDir, args: &SampleArgs) -> Result<String> {
    let outputs = dir.load_outputs()?;
    let mut runs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for o in &outputs {
        runs.entry(o.run_id.clone()).or_default().push(o.entry_id.clone());
    }
    if !args.runs.is_empty() {
        for r in &args.runs {
            if !runs.contains_key(r) {
                bail!("unknown run `{r}`");
            }
        }
        runs.retain(|k, _| args.runs.contains(k));
    }
    if runs.is_empty() {
        bail!("no outputs to sample; run `translate` first");
    }
    let plan = sample_runs(&runs, args.n, &args.raters, args.overlap, args.seed, args.same_entries)?;
    dir.write(run_dir::PLAN, &(serde_json::to_string_pretty(&plan)? + "\n"))?;

    let mut manifest = dir.load_manifest()?;
    manifest.sample = Some(SampleRecord {
        n_per_run: args.n,
        raters: args.raters.clone(),
        overlap_frac: args.overlap,
        seed: args.seed,
        same_entries: args.same_entries,
        runs: runs.keys().cloned().collect(),
        plan_path: run_dir::PLAN.to_string(),
        sampled_at: Utc::now(),
    });
    dir.save_manifest(&mut manifest)?;

    let per_run = |keys: &[gnt_core::OutputKey]| keys.len() / runs.len();
    let mut out = format!(
        "{} runs, {} outputs per run: {} shared / {} per rater (seed {})\n",
        runs.len(),
        args.n,
        per_run(&plan.shared),
        per_run(&plan.exclusive[&args.raters[0]]),
        args.seed
    );
    for rater in &plan.raters {
        let _ = writeln!(
            out,
            "  {rater}: {} exclusive + {} shared",
            plan.exclusive[rater].len(),
            plan.shared.len()
        );
    }
    Ok(out)
}

fn serve(dir: &RunDir, args: ServeArgs) -> Result<String> {
    let plan = dir.load_plan()?;
    let corpus = dir.load_corpus()?;
    let outputs = dir.load_outputs()?;
    let store_path = args.store.unwrap_or_else(|| dir.path(run_dir::ANNOTATIONS));
    let store = AnnotationStore::open(&store_path)?;
    let state = Arc::new(ServerState::new(plan, &corpus, &outputs, store, args.ui_dir)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(server::serve(state, args.listen))?;
    Ok(String::new())
}

fn load_annotations(dir: &RunDir) -> Result<Vec<AnnotationRecord>> {
    let path = dir.path(run_dir::ANNOTATIONS);
    if !path.exists() {
        bail!("no annotations at {}", path.display());
    }
    Ok(read_annotations(&path)?)
}

fn agreement(dir: &RunDir, records: &[AnnotationRecord]) -> Result<OverlapAgreement> {
    let plan = dir.load_plan()?;
    Ok(overlap_agreement(records, &plan.shared, &plan.raters)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

pub fn agree(dir: &RunDir, args: &AgreeArgs) -> Result<String> {
    let records = load_annotations(dir)?;
    let a = agreement(dir, &records)?;
    if args.json {
        return Ok(serde_json::to_string_pretty(&a)? + "\n");
    }
    let mut out = format!("raters: {}\n", a.raters.join(", "));
    let _ = writeln!(
        out,
        "shared outputs judged by all raters: {} ({} incomplete)",
        a.items, a.incomplete
    );
    let _ = write!(out, "kappa = {}", fmt_opt(a.kappa));
    if let Some(i) = &a.kappa_interpretation {
        let _ = write!(out, " ({i})");
    }
    let _ = writeln!(out, "\nicc(3,1) = {} over {} outputs", fmt_opt(a.icc), a.icc_items);
    Ok(out)
}

fn score_table(rows: &[ScoreRow]) -> String {
    let width = rows.iter().map(|r| r.run_id.len()).max().unwrap_or(0).max(3);
    let mut out = format!(
        "{:<width$}  {:>5}  {:>10}  {:>10}  {:>10}  {:>10}\n",
        "run", "segs", "BLEU(gen)", "chrF(gen)", "BLEU(neu)", "chrF(neu)"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>10.2}  {:>10.2}  {:>10.2}  {:>10.2}",
            r.run_id, r.segments, r.bleu_gendered, r.chrf_gendered, r.bleu_neutral, r.chrf_neutral
        );
    }
    out
}

pub fn score(dir: &RunDir, args: &ScoreArgs) -> Result<String> {
    let corpus = dir.load_corpus()?;
    let outputs = dir.load_outputs()?;
    if outputs.is_empty() {
        bail!("no outputs to score; run `translate` first");
    }
    let rows = score_runs(&outputs, &corpus)?;
    if args.json {
        return Ok(serde_json::to_string_pretty(&rows)? + "\n");
    }
    Ok(score_table(&rows))
}

fn comparison(
    dir: &RunDir,
    records: &[AnnotationRecord],
    labels: Option<&PathBuf>,
    systems: &[String],
) -> Result<ComparisonReport> {
    let path = labels.cloned().unwrap_or_else(|| dir.path(run_dir::CLASSIFIER_LABELS));
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let classifier = parse_classifier_labels(&text)?;
    let consensus = consensus_labels(records)?;
    Ok(build_comparison(&consensus, &classifier, systems)?)
}

pub fn compare(dir: &RunDir, args: &CompareArgs) -> Result<String> {
    let records = load_annotations(dir)?;
    let c = comparison(dir, &records, args.labels.as_ref(), &args.systems)?;
    if args.json {
        return Ok(serde_json::to_string_pretty(&c)? + "\n");
    }
    let report = Report {
        runs: BTreeMap::new(),
        neutrality: Vec::new(),
        acceptability: Vec::new(),
        acceptability_pooled: true,
        agreement: None,
        comparison: Some(c),
        scores: Vec::new(),
    };
    Ok(report.to_text())
}

pub fn report(dir: &RunDir, args: &ReportArgs) -> Result<String> {
    let records = load_annotations(dir)?;
    let consensus = consensus_labels(&records)?;
    let pooled = !args.separate_np;
    let acceptability = match acceptability_distribution(&consensus, pooled) {
        Ok(rows) => rows,
        Err(ReportError::NoAcceptability) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let outputs = dir.load_outputs()?;
    let agreement = if dir.has(run_dir::PLAN) {
        Some(agreement(dir, &records)?)
    } else {
        None
    };
    let labels_present = args.labels.is_some() || dir.has(run_dir::CLASSIFIER_LABELS);
    let comparison = if labels_present {
        Some(comparison(dir, &records, args.labels.as_ref(), &args.systems)?)
    } else {
        None
    };
    let scores = if dir.has(run_dir::CORPUS) && !outputs.is_empty() {
        score_runs(&outputs, &dir.load_corpus()?)?
    } else {
        Vec::new()
    };
    let report = Report {
        runs: run_index(&outputs),
        neutrality: neutrality_distribution(&consensus),
        acceptability,
        acceptability_pooled: pooled,
        agreement,
        comparison,
        scores,
    };

    let files = [
        (run_dir::REPORT_JSON, report.to_json()),
        (run_dir::REPORT_TXT, report.to_text()),
        (run_dir::FIG_NEUTRALITY, neutrality_svg(&report.neutrality)),
        (run_dir::FIG_ACCEPTABILITY, acceptability_svg(&report.acceptability)),
        (run_dir::FIG_CLASSIFIER, classifier_svg(report.comparison.as_ref())),
    ];
    let mut manifest = dir.load_manifest()?;
    for (name, contents) in &files {
        dir.write(name, contents)?;
        manifest.artifacts.insert(name.to_string(), name.to_string());
    }
    let referenced: BTreeSet<String> = manifest
        .artifacts
        .values()
        .cloned()
        .chain(manifest.translations.values().map(|t| t.outputs_path.clone()))
        .chain(manifest.sample.iter().map(|s| s.plan_path.clone()))
        .collect();
    let missing: Vec<&String> = referenced.iter().filter(|p| !dir.has(p)).collect();
    if !missing.is_empty() {
        bail!(
            "manifest references missing artifacts: {}",
            missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    dir.save_manifest(&mut manifest)?;

    let mut out = report.to_text();
    for (name, _) in &files {
        let _ = writeln!(out, "wrote {}", dir.path(name).display());
    }
    Ok(out)
}
