//! Run directory layout and the manifest that records every step.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use gnt_core::pipeline::outputs_from_jsonl;
use gnt_core::prompt::{LengthReport, SetId, TemplateKind};
use gnt_core::{AssignmentPlan, BackendConfig, CorpusEntry, SystemOutput};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";
pub const CORPUS: &str = "corpus.jsonl";
pub const OUTPUTS_DIR: &str = "outputs";
pub const PLAN: &str = "plan.json";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const CLASSIFIER_LABELS: &str = "classifier_labels.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const FIG_NEUTRALITY: &str = "fig_neutrality.svg";
pub const FIG_ACCEPTABILITY: &str = "fig_acceptability.svg";
pub const FIG_CLASSIFIER: &str = "fig_classifier.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub source_path: String,
    pub entries: usize,
    pub entries_with_spans: usize,
    pub prepared_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub system_name: String,
    pub config_name: String,
    pub template_kind: TemplateKind,
    pub set_id: Option<SetId>,
    pub shots: Option<usize>,
    /// Backend settings as used, without any credential value.
    pub backend: BackendConfig,
    pub outputs_path: String,
    pub outputs: usize,
    pub failures: usize,
    pub prompt_length: Option<LengthReport>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub n_per_run: usize,
    pub raters: Vec<String>,
    pub overlap_frac: f64,
    pub seed: u64,
    pub same_entries: bool,
    pub runs: Vec<String>,
    pub plan_path: String,
    pub sampled_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub created_at: Option<DateTime<Utc>>,
    pub updated_at: Option<DateTime<Utc>>,
    pub corpus: Option<CorpusRecord>,
    /// Keyed by run id.
    pub translations: BTreeMap<String, TranslationRecord>,
    pub sample: Option<SampleRecord>,
    /// Artifact name to path relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

/// A run directory on disk.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn outputs_path(&self, config_or_run: &str) -> PathBuf {
        self.root.join(OUTPUTS_DIR).join(format!("{config_or_run}.jsonl"))
    }

    pub fn create(&self) -> Result<()> {
        fs::create_dir_all(self.root.join(OUTPUTS_DIR))
            .with_context(|| format!("cannot create run directory {}", self.root.display()))
    }

    pub fn load_manifest(&self) -> Result<RunManifest> {
        let path = self.path(MANIFEST);
        if !path.exists() {
            return Ok(RunManifest::default());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))
    }

    pub fn save_manifest(&self, manifest: &mut RunManifest) -> Result<()> {
        let now = Utc::now();
        manifest.created_at.get_or_insert(now);
        manifest.updated_at = Some(now);
        self.write(MANIFEST, &(serde_json::to_string_pretty(manifest)? + "\n"))
    }

    pub fn write(&self, relative: &str, contents: &str) -> Result<()> {
        let path = self.path(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn read(&self, relative: &str) -> Result<String> {
        let path = self.path(relative);
        fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))
    }

    pub fn load_corpus(&self) -> Result<Vec<CorpusEntry>> {
        let text = self.read(CORPUS).context("run `prepare` first")?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{CORPUS} line {}", i + 1)))
            .collect()
    }

    /// Every output file under `outputs/`, in file-name order.
    pub fn load_outputs(&self) -> Result<Vec<SystemOutput>> {
        let dir = self.root.join(OUTPUTS_DIR);
        let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl") && !is_failure_log(p))
                .collect(),
            Err(_) => Vec::new(),
        };
        files.sort();
        let mut outputs = Vec::new();
        for file in files {
            let text = fs::read_to_string(&file)?;
            outputs.extend(outputs_from_jsonl(&text).with_context(|| file.display().to_string())?);
        }
        Ok(outputs)
    }

    pub fn load_plan(&self) -> Result<AssignmentPlan> {
        let text = self.read(PLAN).context("run `sample` first")?;
        serde_json::from_str(&text).with_context(|| format!("malformed {PLAN}"))
    }

    pub fn has(&self, relative: &str) -> bool {
        self.path(relative).exists()
    }
}

pub fn failure_log_name(config_name: &str) -> String {
    format!("{OUTPUTS_DIR}/{config_name}.failures.jsonl")
}

fn is_failure_log(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".failures.jsonl"))
}
