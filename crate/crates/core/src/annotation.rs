//! Two-layer manual evaluation: neutrality labels (N/G/P) and, for neutral or
//! partially neutral outputs, a 4-point acceptability judgment.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::postprocess::SystemOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer1Label {
    N,
    G,
    P,
}

impl Layer1Label {
    pub const ALL: [Layer1Label; 3] = [Layer1Label::N, Layer1Label::G, Layer1Label::P];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn requires_acceptability(self) -> bool {
        self != Layer1Label::G
    }
}

impl fmt::Display for Layer1Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer2Label {
    #[serde(rename = "Acc")]
    Acc,
    #[serde(rename = "S_Acc")]
    SAcc,
    #[serde(rename = "S_Un")]
    SUn,
    #[serde(rename = "Un")]
    Un,
}

impl Layer2Label {
    pub const ALL: [Layer2Label; 4] = [Layer2Label::Acc, Layer2Label::SAcc, Layer2Label::SUn, Layer2Label::Un];

    pub fn numeric(self) -> u8 {
        match self {
            Layer2Label::Acc => 4,
            Layer2Label::SAcc => 3,
            Layer2Label::SUn => 2,
            Layer2Label::Un => 1,
        }
    }

    pub fn from_numeric(value: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.numeric() == value)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layer2Label::Acc => "Acc",
            Layer2Label::SAcc => "S_Acc",
            Layer2Label::SUn => "S_Un",
            Layer2Label::Un => "Un",
        }
    }
}

impl fmt::Display for Layer2Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutputKey {
    pub run_id: String,
    pub entry_id: String,
}

impl OutputKey {
    pub fn new(run_id: impl Into<String>, entry_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            entry_id: entry_id.into(),
        }
    }

    pub fn of(output: &SystemOutput) -> Self {
        Self::new(&output.run_id, &output.entry_id)
    }
}

impl fmt::Display for OutputKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.run_id, self.entry_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub output_key: OutputKey,
    pub rater_id: String,
    pub layer1: Layer1Label,
    pub layer2: Option<Layer2Label>,
    #[serde(default)]
    pub note: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnnotationError {
    #[error("requested {requested} outputs but only {available} are available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("no raters given")]
    NoRaters,
    #[error("duplicate rater `{0}`")]
    DuplicateRater(String),
    #[error("overlap fraction {0} outside [0, 1]")]
    BadOverlap(f64),
    #[error("duplicate output key {0}")]
    DuplicateKey(OutputKey),
    #[error("reconciliation needs at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("records refer to different outputs: {0} and {1}")]
    MixedKeys(OutputKey, OutputKey),
    #[error("rater `{rater}` gave no acceptability judgment for {key}")]
    MissingAcceptability { key: OutputKey, rater: String },
    #[error("no records to average")]
    NoRecords,
    #[error("annotation store I/O: {0}")]
    Io(String),
    #[error("annotation store line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    AcceptabilityForbiddenForG,
    AcceptabilityRequiredForNP,
    EmptyRaterId,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::AcceptabilityForbiddenForG => "acceptability forbidden for G",
            Violation::AcceptabilityRequiredForNP => "acceptability required for N/P",
            Violation::EmptyRaterId => "rater id is empty",
        })
    }
}

/// Checks the layer gating: an acceptability judgment is present exactly
/// when the output is neutral or partially neutral.
pub fn validate_record(record: &AnnotationRecord) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if record.rater_id.trim().is_empty() {
        violations.push(Violation::EmptyRaterId);
    }
    match (record.layer1.requires_acceptability(), record.layer2.is_some()) {
        (false, true) => violations.push(Violation::AcceptabilityForbiddenForG),
        (true, false) => violations.push(Violation::AcceptabilityRequiredForNP),
        _ => {}
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub sample: Vec<OutputKey>,
    pub shared: Vec<OutputKey>,
    pub exclusive: BTreeMap<String, Vec<OutputKey>>,
    pub raters: Vec<String>,
    pub overlap_frac: f64,
    pub seed: u64,
}

impl AssignmentPlan {
    pub fn has_rater(&self, rater: &str) -> bool {
        self.raters.iter().any(|r| r == rater)
    }

    pub fn is_assigned(&self, rater: &str, key: &OutputKey) -> bool {
        self.shared.contains(key) || self.exclusive.get(rater).is_some_and(|keys| keys.contains(key))
    }

    /// Presentation order for one rater: exclusive keys with the shared keys
    /// spread evenly among them.
    pub fn rater_queue(&self, rater: &str) -> Option<Vec<OutputKey>> {
        let exclusive = self.exclusive.get(rater)?;
        let total = exclusive.len() + self.shared.len();
        let s = self.shared.len();
        let (mut shared_iter, mut excl_iter) = (self.shared.iter(), exclusive.iter());
        let mut emitted_shared = 0;
        let mut queue = Vec::with_capacity(total);
        for i in 0..total {
            // shared items due by position i+1
            let due = (i + 1) * s / total;
            if due > emitted_shared {
                queue.push(shared_iter.next().unwrap().clone());
                emitted_shared += 1;
            } else {
                queue.push(excl_iter.next().unwrap().clone());
            }
        }
        Some(queue)
    }

    /// Opaque per-plan identifier of an output, safe to show to raters.
    pub fn task_id(&self, key: &OutputKey) -> String {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(key.run_id.as_bytes());
        h.update([0]);
        h.update(key.entry_id.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

/// Fisher-Yates permutation of `0..len` driven by a ChaCha8 stream.
pub fn seeded_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

pub fn shared_count(n: usize, overlap_frac: f64) -> usize {
    ((overlap_frac * n as f64).round() as usize).min(n)
}

fn check_sampling_args(raters: &[String], overlap_frac: f64) -> Result<(), AnnotationError> {
    if raters.is_empty() {
        return Err(AnnotationError::NoRaters);
    }
    let mut seen = BTreeSet::new();
    for r in raters {
        if !seen.insert(r) {
            return Err(AnnotationError::DuplicateRater(r.clone()));
        }
    }
    if !(0.0..=1.0).contains(&overlap_frac) {
        return Err(AnnotationError::BadOverlap(overlap_frac));
    }
    Ok(())
}

/// Draws `n` keys without replacement; the first `round(overlap_frac * n)`
/// drawn are judged by every rater and the rest are dealt round-robin.
pub fn sample_keys(
    keys: &[OutputKey],
    n: usize,
    raters: &[String],
    overlap_frac: f64,
    seed: u64,
) -> Result<AssignmentPlan, AnnotationError> {
    check_sampling_args(raters, overlap_frac)?;
    if n > keys.len() {
        return Err(AnnotationError::SampleTooLarge {
            requested: n,
            available: keys.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for k in keys {
        if !seen.insert(k) {
            return Err(AnnotationError::DuplicateKey(k.clone()));
        }
    }

    let sample: Vec<OutputKey> = seeded_permutation(keys.len(), seed)
        .into_iter()
        .take(n)
        .map(|i| keys[i].clone())
        .collect();
    let shared_n = shared_count(n, overlap_frac);
    let shared = sample[..shared_n].to_vec();
    let mut exclusive: BTreeMap<String, Vec<OutputKey>> = raters.iter().map(|r| (r.clone(), Vec::new())).collect();
    for (i, key) in sample[shared_n..].iter().enumerate() {
        exclusive.get_mut(&raters[i % raters.len()]).unwrap().push(key.clone());
    }
    Ok(AssignmentPlan {
        sample,
        shared,
        exclusive,
        raters: raters.to_vec(),
        overlap_frac,
        seed,
    })
}

pub fn sample_outputs(
    outputs: &[SystemOutput],
    n: usize,
    raters: &[String],
    overlap_frac: f64,
    seed: u64,
) -> Result<AssignmentPlan, AnnotationError> {
    let keys: Vec<OutputKey> = outputs.iter().map(OutputKey::of).collect();
    sample_keys(&keys, n, raters, overlap_frac, seed)
}

fn run_seed(seed: u64, run_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(run_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Samples every run and merges the per-run plans.
///
/// With `same_entries`, one entry-level draw (over entries present in every
/// run) is applied to all runs, so each system is judged on the same source
/// sentences with the same rater split. Otherwise each run is drawn
/// independently from a seed derived from `seed` and its run id.
pub fn sample_runs(
    runs: &BTreeMap<String, Vec<String>>,
    n: usize,
    raters: &[String],
    overlap_frac: f64,
    seed: u64,
    same_entries: bool,
) -> Result<AssignmentPlan, AnnotationError> {
    check_sampling_args(raters, overlap_frac)?;
    let mut merged = AssignmentPlan {
        sample: Vec::new(),
        shared: Vec::new(),
        exclusive: raters.iter().map(|r| (r.clone(), Vec::new())).collect(),
        raters: raters.to_vec(),
        overlap_frac,
        seed,
    };
    let entry_plan = if same_entries {
        let mut common: Option<BTreeSet<&String>> = None;
        for entries in runs.values() {
            let set: BTreeSet<&String> = entries.iter().collect();
            common = Some(match common {
                None => set,
                Some(c) => c.intersection(&set).copied().collect(),
            });
        }
        let keys: Vec<OutputKey> = common
            .unwrap_or_default()
            .into_iter()
            .map(|e| OutputKey::new("", e.clone()))
            .collect();
        Some(sample_keys(&keys, n, raters, overlap_frac, seed)?)
    } else {
        None
    };

    for (run_id, entries) in runs {
        let plan = match &entry_plan {
            Some(p) => p.clone(),
            None => {
                let keys: Vec<OutputKey> = entries.iter().map(|e| OutputKey::new("", e.clone())).collect();
                sample_keys(&keys, n, raters, overlap_frac, run_seed(seed, run_id))?
            }
        };
        let attach = |k: &OutputKey| OutputKey::new(run_id.clone(), k.entry_id.clone());
        merged.sample.extend(plan.sample.iter().map(attach));
        merged.shared.extend(plan.shared.iter().map(attach));
        for (rater, keys) in &plan.exclusive {
            merged.exclusive.get_mut(rater).unwrap().extend(keys.iter().map(attach));
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Unanimous,
    Majority,
    NeedsAdjudication,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    pub output_key: OutputKey,
    pub label: Option<Layer1Label>,
    pub agreement: Agreement,
    /// Acceptability judgments exactly as given, sorted by rater.
    pub layer2: Vec<(String, Option<Layer2Label>)>,
}

fn single_key(records: &[AnnotationRecord]) -> Result<&OutputKey, AnnotationError> {
    let key = &records.first().ok_or(AnnotationError::NoRecords)?.output_key;
    if let Some(other) = records.iter().find(|r| &r.output_key != key) {
        return Err(AnnotationError::MixedKeys(key.clone(), other.output_key.clone()));
    }
    Ok(key)
}

/// Neutrality consensus across raters: unanimous, strict majority, or
/// flagged for adjudication. Acceptability is passed through untouched.
pub fn reconcile_layer1(records: &[AnnotationRecord]) -> Result<ConsensusOutcome, AnnotationError> {
    if records.len() < 2 {
        return Err(AnnotationError::TooFewRecords(records.len()));
    }
    let key = single_key(records)?;
    let mut counts = [0usize; 3];
    for r in records {
        counts[r.layer1.index()] += 1;
    }
    let (best, &votes) = counts.iter().enumerate().max_by_key(|(_, &c)| c).unwrap();
    let (label, agreement) = if votes == records.len() {
        (Some(Layer1Label::ALL[best]), Agreement::Unanimous)
    } else if 2 * votes > records.len() {
        (Some(Layer1Label::ALL[best]), Agreement::Majority)
    } else {
        (None, Agreement::NeedsAdjudication)
    };
    let mut layer2: Vec<(String, Option<Layer2Label>)> =
        records.iter().map(|r| (r.rater_id.clone(), r.layer2)).collect();
    layer2.sort();
    Ok(ConsensusOutcome {
        output_key: key.clone(),
        label,
        agreement,
        layer2,
    })
}

/// Maps a mean acceptability score to the nearest category; exact midpoints
/// go to the less acceptable side.
pub fn nearest_acceptability(mean: f64) -> Layer2Label {
    Layer2Label::ALL
        .into_iter()
        .min_by(|a, b| {
            let da = (mean - f64::from(a.numeric())).abs();
            let db = (mean - f64::from(b.numeric())).abs();
            da.total_cmp(&db).then(a.numeric().cmp(&b.numeric()))
        })
        .unwrap()
}

pub fn average_overlap_acceptability(records: &[AnnotationRecord]) -> Result<(f64, Layer2Label), AnnotationError> {
    let key = single_key(records)?;
    let mut sum = 0u32;
    for r in records {
        let l2 = r.layer2.ok_or_else(|| AnnotationError::MissingAcceptability {
            key: key.clone(),
            rater: r.rater_id.clone(),
        })?;
        sum += u32::from(l2.numeric());
    }
    let mean = f64::from(sum) / records.len() as f64;
    Ok((mean, nearest_acceptability(mean)))
}

/// Keeps the latest record per (output, rater); equal timestamps resolve to
/// the later append.
pub fn latest_per_rater(records: &[AnnotationRecord]) -> BTreeMap<(OutputKey, String), AnnotationRecord> {
    let mut latest: BTreeMap<(OutputKey, String), AnnotationRecord> = BTreeMap::new();
    for r in records {
        let slot = (r.output_key.clone(), r.rater_id.clone());
        match latest.get(&slot) {
            Some(existing) if existing.timestamp > r.timestamp => {}
            _ => {
                latest.insert(slot, r.clone());
            }
        }
    }
    latest
}

/// Latest records grouped by output.
pub fn group_by_output(records: &[AnnotationRecord]) -> BTreeMap<OutputKey, Vec<AnnotationRecord>> {
    let mut grouped: BTreeMap<OutputKey, Vec<AnnotationRecord>> = BTreeMap::new();
    for ((key, _), record) in latest_per_rater(records) {
        grouped.entry(key).or_default().push(record);
    }
    grouped
}

struct StoreInner {
    file: Option<File>,
    records: Vec<AnnotationRecord>,
}

/// Append-only annotation log, optionally mirrored to a JSONL file.
pub struct AnnotationStore {
    path: Option<PathBuf>,
    inner: Mutex<StoreInner>,
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let file = File::open(path).map_err(|e| AnnotationError::Io(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AnnotationError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| AnnotationError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

impl AnnotationStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(StoreInner {
                file: None,
                records: Vec::new(),
            }),
        }
    }

    /// Opens (or creates) a JSONL store, loading existing records.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, AnnotationError> {
        let path = path.into();
        let records = if path.exists() {
            read_annotations(&path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| AnnotationError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(StoreInner {
                file: Some(file),
                records,
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, record: AnnotationRecord) -> Result<(), AnnotationError> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| AnnotationError::Io(e.to_string()))?;
        }
        inner.records.push(record);
        Ok(())
    }

    /// All records in append order.
    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.inner.lock().unwrap().records.clone()
    }

    pub fn latest(&self) -> BTreeMap<(OutputKey, String), AnnotationRecord> {
        latest_per_rater(&self.inner.lock().unwrap().records)
    }
}

/// Outputs judged by the given rater in a latest-record snapshot.
pub fn judged_by(
    snapshot: &BTreeMap<(OutputKey, String), AnnotationRecord>,
    rater: &str,
) -> HashMap<OutputKey, AnnotationRecord> {
    snapshot
        .iter()
        .filter(|((_, r), _)| r == rater)
        .map(|((k, _), rec)| (k.clone(), rec.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn rec(rater: &str, l1: Layer1Label, l2: Option<Layer2Label>) -> AnnotationRecord {
        AnnotationRecord {
            output_key: OutputKey::new("run", "e1"),
            rater_id: rater.into(),
            layer1: l1,
            layer2: l2,
            note: None,
            timestamp: Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
        }
    }

    fn keys(n: usize) -> Vec<OutputKey> {
        (0..n).map(|i| OutputKey::new("run", format!("e{i:03}"))).collect()
    }

    fn raters(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn gating_examples() {
        use Layer1Label::*;
        assert!(validate_record(&rec("a", G, None)).is_ok());
        assert_eq!(
            validate_record(&rec("a", G, Some(Layer2Label::Acc))).unwrap_err(),
            vec![Violation::AcceptabilityForbiddenForG]
        );
        assert_eq!(
            validate_record(&rec("a", N, None)).unwrap_err(),
            vec![Violation::AcceptabilityRequiredForNP]
        );
        assert_eq!(
            Violation::AcceptabilityForbiddenForG.to_string(),
            "acceptability forbidden for G"
        );
        assert_eq!(
            validate_record(&rec(" ", P, None)).unwrap_err(),
            vec![Violation::EmptyRaterId, Violation::AcceptabilityRequiredForNP]
        );
    }

    #[test]
    fn empty_sample() {
        let plan = sample_keys(&keys(5), 0, &raters(&["a"]), 0.1, 1).unwrap();
        assert!(plan.sample.is_empty() && plan.shared.is_empty());
        assert!(plan.exclusive["a"].is_empty());
    }

    #[test]
    fn paper_design_split() {
        let plan = sample_keys(&keys(750), 200, &raters(&["a", "b", "c"]), 0.10, 7).unwrap();
        assert_eq!(plan.shared.len(), 20);
        for r in ["a", "b", "c"] {
            assert_eq!(plan.exclusive[r].len(), 60);
        }
    }

    #[test]
    fn sampling_errors() {
        assert_eq!(
            sample_keys(&keys(3), 4, &raters(&["a"]), 0.1, 1).unwrap_err(),
            AnnotationError::SampleTooLarge {
                requested: 4,
                available: 3
            }
        );
        assert_eq!(
            sample_keys(&keys(3), 1, &[], 0.1, 1).unwrap_err(),
            AnnotationError::NoRaters
        );
        assert!(matches!(
            sample_keys(&keys(3), 1, &raters(&["a"]), 1.5, 1),
            Err(AnnotationError::BadOverlap(_))
        ));
        assert!(matches!(
            sample_keys(&keys(3), 1, &raters(&["a", "a"]), 0.1, 1),
            Err(AnnotationError::DuplicateRater(_))
        ));
    }

    #[test]
    fn rater_queue_interleaves_shared() {
        let plan = sample_keys(&keys(40), 40, &raters(&["a", "b"]), 0.2, 3).unwrap();
        let queue = plan.rater_queue("a").unwrap();
        assert_eq!(queue.len(), 8 + 16);
        let positions: Vec<usize> = queue
            .iter()
            .enumerate()
            .filter(|(_, k)| plan.shared.contains(k))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(positions, [2, 5, 8, 11, 14, 17, 20, 23]);
        assert!(plan.rater_queue("zed").is_none());
    }

    #[test]
    fn same_entries_across_runs() {
        let mut runs = BTreeMap::new();
        let entries: Vec<String> = (0..30).map(|i| format!("e{i}")).collect();
        runs.insert("sys1".to_string(), entries.clone());
        runs.insert("sys2".to_string(), entries);
        let plan = sample_runs(&runs, 10, &raters(&["a", "b"]), 0.2, 9, true).unwrap();
        assert_eq!(plan.sample.len(), 20);
        let per_run = |run: &str| -> Vec<String> {
            plan.sample
                .iter()
                .filter(|k| k.run_id == run)
                .map(|k| k.entry_id.clone())
                .collect()
        };
        assert_eq!(per_run("sys1"), per_run("sys2"));
        let independent = sample_runs(&runs, 10, &raters(&["a", "b"]), 0.2, 9, false).unwrap();
        assert_eq!(independent.shared.len(), 4);
    }

    #[test]
    fn reconciliation() {
        use Layer1Label::*;
        let out = reconcile_layer1(&[rec("a", N, None), rec("b", N, None), rec("c", N, None)]).unwrap();
        assert_eq!((out.label, out.agreement), (Some(N), Agreement::Unanimous));
        let out = reconcile_layer1(&[rec("a", N, None), rec("b", N, None), rec("c", G, None)]).unwrap();
        assert_eq!((out.label, out.agreement), (Some(N), Agreement::Majority));
        let out = reconcile_layer1(&[rec("a", N, None), rec("b", G, None), rec("c", P, None)]).unwrap();
        assert_eq!((out.label, out.agreement), (None, Agreement::NeedsAdjudication));
        assert_eq!(
            reconcile_layer1(&[rec("a", N, None)]).unwrap_err(),
            AnnotationError::TooFewRecords(1)
        );
    }

    #[test]
    fn layer2_passes_through_unreconciled() {
        use Layer1Label::*;
        let out = reconcile_layer1(&[rec("b", N, Some(Layer2Label::Un)), rec("a", N, Some(Layer2Label::Acc))]).unwrap();
        assert_eq!(
            out.layer2,
            vec![
                ("a".to_string(), Some(Layer2Label::Acc)),
                ("b".to_string(), Some(Layer2Label::Un))
            ]
        );
    }

    #[test]
    fn overlap_averaging() {
        use Layer1Label::N;
        use Layer2Label::*;
        let avg = |ls: &[Layer2Label]| {
            let rs: Vec<_> = ls
                .iter()
                .enumerate()
                .map(|(i, &l)| rec(&format!("r{i}"), N, Some(l)))
                .collect();
            average_overlap_acceptability(&rs).unwrap()
        };
        assert_eq!(avg(&[Acc, Acc, Acc]), (4.0, Acc));
        assert_eq!(avg(&[Acc, SAcc, SUn]), (3.0, SAcc));
        assert_eq!(avg(&[Acc, SUn]), (3.0, SAcc));
        assert_eq!(avg(&[Acc, SAcc]), (3.5, SAcc));
        assert_eq!(avg(&[SUn, Un]), (1.5, Un));
        assert!(matches!(
            average_overlap_acceptability(&[rec("a", N, Some(Acc)), rec("b", Layer1Label::G, None)]),
            Err(AnnotationError::MissingAcceptability { .. })
        ));
    }

    #[test]
    fn latest_record_wins() {
        use Layer1Label::*;
        let mut first = rec("a", N, Some(Layer2Label::Acc));
        let mut second = rec("a", G, None);
        second.timestamp = first.timestamp + chrono::Duration::seconds(5);
        let latest = latest_per_rater(&[second.clone(), first.clone()]);
        assert_eq!(latest.len(), 1);
        assert_eq!(latest.values().next().unwrap().layer1, G);
        first.timestamp = second.timestamp;
        let latest = latest_per_rater(&[second, first]);
        assert_eq!(latest.values().next().unwrap().layer1, N);
    }

    #[test]
    fn store_round_trips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotations.jsonl");
        let store = AnnotationStore::open(&path).unwrap();
        store.append(rec("a", Layer1Label::N, Some(Layer2Label::SAcc))).unwrap();
        store.append(rec("b", Layer1Label::G, None)).unwrap();
        drop(store);
        let reopened = AnnotationStore::open(&path).unwrap();
        assert_eq!(reopened.records().len(), 2);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.contains("\"layer2\":\"S_Acc\""));
    }
}
