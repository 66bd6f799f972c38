//! Agreement and quality statistics: Fleiss' kappa, ICC(3,1), Kendall's
//! tau-b, classifier-vs-human F1, corpus BLEU and chrF.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{Layer1Label, OutputKey};
use crate::corpus::{check_header, split_row};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

fn invalid(msg: impl Into<String>) -> StatsError {
    StatsError::Invalid(msg.into())
}

/// Items × categories table of how many raters chose each category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsMatrix {
    rows: Vec<Vec<u32>>,
    raters_per_item: u32,
}

impl CountsMatrix {
    pub fn new(rows: Vec<Vec<u32>>) -> Result<Self, StatsError> {
        let first = rows.first().ok_or_else(|| invalid("counts matrix has no items"))?;
        let categories = first.len();
        if categories == 0 {
            return Err(invalid("counts matrix has no categories"));
        }
        let k: u32 = first.iter().sum();
        if k < 2 {
            return Err(invalid(format!("need at least 2 raters per item, found {k}")));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != categories {
                return Err(invalid(format!(
                    "item {i} has {} categories, expected {categories}",
                    row.len()
                )));
            }
            let sum: u32 = row.iter().sum();
            if sum != k {
                return Err(invalid(format!("item {i} has {sum} ratings, expected {k}")));
            }
        }
        Ok(Self {
            rows,
            raters_per_item: k,
        })
    }

    /// Builds counts from per-item category assignments, one category index
    /// per rater.
    pub fn from_assignments(items: &[Vec<usize>], categories: usize) -> Result<Self, StatsError> {
        let rows = items
            .iter()
            .map(|labels| {
                let mut row = vec![0u32; categories];
                for &c in labels {
                    *row.get_mut(c)
                        .ok_or_else(|| invalid(format!("category {c} out of range")))? += 1;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, StatsError>>()?;
        Self::new(rows)
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn raters_per_item(&self) -> u32 {
        self.raters_per_item
    }
}

/// Fleiss' kappa for a fixed number of raters per item.
pub fn fleiss_kappa(m: &CountsMatrix) -> Result<f64, StatsError> {
    let k = u64::from(m.raters_per_item);
    let items = m.rows.len() as u64;
    let categories = m.rows[0].len();

    let mut column_totals = vec![0u64; categories];
    let mut squares = 0u64;
    for row in &m.rows {
        for (j, &c) in row.iter().enumerate() {
            column_totals[j] += u64::from(c);
            squares += u64::from(c) * u64::from(c);
        }
    }
    if column_totals.iter().filter(|&&t| t > 0).count() < 2 {
        return Err(StatsError::Degenerate(
            "all assignments fall in one category; chance agreement is 1".into(),
        ));
    }

    let total = (items * k) as f64;
    // mean over items of (sum_j n_ij^2 - k) / (k (k - 1))
    let observed = (squares - items * k) as f64 / (items * k * (k - 1)) as f64;
    let expected: f64 = column_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / total;
            p * p
        })
        .sum();
    Ok((observed - expected) / (1.0 - expected))
}

/// Landis & Koch reading of a kappa value.
pub fn interpret_kappa(kappa: f64) -> &'static str {
    match kappa {
        k if k < 0.0 => "poor",
        k if k <= 0.20 => "slight",
        k if k <= 0.40 => "fair",
        k if k <= 0.60 => "moderate",
        k if k <= 0.80 => "substantial",
        _ => "almost perfect",
    }
}

/// Targets × raters table of numeric ratings. Complete by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsMatrix {
    rows: Vec<Vec<f64>>,
}

impl RatingsMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        if rows.len() < 2 {
            return Err(invalid("need at least 2 rated targets"));
        }
        let raters = rows[0].len();
        if raters < 2 {
            return Err(invalid("need at least 2 raters"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != raters {
                return Err(invalid(format!(
                    "target {i} has {} ratings, expected {raters}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("target {i} has a non-finite rating")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// ICC(3,1): two-way mixed effects, consistency, single rater.
///
/// `(MS_rows - MS_error) / (MS_rows + (k - 1) MS_error)` where the error mean
/// square is computed from the two-way residuals directly.
pub fn icc3(m: &RatingsMatrix) -> Result<f64, StatsError> {
    let rows = &m.rows;
    let first = rows[0][0];
    if rows.iter().flatten().all(|&v| v == first) {
        return Err(StatsError::Degenerate("all ratings are equal".into()));
    }
    let n = rows.len();
    let k = rows[0].len();
    let (nf, kf) = (n as f64, k as f64);

    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;

    let ms_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (nf - 1.0);
    let mut ss_residual = 0.0;
    for (row, rm) in rows.iter().zip(&row_means) {
        for (x, cm) in row.iter().zip(&col_means) {
            ss_residual += (x - rm - cm + grand).powi(2);
        }
    }
    let ms_error = ss_residual / ((nf - 1.0) * (kf - 1.0));

    let ss_total: f64 = rows.iter().flatten().map(|x| (x - grand).powi(2)).sum();
    let denom = ms_rows + (kf - 1.0) * ms_error;
    if denom <= 1e-12 * ss_total {
        return Err(StatsError::Degenerate(
            "no between-target or residual variance (only rater offsets differ)".into(),
        ));
    }
    Ok((ms_rows - ms_error) / denom)
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("finite values")
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let t = g.len() as u64;
            t * (t - 1) / 2
        })
        .sum()
}

/// Counts strict inversions while merge-sorting `v`.
fn merge_sort_inversions(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_sort_inversions(&mut v[..mid], &mut buf[..mid]);
    swaps += merge_sort_inversions(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut out) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[out] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[out] = v[i];
            i += 1;
        }
        out += 1;
    }
    buf[out..out + mid - i].copy_from_slice(&v[i..mid]);
    out += mid - i;
    buf[out..out + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b with tie correction, computed in O(n log n).
pub fn kendall_tau(rank_a: &[f64], rank_b: &[f64]) -> Result<f64, StatsError> {
    if rank_a.len() != rank_b.len() {
        return Err(invalid(format!(
            "length mismatch: {} vs {}",
            rank_a.len(),
            rank_b.len()
        )));
    }
    let n = rank_a.len();
    if n < 2 {
        return Err(StatsError::Degenerate("need at least 2 observations".into()));
    }
    if rank_a.iter().chain(rank_b).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite value"));
    }

    let mut pairs: Vec<(f64, f64)> = rank_a.iter().copied().zip(rank_b.iter().copied()).collect();
    pairs.sort_by(|x, y| cmp_f64(x.0, y.0).then(cmp_f64(x.1, y.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let a_sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_a = tied_pairs(&a_sorted);
    let ties_joint: u64 = pairs
        .chunk_by(|x, y| x == y)
        .map(|g| {
            let t = g.len() as u64;
            t * (t - 1) / 2
        })
        .sum();

    let mut b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_sort_inversions(&mut b, &mut buf);
    let ties_b = tied_pairs(&b);

    if ties_a == n0 || ties_b == n0 {
        return Err(StatsError::Degenerate("one ranking is constant".into()));
    }
    let numerator = n0 as f64 - ties_a as f64 - ties_b as f64 + ties_joint as f64 - 2.0 * discordant as f64;
    let denom = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok((numerator / denom).clamp(-1.0, 1.0))
}

/// Binary neutrality label produced by the external classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    N,
    G,
}

impl BinaryLabel {
    pub const ALL: [BinaryLabel; 2] = [BinaryLabel::N, BinaryLabel::G];

    /// Collapses a human label: partially neutral counts as gendered.
    pub fn from_human(label: Layer1Label) -> Self {
        match label {
            Layer1Label::N => BinaryLabel::N,
            Layer1Label::G | Layer1Label::P => BinaryLabel::G,
        }
    }
}

impl std::str::FromStr for BinaryLabel {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" => Ok(BinaryLabel::N),
            "G" => Ok(BinaryLabel::G),
            other => Err(invalid(format!("classifier label `{other}` is not N or G"))),
        }
    }
}

pub const CLASSIFIER_HEADER: [&str; 3] = ["run_id", "entry_id", "label"];

/// Reads classifier output: TSV `run_id\tentry_id\tlabel`, label N or G.
pub fn parse_classifier_labels(tsv_text: &str) -> Result<BTreeMap<OutputKey, BinaryLabel>, StatsError> {
    let mut lines = tsv_text.split('\n');
    check_header(lines.next(), &CLASSIFIER_HEADER).map_err(|e| invalid(e.to_string()))?;
    let mut labels = BTreeMap::new();
    for (offset, line) in lines.enumerate() {
        let row = offset + 2;
        if line.is_empty() {
            continue;
        }
        let [run_id, entry_id, label] =
            split_row(line, row, &CLASSIFIER_HEADER, &[]).map_err(|e| invalid(e.to_string()))?;
        let label: BinaryLabel = label.trim().parse().map_err(|e| invalid(format!("line {row}: {e}")))?;
        let key = OutputKey::new(run_id, entry_id);
        if labels.insert(key.clone(), label).is_some() {
            return Err(invalid(format!("line {row}: duplicate label for {key}")));
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    /// Per-class F1 in percent.
    pub per_class: BTreeMap<BinaryLabel, f64>,
    /// Support-weighted F1 in percent, weighted by human-truth support.
    pub weighted: f64,
    /// `confusion[truth][prediction]`
    pub confusion: BTreeMap<BinaryLabel, BTreeMap<BinaryLabel, u64>>,
    pub support: BTreeMap<BinaryLabel, u64>,
}

/// Agreement of classifier predictions with human ground truth, after
/// merging partially neutral human labels into gendered.
pub fn f1_agreement(human: &[Layer1Label], classifier: &[BinaryLabel]) -> Result<F1Report, StatsError> {
    if human.len() != classifier.len() {
        return Err(invalid(format!(
            "length mismatch: {} vs {}",
            human.len(),
            classifier.len()
        )));
    }
    if human.is_empty() {
        return Err(invalid("no labels"));
    }
    let mut confusion: BTreeMap<BinaryLabel, BTreeMap<BinaryLabel, u64>> = BinaryLabel::ALL
        .iter()
        .map(|&t| (t, BinaryLabel::ALL.iter().map(|&p| (p, 0)).collect()))
        .collect();
    for (&h, &p) in human.iter().zip(classifier) {
        *confusion
            .get_mut(&BinaryLabel::from_human(h))
            .unwrap()
            .get_mut(&p)
            .unwrap() += 1;
    }

    let mut per_class = BTreeMap::new();
    let mut support = BTreeMap::new();
    for class in BinaryLabel::ALL {
        let tp = confusion[&class][&class];
        let truth: u64 = confusion[&class].values().sum();
        let predicted: u64 = confusion.values().map(|row| row[&class]).sum();
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if truth == 0 { 0.0 } else { tp as f64 / truth as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.insert(class, 100.0 * f1);
        support.insert(class, truth);
    }
    let total = human.len() as f64;
    let weighted = BinaryLabel::ALL
        .iter()
        .map(|c| per_class[c] * support[c] as f64 / total)
        .sum();
    Ok(F1Report {
        per_class,
        weighted,
        confusion,
        support,
    })
}

fn is_edge_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Whitespace tokenization with punctuation peeled off word edges; every
/// peeled character becomes its own token.
pub fn bleu_tokenize(sentence: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for word in sentence.split_whitespace() {
        let start = word.find(|c: char| !is_edge_punct(c)).unwrap_or(word.len());
        let end = word
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_edge_punct(c))
            .map_or(start, |(i, c)| i + c.len_utf8());
        tokens.extend(word[..start].char_indices().map(|(i, c)| &word[i..i + c.len_utf8()]));
        if start < end {
            tokens.push(&word[start..end]);
        }
        let tail_from = end.max(start);
        tokens.extend(
            word[tail_from..]
                .char_indices()
                .map(|(i, c)| &word[tail_from + i..tail_from + i + c.len_utf8()]),
        );
    }
    tokens
}

fn ngram_counts<T: std::hash::Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn check_corpus(hypotheses: &[impl AsRef<str>], references: &[impl AsRef<str>]) -> Result<(), StatsError> {
    if hypotheses.len() != references.len() {
        return Err(invalid(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(invalid("empty corpus"));
    }
    Ok(())
}

pub const BLEU_MAX_ORDER: usize = 4;

/// Corpus BLEU in [0, 100] without smoothing. Orders for which the
/// hypotheses contain no n-grams at all are left out of the geometric mean;
/// any other zero precision yields 0.
pub fn bleu(hypotheses: &[impl AsRef<str>], references: &[impl AsRef<str>]) -> Result<f64, StatsError> {
    check_corpus(hypotheses, references)?;
    let mut matches = [0u64; BLEU_MAX_ORDER];
    let mut totals = [0u64; BLEU_MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0u64, 0u64);
    for (h, r) in hypotheses.iter().zip(references) {
        let h = bleu_tokenize(h.as_ref());
        let r = bleu_tokenize(r.as_ref());
        hyp_len += h.len() as u64;
        ref_len += r.len() as u64;
        for n in 1..=BLEU_MAX_ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            totals[n - 1] += h.len().saturating_sub(n - 1) as u64;
            matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<u64>();
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..BLEU_MAX_ORDER {
        if totals[n] == 0 {
            continue;
        }
        if matches[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matches[n] as f64 / totals[n] as f64).ln();
        orders += 1;
    }
    let brevity = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * brevity * (log_sum / orders as f64).exp())
}

pub const CHRF_MAX_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

/// Corpus chrF in [0, 100]: character n-grams of orders 1..=6 with
/// whitespace removed, per-order F-beta (beta = 2) over corpus-summed counts,
/// averaged over the orders both sides populate.
pub fn chrf(hypotheses: &[impl AsRef<str>], references: &[impl AsRef<str>]) -> Result<f64, StatsError> {
    check_corpus(hypotheses, references)?;
    let mut stats = [[0u64; 3]; CHRF_MAX_ORDER]; // [hyp, ref, match]
    for (h, r) in hypotheses.iter().zip(references) {
        let h: Vec<char> = h.as_ref().chars().filter(|c| !c.is_whitespace()).collect();
        let r: Vec<char> = r.as_ref().chars().filter(|c| !c.is_whitespace()).collect();
        for n in 1..=CHRF_MAX_ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            let s = &mut stats[n - 1];
            s[0] += hc.values().sum::<u64>();
            s[1] += rc.values().sum::<u64>();
            s[2] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<u64>();
        }
    }
    let beta2 = CHRF_BETA * CHRF_BETA;
    let mut sum = 0.0;
    let mut orders = 0;
    for [hyp, refs, matched] in stats {
        if hyp == 0 || refs == 0 {
            continue;
        }
        orders += 1;
        let p = matched as f64 / hyp as f64;
        let r = matched as f64 / refs as f64;
        if p + r > 0.0 {
            sum += (1.0 + beta2) * p * r / (beta2 * p + r);
        }
    }
    Ok(if orders == 0 { 0.0 } else { 100.0 * sum / orders as f64 })
}
