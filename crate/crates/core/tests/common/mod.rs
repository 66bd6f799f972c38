//! Independent reference implementations and fixture generators shared by the
//! integration tests. Each oracle uses the most direct formulation available,
//! deliberately different from the library's.

#![allow(dead_code)]

use std::collections::HashMap;

use gnt_core::corpus::{CorpusEntry, EditOp};
use gnt_core::stats::BinaryLabel;
use gnt_core::Layer1Label;
use rand::Rng;

pub const WRITERS_NEUTRAL: &str =
    "Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità di chi scrive ?";

pub const GOLDEN_CONTR: &str = "[English]: Secondly, how far does it increase transparency and accountability of the writers ? [Italian, gendered]: Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità degli scrittori ? [Italian, neutral]: Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità di chi scrive ?";

pub const GOLDEN_COT_SRC: &str = "Q: Translate the following English sentence into Italian using a gender-neutral language to refer to human entities: [Secondly, how far does it increase transparency and accountability of the writers]. Think step by step. A: In the English sentence there is one expression which refers to human entities and could be translated in a non-neutral way: <of the writers>. A gender-neutral translation of <of the writers> is <di chi scrive>. The final gender-neutral translation is [Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità di chi scrive ?]";

pub const GOLDEN_COT_TGT: &str = "Q: Translate the following English sentence into Italian using a gender-neutral language to refer to human entities: [Secondly, how far does it increase transparency and accountability of the writers ?]. Think step by step. A: The English sentence can be translated as [Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità degli scrittori ?]. There is one «expression with <non-neutral terms>» that refers to human entities: «<degli scrittori>». A gender-neutral alternative to «<degli scrittori>» is «di chi scrive». The final gender-neutral translation is [Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità di chi scrive ?].";

// ---- alignment ----

/// Every alignment of `a` against `b` with its unit cost.
pub fn all_alignments(a: &[&str], b: &[&str]) -> Vec<(usize, Vec<EditOp>)> {
    fn walk(a: &[&str], b: &[&str], cost: usize, ops: &mut Vec<EditOp>, out: &mut Vec<(usize, Vec<EditOp>)>) {
        if a.is_empty() && b.is_empty() {
            out.push((cost, ops.clone()));
            return;
        }
        if !a.is_empty() && !b.is_empty() {
            ops.push(EditOp::Diagonal);
            walk(&a[1..], &b[1..], cost + usize::from(a[0] != b[0]), ops, out);
            ops.pop();
        }
        if !a.is_empty() {
            ops.push(EditOp::Delete);
            walk(&a[1..], b, cost + 1, ops, out);
            ops.pop();
        }
        if !b.is_empty() {
            ops.push(EditOp::Insert);
            walk(a, &b[1..], cost + 1, ops, out);
            ops.pop();
        }
    }
    let mut out = Vec::new();
    walk(a, b, 0, &mut Vec::new(), &mut out);
    out
}

/// Minimum cost, then the lexicographically smallest op sequence, by full
/// enumeration.
pub fn align_oracle(a: &[&str], b: &[&str]) -> (usize, Vec<EditOp>) {
    all_alignments(a, b)
        .into_iter()
        .min()
        .expect("at least the empty alignment")
}

/// Same ordering as [`align_oracle`] via memoized recursion over suffixes.
/// The minimum of `(cost, ops)` decomposes over the first op because a fixed
/// first op adds a constant cost and a fixed prefix.
pub fn align_oracle_memo(a: &[&str], b: &[&str]) -> (usize, Vec<EditOp>) {
    fn best(
        a: &[&str],
        b: &[&str],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), (usize, Vec<EditOp>)>,
    ) -> (usize, Vec<EditOp>) {
        if let Some(hit) = memo.get(&(i, j)) {
            return hit.clone();
        }
        let mut options = Vec::new();
        if i == a.len() && j == b.len() {
            options.push((0, vec![]));
        }
        if i < a.len() && j < b.len() {
            let (c, rest) = best(a, b, i + 1, j + 1, memo);
            options.push((c + usize::from(a[i] != b[j]), [vec![EditOp::Diagonal], rest].concat()));
        }
        if i < a.len() {
            let (c, rest) = best(a, b, i + 1, j, memo);
            options.push((c + 1, [vec![EditOp::Delete], rest].concat()));
        }
        if j < b.len() {
            let (c, rest) = best(a, b, i, j + 1, memo);
            options.push((c + 1, [vec![EditOp::Insert], rest].concat()));
        }
        let winner = options.into_iter().min().unwrap();
        memo.insert((i, j), winner.clone());
        winner
    }
    best(a, b, 0, 0, &mut HashMap::new())
}

pub fn alignment_cost(a: &[&str], b: &[&str], ops: &[EditOp]) -> usize {
    let (mut i, mut j, mut cost) = (0, 0, 0);
    for op in ops {
        match op {
            EditOp::Diagonal => {
                cost += usize::from(a[i] != b[j]);
                i += 1;
                j += 1;
            }
            EditOp::Delete => {
                cost += 1;
                i += 1;
            }
            EditOp::Insert => {
                cost += 1;
                j += 1;
            }
        }
    }
    assert_eq!((i, j), (a.len(), b.len()), "alignment must consume both sides");
    cost
}

// ---- agreement statistics ----

/// Textbook Fleiss' kappa: mean per-item agreement against squared marginals.
pub fn fleiss_oracle(rows: &[Vec<u32>]) -> f64 {
    let n = rows.len() as f64;
    let k: u32 = rows[0].iter().sum();
    let kf = f64::from(k);
    let cats = rows[0].len();
    let p_bar = rows
        .iter()
        .map(|r| {
            let agree: f64 = r.iter().map(|&c| f64::from(c) * (f64::from(c) - 1.0)).sum();
            agree / (kf * (kf - 1.0))
        })
        .sum::<f64>()
        / n;
    let p_e: f64 = (0..cats)
        .map(|j| {
            let pj = rows.iter().map(|r| f64::from(r[j])).sum::<f64>() / (n * kf);
            pj * pj
        })
        .sum();
    (p_bar - p_e) / (1.0 - p_e)
}

/// ICC(3,1) from the classical two-way ANOVA decomposition
/// SS_error = SS_total - SS_rows - SS_cols.
pub fn icc_oracle(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let k = rows[0].len();
    let all: Vec<f64> = rows.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / (n * k) as f64;
    let ss_total: f64 = all.iter().map(|x| (x - grand) * (x - grand)).sum();
    let mut ss_rows = 0.0;
    for r in rows {
        let m = r.iter().sum::<f64>() / k as f64;
        ss_rows += k as f64 * (m - grand) * (m - grand);
    }
    let mut ss_cols = 0.0;
    for j in 0..k {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        ss_cols += n as f64 * (m - grand) * (m - grand);
    }
    let ss_err = ss_total - ss_rows - ss_cols;
    let bms = ss_rows / (n - 1) as f64;
    let ems = ss_err / ((n - 1) * (k - 1)) as f64;
    (bms - ems) / (bms + (k - 1) as f64 * ems)
}

/// Kendall tau-b by enumerating every pair.
pub fn kendall_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut concordant, mut discordant, mut only_a, mut only_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).signum() as i64 * i64::from(a[i] != a[j]);
            let db = (b[i] - b[j]).signum() as i64 * i64::from(b[i] != b[j]);
            match (da, db) {
                (0, 0) => {}
                (0, _) => only_a += 1,
                (_, 0) => only_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let untied_a = (concordant + discordant + only_b) as f64;
    let untied_b = (concordant + discordant + only_a) as f64;
    (concordant - discordant) as f64 / (untied_a * untied_b).sqrt()
}

/// Per-class F1 as 2TP / (2TP + FP + FN), in percent.
pub fn f1_oracle(human: &[Layer1Label], classifier: &[BinaryLabel]) -> (f64, f64, f64) {
    let truth: Vec<BinaryLabel> = human
        .iter()
        .map(|l| {
            if *l == Layer1Label::N {
                BinaryLabel::N
            } else {
                BinaryLabel::G
            }
        })
        .collect();
    let class_f1 = |c: BinaryLabel| {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fneg = 0.0;
        for (t, p) in truth.iter().zip(classifier) {
            match (*t == c, *p == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fneg += 1.0,
                _ => {}
            }
        }
        if tp == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * tp / (2.0 * tp + fp + fneg)
        }
    };
    let f_n = class_f1(BinaryLabel::N);
    let f_g = class_f1(BinaryLabel::G);
    let support_n = truth.iter().filter(|t| **t == BinaryLabel::N).count() as f64;
    let total = truth.len() as f64;
    (f_n, f_g, (f_n * support_n + f_g * (total - support_n)) / total)
}

// ---- surface metrics ----

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    m
}

/// Plain corpus BLEU-4 on whitespace tokens, no smoothing. Meant for inputs
/// without punctuation and with at least four tokens per hypothesis.
pub fn bleu_oracle(hyps: &[&str], refs: &[&str]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        let ht: Vec<&str> = h.split_whitespace().collect();
        let rt: Vec<&str> = rf.split_whitespace().collect();
        c += ht.len();
        r += rt.len();
        for n in 1..=4 {
            let hc = ngram_counts(&ht, n);
            let rc = ngram_counts(&rt, n);
            for (g, cnt) in &hc {
                matches[n - 1] += (*cnt).min(*rc.get(g).unwrap_or(&0));
                totals[n - 1] += cnt;
            }
        }
    }
    if matches.contains(&0) {
        return 0.0;
    }
    let log_p: f64 = (0..4).map(|i| (matches[i] as f64 / totals[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    100.0 * bp * log_p.exp()
}

/// chrF with character orders 1..6, beta 2, whitespace dropped, per-order F
/// averaged over the orders present in the data.
pub fn chrf_oracle(hyps: &[&str], refs: &[&str]) -> f64 {
    let mut per_order = Vec::new();
    for n in 1..=6 {
        let (mut m, mut hc, mut rc) = (0usize, 0usize, 0usize);
        for (h, rf) in hyps.iter().zip(refs) {
            let hch: Vec<char> = h.chars().filter(|c| !c.is_whitespace()).collect();
            let rch: Vec<char> = rf.chars().filter(|c| !c.is_whitespace()).collect();
            let grams = |v: &[char]| {
                let mut g: HashMap<String, usize> = HashMap::new();
                if v.len() >= n {
                    for w in v.windows(n) {
                        *g.entry(w.iter().collect()).or_insert(0) += 1;
                    }
                }
                g
            };
            let hg = grams(&hch);
            let rg = grams(&rch);
            for (g, c) in &hg {
                m += (*c).min(*rg.get(g).unwrap_or(&0));
            }
            hc += hg.values().sum::<usize>();
            rc += rg.values().sum::<usize>();
        }
        if hc == 0 && rc == 0 {
            continue;
        }
        let p = if hc == 0 { 0.0 } else { m as f64 / hc as f64 };
        let r = if rc == 0 { 0.0 } else { m as f64 / rc as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 5.0 * p * r / (4.0 * p + r) };
        per_order.push(f);
    }
    100.0 * per_order.iter().sum::<f64>() / per_order.len() as f64
}

// ---- generators ----

/// Items x categories count table where every row sums to `raters`.
pub fn random_counts(rng: &mut impl Rng, items: usize, cats: usize, raters: u32) -> Vec<Vec<u32>> {
    (0..items)
        .map(|_| {
            let mut row = vec![0u32; cats];
            for _ in 0..raters {
                row[rng.random_range(0..cats)] += 1;
            }
            row
        })
        .collect()
}

/// Small integer ratings on the 1..=4 scale.
pub fn random_ratings(rng: &mut impl Rng, targets: usize, raters: usize) -> Vec<Vec<f64>> {
    (0..targets)
        .map(|_| (0..raters).map(|_| f64::from(rng.random_range(1..=4u8))).collect())
        .collect()
}

pub fn random_ranks(rng: &mut impl Rng, n: usize, distinct: u32) -> Vec<f64> {
    (0..n).map(|_| f64::from(rng.random_range(0..distinct))).collect()
}

pub fn random_layer1(rng: &mut impl Rng) -> Layer1Label {
    Layer1Label::ALL[rng.random_range(0..3)]
}

pub fn random_binary(rng: &mut impl Rng) -> BinaryLabel {
    BinaryLabel::ALL[rng.random_range(0..2)]
}

/// Deterministic fixture corpus of `n` entries with one gendered term each.
pub fn fixture_corpus(n: usize) -> Vec<CorpusEntry> {
    const TERMS: [(&str, &str, &str); 4] = [
        ("the citizens", "i cittadini", "la cittadinanza"),
        ("the teachers", "gli insegnanti", "il corpo docente"),
        ("the workers", "i lavoratori", "le persone che lavorano"),
        ("the writers", "gli scrittori", "chi scrive"),
    ];
    (0..n)
        .map(|i| {
            let (en, g, neu) = TERMS[i % TERMS.len()];
            CorpusEntry {
                id: format!("s{i:03}"),
                src_en: format!("In session {i} {en} asked for clarity ."),
                ref_gendered: format!("Nella seduta {i} {g} hanno chiesto chiarezza ."),
                ref_neutral: format!("Nella seduta {i} {neu} ha chiesto chiarezza ."),
                term_spans: vec![],
            }
        })
        .collect()
}
