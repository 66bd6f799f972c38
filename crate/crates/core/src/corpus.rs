//! Parallel corpus ingestion and gendered-term span derivation.
//!
//! A corpus file is UTF-8 TSV with the header
//! `id\tsrc_en\tref_gendered\tref_neutral`, LF line endings and no quoting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CORPUS_HEADER: [&str; 4] = ["id", "src_en", "ref_gendered", "ref_neutral"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub src_en: String,
    pub ref_gendered: String,
    pub ref_neutral: String,
    #[serde(default)]
    pub term_spans: Vec<TermSpan>,
}

/// A maximal run of words that differs between the gendered and the neutral
/// reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpan {
    pub gendered_text: String,
    pub neutral_text: String,
    /// Word indices into the whitespace-split gendered reference. Empty when
    /// the neutral reference inserts words with no gendered counterpart.
    pub gendered_word_range: Range<usize>,
    pub neutral_word_range: Range<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line 1: expected header `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {row}: missing column `{column}`")]
    MissingColumn { row: usize, column: &'static str },
    #[error("line {row}: unexpected extra column {index} (tabs are not allowed inside cells)")]
    ExtraColumn { row: usize, index: usize },
    #[error("line {row}: empty cell in column `{column}`")]
    EmptyCell { row: usize, column: &'static str },
    #[error("line {row}: duplicate id `{id}` (first defined on line {first_row})")]
    DuplicateId { row: usize, first_row: usize, id: String },
    #[error("empty input: header row is missing")]
    MissingHeader,
}

/// Splits one TSV data line into exactly `columns.len()` non-empty cells.
pub(crate) fn split_row<'a, const N: usize>(
    line: &'a str,
    row: usize,
    columns: &[&'static str; N],
    allow_empty: &[&'static str],
) -> Result<[&'a str; N], CorpusError> {
    let mut cells = [""; N];
    let mut parts = line.split('\t');
    for (i, column) in columns.iter().enumerate() {
        let cell = parts.next().ok_or(CorpusError::MissingColumn { row, column })?;
        if cell.trim().is_empty() && !allow_empty.contains(column) {
            return Err(CorpusError::EmptyCell { row, column });
        }
        cells[i] = cell;
    }
    if parts.next().is_some() {
        return Err(CorpusError::ExtraColumn { row, index: N + 1 });
    }
    Ok(cells)
}

pub(crate) fn check_header(line: Option<&str>, expected: &[&str]) -> Result<(), CorpusError> {
    let line = line.ok_or(CorpusError::MissingHeader)?;
    let found: Vec<&str> = line.split('\t').collect();
    if found != expected {
        return Err(CorpusError::BadHeader {
            expected: expected.join("\t"),
            found: line.to_string(),
        });
    }
    Ok(())
}

/// Parses a corpus TSV. Spans are left empty; see [`derive_term_spans`].
pub fn parse_corpus(tsv_text: &str) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut lines = tsv_text.split('\n');
    check_header(lines.next(), &CORPUS_HEADER)?;

    let mut entries = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (offset, line) in lines.enumerate() {
        let row = offset + 2;
        if line.is_empty() {
            continue;
        }
        let [id, src_en, ref_gendered, ref_neutral] = split_row(line, row, &CORPUS_HEADER, &[])?;
        if let Some(&first_row) = seen.get(id) {
            return Err(CorpusError::DuplicateId {
                row,
                first_row,
                id: id.to_string(),
            });
        }
        seen.insert(id.to_string(), row);
        entries.push(CorpusEntry {
            id: id.to_string(),
            src_en: src_en.to_string(),
            ref_gendered: ref_gendered.to_string(),
            ref_neutral: ref_neutral.to_string(),
            term_spans: Vec::new(),
        });
    }
    Ok(entries)
}

pub fn serialize_corpus(entries: &[CorpusEntry]) -> String {
    let mut out = CORPUS_HEADER.join("\t");
    out.push('\n');
    for e in entries {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", e.id, e.src_en, e.ref_gendered, e.ref_neutral);
    }
    out
}

/// Fills `term_spans` for every entry.
pub fn derive_term_spans(entries: &mut [CorpusEntry]) {
    for entry in entries {
        entry.term_spans = extract_gendered_terms(&entry.ref_gendered, &entry.ref_neutral);
    }
}

/// One step of a word-level alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EditOp {
    /// Aligns one word on each side; a match when the words are equal,
    /// a substitution otherwise.
    Diagonal,
    /// Consumes a gendered word only.
    Delete,
    /// Consumes a neutral word only.
    Insert,
}

/// Minimal-cost word alignment (unit costs). Among all minimal alignments the
/// lexicographically smallest op sequence under `Diagonal < Delete < Insert`
/// is returned, which places substitutions as far left as possible.
pub fn align_words(a: &[&str], b: &[&str]) -> Vec<EditOp> {
    let (n, m) = (a.len(), b.len());
    // cost[i][j] = edit distance between a[i..] and b[j..]
    let width = m + 1;
    let mut cost = vec![0usize; (n + 1) * width];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            cost[i * width + j] = if i == n {
                m - j
            } else if j == m {
                n - i
            } else {
                let sub = cost[(i + 1) * width + j + 1] + usize::from(a[i] != b[j]);
                let del = cost[(i + 1) * width + j] + 1;
                let ins = cost[i * width + j + 1] + 1;
                sub.min(del).min(ins)
            };
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = cost[i * width + j];
        if i < n && j < m && cost[(i + 1) * width + j + 1] + usize::from(a[i] != b[j]) == here {
            ops.push(EditOp::Diagonal);
            i += 1;
            j += 1;
        } else if i < n && cost[(i + 1) * width + j] + 1 == here {
            ops.push(EditOp::Delete);
            i += 1;
        } else {
            ops.push(EditOp::Insert);
            j += 1;
        }
    }
    ops
}

/// Groups an alignment into maximal runs of non-matching steps.
pub fn spans_from_alignment(a: &[&str], b: &[&str], ops: &[EditOp]) -> Vec<TermSpan> {
    let mut spans = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let mut open: Option<(usize, usize)> = None;
    let close = |open: &mut Option<(usize, usize)>, i: usize, j: usize, spans: &mut Vec<TermSpan>| {
        if let Some((si, sj)) = open.take() {
            spans.push(TermSpan {
                gendered_text: a[si..i].join(" "),
                neutral_text: b[sj..j].join(" "),
                gendered_word_range: si..i,
                neutral_word_range: sj..j,
            });
        }
    };
    for op in ops {
        let is_match = *op == EditOp::Diagonal && a[i] == b[j];
        if is_match {
            close(&mut open, i, j, &mut spans);
        } else if open.is_none() {
            open = Some((i, j));
        }
        match op {
            EditOp::Diagonal => {
                i += 1;
                j += 1;
            }
            EditOp::Delete => i += 1,
            EditOp::Insert => j += 1,
        }
    }
    close(&mut open, i, j, &mut spans);
    spans
}

/// Words that differ between the two references, grouped into maximal
/// contiguous runs. Tokenization is whitespace-only; punctuation stays
/// attached to its word.
pub fn extract_gendered_terms(ref_gendered: &str, ref_neutral: &str) -> Vec<TermSpan> {
    let a: Vec<&str> = ref_gendered.split_whitespace().collect();
    let b: Vec<&str> = ref_neutral.split_whitespace().collect();
    let ops = align_words(&a, &b);
    spans_from_alignment(&a, &b, &ops)
}
