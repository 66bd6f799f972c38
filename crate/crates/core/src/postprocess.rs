//! Extraction of the translation under evaluation from raw model answers.

use serde::{Deserialize, Serialize};

use crate::prompt::{SetId, TemplateKind, CONTR_NEUTRAL_LABEL, FINAL_ANSWER_MARKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionStatus {
    Marker,
    FallbackLastBracket,
    FallbackWholeText,
}

/// One evaluated model output. Persisted as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub entry_id: String,
    pub run_id: String,
    pub system_name: String,
    pub template_kind: TemplateKind,
    pub set_id: Option<SetId>,
    pub raw_text: String,
    pub extracted: String,
    pub extraction_status: ExtractionStatus,
}

/// Returns the content of the bracket group opening at the first `[` of
/// `text`, honoring nesting. `None` when no `[` exists; `Err(rest)` when the
/// group never closes.
fn first_bracket_group(text: &str) -> Option<Result<&str, &str>> {
    let open = text.find('[')?;
    let inner = &text[open + 1..];
    let mut depth = 1usize;
    for (i, c) in inner.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(Ok(&inner[..i]));
                }
            }
            _ => {}
        }
    }
    Some(Err(inner))
}

/// Content of the last balanced `[...]` group in `text`.
fn last_bracket_group(text: &str) -> Option<&str> {
    let close = text.rfind(']')?;
    let mut depth = 0usize;
    for (i, c) in text[..=close].char_indices().rev() {
        match c {
            ']' => depth += 1,
            '[' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[i + 1..close]);
                }
            }
            _ => {}
        }
    }
    None
}

fn fallback(raw: &str) -> (String, ExtractionStatus) {
    match last_bracket_group(raw).map(str::trim) {
        Some(inner) if !inner.is_empty() => (inner.to_string(), ExtractionStatus::FallbackLastBracket),
        // An empty answer after the marker must not leak the marker itself.
        _ => (
            raw.replace(FINAL_ANSWER_MARKER, "").trim().to_string(),
            ExtractionStatus::FallbackWholeText,
        ),
    }
}

fn extract_after_marker(raw: &str) -> Option<(String, ExtractionStatus)> {
    let at = raw.rfind(FINAL_ANSWER_MARKER)?;
    let tail = &raw[at + FINAL_ANSWER_MARKER.len()..];
    let (text, status) = match first_bracket_group(tail) {
        Some(Ok(inner)) => (inner.trim(), ExtractionStatus::Marker),
        // Truncated answer: keep everything after the marker.
        Some(Err(_)) | None => {
            let rest = tail.trim();
            let rest = rest.strip_prefix('[').unwrap_or(rest).trim();
            (
                rest.strip_suffix('.').unwrap_or(rest).trim_end(),
                ExtractionStatus::FallbackLastBracket,
            )
        }
    };
    (!text.is_empty()).then(|| (text.to_string(), status))
}

fn extract_after_label(raw: &str) -> Option<String> {
    let at = raw.rfind(CONTR_NEUTRAL_LABEL)?;
    let tail = &raw[at + CONTR_NEUTRAL_LABEL.len()..];
    let line = tail.trim_start().lines().next().unwrap_or("").trim();
    (!line.is_empty()).then(|| line.to_string())
}

/// Extracts the final translation from a raw answer.
///
/// Chain-of-thought answers yield the bracketed text after the last final
/// answer marker; contrastive answers yield the rest of the line after the
/// last neutral label; zero-shot answers are taken whole. Marker-free answers
/// degrade to the last bracket group, then to the whole trimmed text.
pub fn extract_translation(raw: &str, kind: TemplateKind) -> (String, ExtractionStatus) {
    let found = match kind {
        TemplateKind::ZeroShot => {
            let t = raw.trim();
            (!t.is_empty()).then(|| (t.to_string(), ExtractionStatus::Marker))
        }
        TemplateKind::Contr => extract_after_label(raw).map(|t| (t, ExtractionStatus::Marker)),
        TemplateKind::CotSrc | TemplateKind::CotTgt => extract_after_marker(raw),
    };
    let (mut text, status) = found.unwrap_or_else(|| fallback(raw));
    while text.contains(FINAL_ANSWER_MARKER) {
        text = text.replace(FINAL_ANSWER_MARKER, "").trim().to_string();
    }
    (text, status)
}
