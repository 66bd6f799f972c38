//! End-to-end translation of a corpus under one prompt configuration.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{run_batch, Backend};
use crate::corpus::CorpusEntry;
use crate::postprocess::{extract_translation, SystemOutput};
use crate::prompt::{build_prompt, ExemplarSet, LengthReport, PromptError, SetId, TemplateKind};

/// One of the prompt configurations: a template plus, for few-shot
/// templates, an exemplar set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub template_kind: TemplateKind,
    pub exemplars: Option<ExemplarSet>,
}

impl PromptConfig {
    pub fn set_id(&self) -> Option<&SetId> {
        self.exemplars.as_ref().map(|e| &e.set_id)
    }

    /// `zero_shot`, or template and short set name such as `cot_tgt_NS`.
    pub fn name(&self) -> String {
        config_name(self.template_kind, self.set_id())
    }
}

pub fn config_name(kind: TemplateKind, set_id: Option<&SetId>) -> String {
    match set_id {
        Some(set) if kind.is_few_shot() => format!("{kind}_{}", set.short()),
        _ => kind.to_string(),
    }
}

pub fn run_id(system_name: &str, config: &PromptConfig) -> String {
    format!("{system_name}.{}", config.name())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub entry_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationRun {
    pub run_id: String,
    pub outputs: Vec<SystemOutput>,
    pub failures: Vec<EntryFailure>,
    /// Length of the prompt rendered for the first entry.
    pub prompt_length: Option<LengthReport>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("entry `{entry_id}`: {source}")]
    Prompt {
        entry_id: String,
        #[source]
        source: PromptError,
    },
    #[error("outputs line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Neutral references keyed by entry id, the side channel read by the echo
/// mock.
pub fn neutral_fixture(entries: &[CorpusEntry]) -> HashMap<String, String> {
    entries.iter().map(|e| (e.id.clone(), e.ref_neutral.clone())).collect()
}

/// Renders, dispatches and post-processes every entry. Backend failures and
/// empty extractions are collected per entry; only prompt rendering errors
/// abort the run.
pub fn translate_corpus(
    entries: &[CorpusEntry],
    system_name: &str,
    config: &PromptConfig,
    backend: &dyn Backend,
    max_in_flight: usize,
) -> Result<TranslationRun, PipelineError> {
    let requests = entries
        .iter()
        .map(|e| {
            build_prompt(config.template_kind, config.exemplars.as_ref(), &e.src_en)
                .map(|b| (e.id.clone(), b))
                .map_err(|source| PipelineError::Prompt {
                    entry_id: e.id.clone(),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let prompt_length = requests.first().map(|(_, b)| b.length_report);

    let run_id = run_id(system_name, config);
    let mut outputs = Vec::with_capacity(entries.len());
    let mut failures = Vec::new();
    for item in run_batch(backend, &requests, max_in_flight) {
        match item.result {
            Ok(raw) => {
                let (extracted, extraction_status) = extract_translation(&raw.text, config.template_kind);
                if extracted.is_empty() {
                    failures.push(EntryFailure {
                        entry_id: item.entry_id,
                        error: "empty translation after extraction".into(),
                    });
                    continue;
                }
                outputs.push(SystemOutput {
                    entry_id: item.entry_id,
                    run_id: run_id.clone(),
                    system_name: system_name.to_string(),
                    template_kind: config.template_kind,
                    set_id: config.set_id().cloned(),
                    raw_text: raw.text,
                    extracted,
                    extraction_status,
                });
            }
            Err(e) => failures.push(EntryFailure {
                entry_id: item.entry_id,
                error: e.to_string(),
            }),
        }
    }
    Ok(TranslationRun {
        run_id,
        outputs,
        failures,
        prompt_length,
    })
}

pub fn outputs_to_jsonl(outputs: &[SystemOutput]) -> String {
    let mut out = String::new();
    for o in outputs {
        let _ = writeln!(out, "{}", serde_json::to_string(o).expect("output serializes"));
    }
    out
}

pub fn outputs_from_jsonl(text: &str) -> Result<Vec<SystemOutput>, PipelineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{build_backend, BackendConfig, BackendKind};
    use crate::postprocess::ExtractionStatus;
    use crate::prompt::builtin_set;

    fn corpus() -> Vec<CorpusEntry> {
        (0..4)
            .map(|i| CorpusEntry {
                id: format!("e{i}"),
                src_en: format!("The citizens number {i} agree."),
                ref_gendered: format!("I cittadini numero {i} sono d'accordo."),
                ref_neutral: format!("La cittadinanza numero {i} è d'accordo."),
                term_spans: vec![],
            })
            .collect()
    }

    #[test]
    fn config_names() {
        assert_eq!(config_name(TemplateKind::ZeroShot, None), "zero_shot");
        assert_eq!(config_name(TemplateKind::CotTgt, Some(&SetId::NotSeen)), "cot_tgt_NS");
        assert_eq!(config_name(TemplateKind::Contr, Some(&SetId::Seen)), "contr_S");
    }

    #[test]
    fn echo_round_trip_for_every_template() {
        let entries = corpus();
        let backend = build_backend(&BackendConfig::default(), neutral_fixture(&entries)).unwrap();
        for kind in [
            TemplateKind::ZeroShot,
            TemplateKind::Contr,
            TemplateKind::CotSrc,
            TemplateKind::CotTgt,
        ] {
            let config = PromptConfig {
                template_kind: kind,
                exemplars: kind.is_few_shot().then(|| builtin_set(&SetId::Seen).unwrap()),
            };
            let run = translate_corpus(&entries, "gpt", &config, backend.as_ref(), 3).unwrap();
            assert!(run.failures.is_empty());
            for (o, e) in run.outputs.iter().zip(&entries) {
                assert_eq!(o.extracted, e.ref_neutral);
                assert_eq!(o.extraction_status, ExtractionStatus::Marker);
            }
        }
    }

    #[test]
    fn failures_are_isolated() {
        let entries = corpus();
        let config = BackendConfig {
            kind: BackendKind::MockFixed,
            fixed_text: Some("Ciao".into()),
            fail_entries: vec!["e1".into()],
            ..Default::default()
        };
        let backend = build_backend(&config, HashMap::new()).unwrap();
        let prompt = PromptConfig {
            template_kind: TemplateKind::ZeroShot,
            exemplars: None,
        };
        let run = translate_corpus(&entries, "mt", &prompt, backend.as_ref(), 2).unwrap();
        assert_eq!(run.outputs.len(), 3);
        assert_eq!(run.failures.len(), 1);
        assert_eq!(run.failures[0].entry_id, "e1");
        let text = outputs_to_jsonl(&run.outputs);
        assert_eq!(outputs_from_jsonl(&text).unwrap(), run.outputs);
    }
}
