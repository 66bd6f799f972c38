//! Prompt rendering for the zero-shot baseline and the three few-shot
//! templates (contrastive, source-side chain of thought, target-side chain of
//! thought).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{check_header, split_row, CorpusError};

const BUILTIN_EXEMPLARS: &str = include_str!("../data/exemplars.tsv");

pub const EXEMPLAR_HEADER: [&str; 5] = ["set_id", "src_en", "gendered_it", "neutral_it", "term_pairs"];

pub const DEFAULT_SHOTS: usize = 3;

pub const CONTR_SOURCE_LABEL: &str = "[English]:";
pub const CONTR_GENDERED_LABEL: &str = "[Italian, gendered]:";
pub const CONTR_NEUTRAL_LABEL: &str = "[Italian, neutral]:";
pub const FINAL_ANSWER_MARKER: &str = "The final gender-neutral translation is";

const COT_QUESTION_PREFIX: &str = "Q: Translate the following English sentence into Italian using a gender-neutral language to refer to human entities:";
const COT_QUESTION_SUFFIX: &str = ". Think step by step.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    ZeroShot,
    Contr,
    CotSrc,
    CotTgt,
}

impl TemplateKind {
    pub const FEW_SHOT: [TemplateKind; 3] = [TemplateKind::Contr, TemplateKind::CotSrc, TemplateKind::CotTgt];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::ZeroShot => "zero_shot",
            TemplateKind::Contr => "contr",
            TemplateKind::CotSrc => "cot_src",
            TemplateKind::CotTgt => "cot_tgt",
        }
    }

    pub fn is_few_shot(self) -> bool {
        self != TemplateKind::ZeroShot
    }

    /// Text that opens every demonstration of this template exactly once and
    /// never appears in the trailing query.
    pub fn demonstration_delimiter(self) -> Option<&'static str> {
        match self {
            TemplateKind::ZeroShot => None,
            TemplateKind::Contr => Some(CONTR_GENDERED_LABEL),
            TemplateKind::CotSrc | TemplateKind::CotTgt => Some(FINAL_ANSWER_MARKER),
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" => Ok(TemplateKind::ZeroShot),
            "contr" => Ok(TemplateKind::Contr),
            "cot_src" => Ok(TemplateKind::CotSrc),
            "cot_tgt" => Ok(TemplateKind::CotTgt),
            other => Err(PromptError::UnknownKind(other.to_string())),
        }
    }
}

/// Exemplar set identifier: `seen`, `not_seen` or `custom:<name>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SetId {
    Seen,
    NotSeen,
    Custom(String),
}

impl SetId {
    /// Short form used in configuration names, e.g. `contr_S`.
    pub fn short(&self) -> String {
        match self {
            SetId::Seen => "S".to_string(),
            SetId::NotSeen => "NS".to_string(),
            SetId::Custom(name) => name.clone(),
        }
    }
}

impl fmt::Display for SetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetId::Seen => f.write_str("seen"),
            SetId::NotSeen => f.write_str("not_seen"),
            SetId::Custom(name) => write!(f, "custom:{name}"),
        }
    }
}

impl FromStr for SetId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seen" => Ok(SetId::Seen),
            "not_seen" => Ok(SetId::NotSeen),
            _ => match s.strip_prefix("custom:") {
                Some(name) if !name.is_empty() && !name.contains(char::is_whitespace) => {
                    Ok(SetId::Custom(name.to_string()))
                }
                _ => Err(PromptError::UnknownSet(s.to_string())),
            },
        }
    }
}

impl From<SetId> for String {
    fn from(id: SetId) -> Self {
        id.to_string()
    }
}

impl TryFrom<String> for SetId {
    type Error = PromptError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A gendered expression and its neutralization. `source` is the English
/// expression, needed only by the source-side chain-of-thought template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermPair {
    pub source: Option<String>,
    pub gendered: String,
    pub neutral: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarTriplet {
    pub src_en: String,
    pub gendered_it: String,
    pub neutral_it: String,
    pub term_pairs: Vec<TermPair>,
}

impl ExemplarTriplet {
    pub fn validate(&self) -> Result<(), PromptError> {
        for (field, value) in [
            ("src_en", &self.src_en),
            ("gendered_it", &self.gendered_it),
            ("neutral_it", &self.neutral_it),
        ] {
            if value.trim().is_empty() {
                return Err(PromptError::InvalidExemplar(format!("empty {field}")));
            }
        }
        for pair in &self.term_pairs {
            if !self.gendered_it.contains(&pair.gendered) {
                return Err(PromptError::InvalidExemplar(format!(
                    "gendered phrase `{}` not found in `{}`",
                    pair.gendered, self.gendered_it
                )));
            }
            if !self.neutral_it.contains(&pair.neutral) {
                return Err(PromptError::InvalidExemplar(format!(
                    "neutral phrase `{}` not found in `{}`",
                    pair.neutral, self.neutral_it
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub set_id: SetId,
    pub triplets: Vec<ExemplarTriplet>,
}

impl ExemplarSet {
    /// Keeps the first `shots` demonstrations.
    pub fn truncated(mut self, shots: usize) -> Self {
        self.triplets.truncate(shots);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LengthReport {
    pub whitespace_tokens: usize,
    pub characters: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub template_kind: TemplateKind,
    pub set_id: Option<SetId>,
    pub rendered_text: String,
    pub length_report: LengthReport,
    pub query_src: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("source sentence is empty")]
    EmptySource,
    #[error("exemplar set is empty")]
    EmptyExemplarSet,
    #[error("unknown template kind `{0}`")]
    UnknownKind(String),
    #[error("unknown exemplar set `{0}` (expected seen, not_seen or custom:<name>)")]
    UnknownSet(String),
    #[error("template `{0}` is not a few-shot template")]
    NotFewShot(TemplateKind),
    #[error("template `{kind}` needs {what} in exemplar {index}")]
    MissingTerms {
        kind: TemplateKind,
        index: usize,
        what: &'static str,
    },
    #[error("invalid exemplar: {0}")]
    InvalidExemplar(String),
    #[error("no exemplars for set `{0}`")]
    NoSuchSet(SetId),
    #[error(transparent)]
    Table(#[from] CorpusError),
    #[error("line {row}: malformed term pair `{item}` (expected `gendered=>neutral` or `source=>gendered=>neutral`)")]
    BadTermPair { row: usize, item: String },
}

fn parse_term_pairs(cell: &str, row: usize) -> Result<Vec<TermPair>, PromptError> {
    if cell.trim().is_empty() {
        return Ok(Vec::new());
    }
    cell.split("||")
        .map(|item| {
            let parts: Vec<&str> = item.split("=>").map(str::trim).collect();
            let bad = || PromptError::BadTermPair {
                row,
                item: item.to_string(),
            };
            if parts.iter().any(|p| p.is_empty()) {
                return Err(bad());
            }
            match parts.as_slice() {
                [g, n] => Ok(TermPair {
                    source: None,
                    gendered: g.to_string(),
                    neutral: n.to_string(),
                }),
                [s, g, n] => Ok(TermPair {
                    source: Some(s.to_string()),
                    gendered: g.to_string(),
                    neutral: n.to_string(),
                }),
                _ => Err(bad()),
            }
        })
        .collect()
}

/// Parses an exemplar file into sets, keeping first-appearance order of sets
/// and file order of triplets within each set.
pub fn parse_exemplars(tsv_text: &str) -> Result<Vec<ExemplarSet>, PromptError> {
    let mut lines = tsv_text.split('\n');
    check_header(lines.next(), &EXEMPLAR_HEADER)?;
    let mut sets: Vec<ExemplarSet> = Vec::new();
    for (offset, line) in lines.enumerate() {
        let row = offset + 2;
        if line.is_empty() {
            continue;
        }
        let [set_id, src, gendered, neutral, pairs] = split_row(line, row, &EXEMPLAR_HEADER, &["term_pairs"])?;
        let set_id: SetId = set_id.parse()?;
        let triplet = ExemplarTriplet {
            src_en: src.to_string(),
            gendered_it: gendered.to_string(),
            neutral_it: neutral.to_string(),
            term_pairs: parse_term_pairs(pairs, row)?,
        };
        triplet.validate()?;
        match sets.iter_mut().find(|s| s.set_id == set_id) {
            Some(set) => set.triplets.push(triplet),
            None => sets.push(ExemplarSet {
                set_id,
                triplets: vec![triplet],
            }),
        }
    }
    Ok(sets)
}

/// The seen and not-seen demonstration sets shipped with the crate.
pub fn builtin_exemplars() -> Vec<ExemplarSet> {
    parse_exemplars(BUILTIN_EXEMPLARS).expect("bundled exemplar file is valid")
}

pub fn builtin_set(set_id: &SetId) -> Result<ExemplarSet, PromptError> {
    builtin_exemplars()
        .into_iter()
        .find(|s| &s.set_id == set_id)
        .ok_or_else(|| PromptError::NoSuchSet(set_id.clone()))
}

pub fn estimate_length(text: &str) -> LengthReport {
    LengthReport {
        whitespace_tokens: text.split_whitespace().count(),
        characters: text.chars().count(),
    }
}

pub fn build_zero_shot(src: &str, target_language_name: &str) -> Result<PromptBundle, PromptError> {
    if src.trim().is_empty() {
        return Err(PromptError::EmptySource);
    }
    let rendered_text =
        format!("Please provide the {target_language_name} translation of the following sentence:\n{src}");
    Ok(PromptBundle {
        template_kind: TemplateKind::ZeroShot,
        set_id: None,
        length_report: estimate_length(&rendered_text),
        rendered_text,
        query_src: src.to_string(),
    })
}

fn count_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| (*w).to_string())
}

fn chevron_list<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items.map(|t| format!("<{t}>")).collect::<Vec<_>>().join(", ")
}

fn cot_question(src: &str) -> String {
    format!("{COT_QUESTION_PREFIX} [{src}]{COT_QUESTION_SUFFIX}")
}

fn render_contr(t: &ExemplarTriplet) -> String {
    format!(
        "{CONTR_SOURCE_LABEL} {}\n{CONTR_GENDERED_LABEL} {}\n{CONTR_NEUTRAL_LABEL} {}",
        t.src_en, t.gendered_it, t.neutral_it
    )
}

fn render_cot_src(t: &ExemplarTriplet, index: usize) -> Result<String, PromptError> {
    let sources = t
        .term_pairs
        .iter()
        .map(|p| {
            p.source.as_deref().ok_or(PromptError::MissingTerms {
                kind: TemplateKind::CotSrc,
                index,
                what: "source expressions",
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = sources.len();
    let identify = if n == 1 {
        "In the English sentence there is one expression which refers to human entities and could be translated in a non-neutral way:".to_string()
    } else {
        format!(
            "In the English sentence there are {} expressions which refer to human entities and could be translated in a non-neutral way:",
            count_word(n)
        )
    };
    let mut answer = format!("A: {identify} {}.", chevron_list(sources.iter().copied()));
    for (source, pair) in sources.iter().zip(&t.term_pairs) {
        answer.push_str(&format!(
            " A gender-neutral translation of <{source}> is <{}>.",
            pair.neutral
        ));
    }
    answer.push_str(&format!(" {FINAL_ANSWER_MARKER} [{}]", t.neutral_it));
    Ok(format!("{}\n{answer}", cot_question(&t.src_en)))
}

fn render_cot_tgt(t: &ExemplarTriplet) -> String {
    let n = t.term_pairs.len();
    let identify = if n == 1 {
        "There is one expression with non-neutral terms that refers to human entities:".to_string()
    } else {
        format!(
            "There are {} expressions with non-neutral terms that refer to human entities:",
            count_word(n)
        )
    };
    let mut answer = format!(
        "A: The English sentence can be translated as [{}]. {identify} {}.",
        t.gendered_it,
        chevron_list(t.term_pairs.iter().map(|p| p.gendered.as_str()))
    );
    for pair in &t.term_pairs {
        answer.push_str(&format!(
            " A gender-neutral alternative to <{}> is <{}>.",
            pair.gendered, pair.neutral
        ));
    }
    answer.push_str(&format!(" {FINAL_ANSWER_MARKER} [{}].", t.neutral_it));
    format!("{}\n{answer}", cot_question(&t.src_en))
}

/// Renders a few-shot prompt: one demonstration per exemplar, in exemplar
/// order, separated by blank lines, followed by the open query.
pub fn build_few_shot(kind: TemplateKind, exemplars: &ExemplarSet, src: &str) -> Result<PromptBundle, PromptError> {
    if !kind.is_few_shot() {
        return Err(PromptError::NotFewShot(kind));
    }
    if exemplars.triplets.is_empty() {
        return Err(PromptError::EmptyExemplarSet);
    }
    if src.trim().is_empty() {
        return Err(PromptError::EmptySource);
    }

    let mut blocks = Vec::with_capacity(exemplars.triplets.len() + 1);
    for (index, triplet) in exemplars.triplets.iter().enumerate() {
        if kind != TemplateKind::Contr && triplet.term_pairs.is_empty() {
            return Err(PromptError::MissingTerms {
                kind,
                index,
                what: "term pairs",
            });
        }
        blocks.push(match kind {
            TemplateKind::Contr => render_contr(triplet),
            TemplateKind::CotSrc => render_cot_src(triplet, index)?,
            TemplateKind::CotTgt => render_cot_tgt(triplet),
            TemplateKind::ZeroShot => unreachable!(),
        });
    }
    blocks.push(match kind {
        TemplateKind::Contr => format!("{CONTR_SOURCE_LABEL} {src}\n{CONTR_NEUTRAL_LABEL}"),
        _ => cot_question(src),
    });

    let rendered_text = blocks.join("\n\n");
    Ok(PromptBundle {
        template_kind: kind,
        set_id: Some(exemplars.set_id.clone()),
        length_report: estimate_length(&rendered_text),
        rendered_text,
        query_src: src.to_string(),
    })
}

/// Renders any template kind. `exemplars` is ignored for the zero-shot
/// baseline.
pub fn build_prompt(
    kind: TemplateKind,
    exemplars: Option<&ExemplarSet>,
    src: &str,
) -> Result<PromptBundle, PromptError> {
    match kind {
        TemplateKind::ZeroShot => build_zero_shot(src, "Italian"),
        _ => build_few_shot(kind, exemplars.ok_or(PromptError::EmptyExemplarSet)?, src),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn writers_set() -> ExemplarSet {
        let mut set = builtin_set(&SetId::NotSeen).unwrap();
        set.triplets.truncate(1);
        set
    }

    #[test]
    fn zero_shot_instruction() {
        let b = build_zero_shot("I am pleased.", "Italian").unwrap();
        assert!(b
            .rendered_text
            .starts_with("Please provide the Italian translation of the following sentence:"));
        assert!(b.rendered_text.ends_with("\nI am pleased."));
        assert_eq!(build_zero_shot("", "Italian").unwrap_err(), PromptError::EmptySource);
    }

    #[test]
    fn zero_shot_preserves_internal_newline() {
        let b = build_zero_shot("line one\nline two", "Italian").unwrap();
        assert!(b.rendered_text.ends_with("sentence:\nline one\nline two"));
    }

    #[test]
    fn contr_writers_lines() {
        let b = build_few_shot(TemplateKind::Contr, &writers_set(), "We thank the voters.").unwrap();
        let lines: Vec<&str> = b.rendered_text.lines().collect();
        assert!(lines.contains(&"[Italian, gendered]: Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità degli scrittori ?"));
        assert!(lines.contains(&"[Italian, neutral]: Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità di chi scrive ?"));
        assert!(b
            .rendered_text
            .ends_with("[English]: We thank the voters.\n[Italian, neutral]:"));
    }

    #[test]
    fn cot_src_writers_answer() {
        let b = build_few_shot(TemplateKind::CotSrc, &writers_set(), "We thank the voters.").unwrap();
        assert!(b.rendered_text.contains(
            "A: In the English sentence there is one expression which refers to human entities and could be translated in a non-neutral way: <of the writers>. A gender-neutral translation of <of the writers> is <di chi scrive>. The final gender-neutral translation is [Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità di chi scrive ?]"
        ));
    }

    #[test]
    fn cot_tgt_writers_answer() {
        let b = build_few_shot(TemplateKind::CotTgt, &writers_set(), "We thank the voters.").unwrap();
        assert!(b.rendered_text.contains(
            "The final gender-neutral translation is [Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità di chi scrive ?]"
        ));
        assert!(b.rendered_text.contains("A: The English sentence can be translated as [Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità degli scrittori ?]."));
        assert!(b
            .rendered_text
            .ends_with("Q: Translate the following English sentence into Italian using a gender-neutral language to refer to human entities: [We thank the voters.]. Think step by step."));
    }

    #[test]
    fn multi_term_answers_enumerate_every_pair() {
        let set = builtin_set(&SetId::Seen).unwrap();
        let b = build_few_shot(TemplateKind::CotTgt, &set, "x").unwrap();
        assert!(b.rendered_text.contains("There are two expressions with non-neutral terms that refer to human entities: <Signora Presidente>, <tutti continuino>."));
        assert!(b
            .rendered_text
            .contains("A gender-neutral alternative to <tutti continuino> is <ogni persona continui>."));
        let b = build_few_shot(TemplateKind::CotSrc, &set, "x").unwrap();
        assert!(b
            .rendered_text
            .contains("A gender-neutral translation of <everyone> is <ogni persona continui>."));
    }

    #[test]
    fn few_shot_errors() {
        let empty = ExemplarSet {
            set_id: SetId::Seen,
            triplets: vec![],
        };
        assert_eq!(
            build_few_shot(TemplateKind::CotSrc, &empty, "src").unwrap_err(),
            PromptError::EmptyExemplarSet
        );
        assert_eq!(
            build_few_shot(TemplateKind::ZeroShot, &writers_set(), "src").unwrap_err(),
            PromptError::NotFewShot(TemplateKind::ZeroShot)
        );
        assert!(matches!(
            "cot_mid".parse::<TemplateKind>(),
            Err(PromptError::UnknownKind(_))
        ));
    }

    #[test]
    fn cot_src_needs_source_terms() {
        let mut set = writers_set();
        set.triplets[0].term_pairs[0].source = None;
        assert!(matches!(
            build_few_shot(TemplateKind::CotSrc, &set, "x").unwrap_err(),
            PromptError::MissingTerms { index: 0, .. }
        ));
        // The other templates do not use the source expression.
        assert!(build_few_shot(TemplateKind::CotTgt, &set, "x").is_ok());
    }

    #[test]
    fn length_counts() {
        assert_eq!(estimate_length(""), LengthReport::default());
        assert_eq!(
            estimate_length("a bb  ccc"),
            LengthReport {
                whitespace_tokens: 3,
                characters: 9
            }
        );
        assert_eq!(estimate_length("perché è").characters, 8);
    }

    #[test]
    fn builtin_sets_have_three_shots() {
        let sets = builtin_exemplars();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].set_id, SetId::Seen);
        assert_eq!(sets[1].set_id, SetId::NotSeen);
        assert!(sets.iter().all(|s| s.triplets.len() == DEFAULT_SHOTS));
    }

    #[test]
    fn exemplar_term_pairs_are_checked() {
        let bad = "set_id\tsrc_en\tgendered_it\tneutral_it\tterm_pairs\nseen\ta\tb c\td\tx=>d\n";
        assert!(matches!(
            parse_exemplars(bad).unwrap_err(),
            PromptError::InvalidExemplar(_)
        ));
        let malformed = "set_id\tsrc_en\tgendered_it\tneutral_it\tterm_pairs\nseen\ta\tb\td\tb\n";
        assert!(matches!(
            parse_exemplars(malformed).unwrap_err(),
            PromptError::BadTermPair { row: 2, .. }
        ));
    }

    #[test]
    fn set_id_round_trip() {
        for s in ["seen", "not_seen", "custom:legal"] {
            assert_eq!(s.parse::<SetId>().unwrap().to_string(), s);
        }
        assert!("custom:".parse::<SetId>().is_err());
        assert_eq!(SetId::NotSeen.short(), "NS");
    }
}
