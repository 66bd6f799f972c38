//! Core library of the gender-neutral translation bench.
//!
//! The pipeline runs corpus ingestion ([`corpus`]), prompt rendering
//! ([`prompt`]), backend dispatch ([`backend`]), answer post-processing
//! ([`postprocess`]), two-layer human annotation ([`annotation`]) and the
//! agreement and quality statistics ([`stats`]) that feed the result tables
//! and figures ([`report`]).

pub mod annotation;
pub mod backend;
pub mod corpus;
pub mod pipeline;
pub mod postprocess;
pub mod prompt;
pub mod report;
pub mod stats;

pub use annotation::{AnnotationRecord, AssignmentPlan, Layer1Label, Layer2Label, OutputKey};
pub use backend::{BackendConfig, BackendKind, RawResponse};
pub use corpus::{CorpusEntry, TermSpan};
pub use postprocess::{ExtractionStatus, SystemOutput};
pub use prompt::{ExemplarSet, PromptBundle, SetId, TemplateKind};
pub use stats::{BinaryLabel, F1Report};
