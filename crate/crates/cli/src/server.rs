//! HTTP annotation server. Raters see opaque task ids only; run ids, system
//! names and prompt settings stay on the server.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use gnt_core::annotation::{judged_by, validate_record, AnnotationStore};
use gnt_core::{AnnotationRecord, AssignmentPlan, CorpusEntry, Layer1Label, Layer2Label, OutputKey, SystemOutput};
use serde::{Deserialize, Serialize};
use serde_json::json;

const INDEX_HTML: &str = include_str!("index.html");

/// Highlighted gendered expression in the reference, as word indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub src_en: String,
    pub ref_gendered: String,
    pub highlights: Vec<Highlight>,
    pub output_text: String,
    pub progress: Progress,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Submission {
    pub rater: String,
    pub task_id: String,
    pub layer1: Layer1Label,
    #[serde(default)]
    pub layer2: Option<Layer2Label>,
    #[serde(default)]
    pub note: Option<String>,
}

struct Item {
    src_en: String,
    ref_gendered: String,
    highlights: Vec<Highlight>,
    output_text: String,
}

pub struct ServerState {
    plan: AssignmentPlan,
    store: AnnotationStore,
    items: HashMap<OutputKey, Item>,
    tasks: HashMap<String, OutputKey>,
    queues: HashMap<String, Vec<OutputKey>>,
    ui_dir: Option<PathBuf>,
}

impl ServerState {
    pub fn new(
        plan: AssignmentPlan,
        corpus: &[CorpusEntry],
        outputs: &[SystemOutput],
        store: AnnotationStore,
        ui_dir: Option<PathBuf>,
    ) -> Result<Self> {
        let entries: HashMap<&str, &CorpusEntry> = corpus.iter().map(|e| (e.id.as_str(), e)).collect();
        let texts: HashMap<OutputKey, &str> = outputs
            .iter()
            .map(|o| (OutputKey::of(o), o.extracted.as_str()))
            .collect();
        let mut items = HashMap::new();
        let mut tasks = HashMap::new();
        for key in &plan.sample {
            let Some(entry) = entries.get(key.entry_id.as_str()) else {
                bail!("plan refers to entry `{}` missing from the corpus", key.entry_id);
            };
            let Some(text) = texts.get(key) else {
                bail!("plan refers to output {key} with no translation on disk");
            };
            let highlights = entry
                .term_spans
                .iter()
                .filter(|s| !s.gendered_word_range.is_empty())
                .map(|s| Highlight {
                    start: s.gendered_word_range.start,
                    end: s.gendered_word_range.end,
                    text: s.gendered_text.clone(),
                })
                .collect();
            items.insert(
                key.clone(),
                Item {
                    src_en: entry.src_en.clone(),
                    ref_gendered: entry.ref_gendered.clone(),
                    highlights,
                    output_text: text.to_string(),
                },
            );
            tasks.insert(plan.task_id(key), key.clone());
        }
        let queues = plan
            .raters
            .iter()
            .filter_map(|r| plan.rater_queue(r).map(|q| (r.clone(), q)))
            .collect();
        Ok(Self {
            plan,
            store,
            items,
            tasks,
            queues,
            ui_dir,
        })
    }

    pub fn progress(&self, rater: &str) -> Option<Progress> {
        let queue = self.queues.get(rater)?;
        let judged = judged_by(&self.store.latest(), rater);
        Some(Progress {
            done: queue.iter().filter(|k| judged.contains_key(*k)).count(),
            total: queue.len(),
        })
    }

    /// The first unjudged output in the rater's queue, or `None` when done.
    pub fn next_task(&self, rater: &str) -> Option<Option<TaskView>> {
        let queue = self.queues.get(rater)?;
        let judged = judged_by(&self.store.latest(), rater);
        let done = queue.iter().filter(|k| judged.contains_key(*k)).count();
        let progress = Progress {
            done,
            total: queue.len(),
        };
        Some(queue.iter().find(|k| !judged.contains_key(*k)).map(|key| {
            let item = &self.items[key];
            TaskView {
                task_id: self.plan.task_id(key),
                src_en: item.src_en.clone(),
                ref_gendered: item.ref_gendered.clone(),
                highlights: item.highlights.clone(),
                output_text: item.output_text.clone(),
                progress: progress.clone(),
            }
        }))
    }

    pub fn submit(&self, s: Submission) -> Result<Progress, Rejection> {
        if !self.plan.has_rater(&s.rater) {
            return Err(Rejection::UnknownRater);
        }
        let key = self.tasks.get(&s.task_id).ok_or(Rejection::UnknownTask)?;
        if !self.plan.is_assigned(&s.rater, key) {
            return Err(Rejection::NotAssigned);
        }
        let record = AnnotationRecord {
            output_key: key.clone(),
            rater_id: s.rater.clone(),
            layer1: s.layer1,
            layer2: s.layer2,
            note: s.note.filter(|n| !n.trim().is_empty()),
            timestamp: Utc::now(),
        };
        if let Err(violations) = validate_record(&record) {
            return Err(Rejection::Invalid(violations.iter().map(ToString::to_string).collect()));
        }
        self.store
            .append(record)
            .map_err(|e| Rejection::Storage(e.to_string()))?;
        Ok(self.progress(&s.rater).expect("rater checked above"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    UnknownRater,
    UnknownTask,
    NotAssigned,
    Invalid(Vec<String>),
    Storage(String),
}

impl IntoResponse for Rejection {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            Rejection::UnknownRater => (
                StatusCode::NOT_FOUND,
                json!({"status": "rejected", "error": "unknown rater"}),
            ),
            Rejection::UnknownTask => (
                StatusCode::NOT_FOUND,
                json!({"status": "rejected", "error": "unknown task"}),
            ),
            Rejection::NotAssigned => (
                StatusCode::FORBIDDEN,
                json!({"status": "rejected", "error": "task not assigned to this rater"}),
            ),
            Rejection::Invalid(violations) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"status": "rejected", "error": "gating violation", "violations": violations}),
            ),
            Rejection::Storage(message) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"status": "error", "error": message}),
            ),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Deserialize)]
struct RaterQuery {
    rater: String,
}

async fn get_task(State(state): State<Arc<ServerState>>, Query(q): Query<RaterQuery>) -> Response {
    match state.next_task(&q.rater) {
        None => Rejection::UnknownRater.into_response(),
        Some(Some(task)) => Json(json!({"status": "task", "task": task})).into_response(),
        Some(None) => {
            let progress = state.progress(&q.rater);
            Json(json!({"status": "done", "progress": progress})).into_response()
        }
    }
}

async fn get_progress(State(state): State<Arc<ServerState>>, Query(q): Query<RaterQuery>) -> Response {
    match state.progress(&q.rater) {
        None => Rejection::UnknownRater.into_response(),
        Some(p) => Json(json!({"rater": q.rater, "done": p.done, "total": p.total})).into_response(),
    }
}

async fn post_annotation(State(state): State<Arc<ServerState>>, Json(s): Json<Submission>) -> Response {
    match state.submit(s) {
        Ok(progress) => Json(json!({"status": "accepted", "progress": progress})).into_response(),
        Err(r) => r.into_response(),
    }
}

async fn index(State(state): State<Arc<ServerState>>) -> Response {
    if let Some(dir) = &state.ui_dir {
        if let Ok(text) = tokio::fs::read_to_string(dir.join("index.html")).await {
            return Html(text).into_response();
        }
    }
    Html(INDEX_HTML).into_response()
}

async fn asset(State(state): State<Arc<ServerState>>, UrlPath(path): UrlPath<String>) -> Response {
    let Some(dir) = &state.ui_dir else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let rel = Path::new(&path);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    match tokio::fs::read(dir.join(rel)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(rel))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/task", get(get_task))
        .route("/api/progress", get(get_progress))
        .route("/api/annotation", axum::routing::post(post_annotation))
        .route("/{*path}", get(asset))
        .with_state(state)
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: Arc<ServerState>, listen: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .with_context(|| format!("cannot listen on {listen}"))?;
    tracing::info!(addr = %listener.local_addr()?, "annotation server listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
