//! Translation backends: an OpenAI-style chat-completion endpoint and two
//! deterministic mocks, plus order-preserving concurrent batch dispatch.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

use crate::prompt::{PromptBundle, TemplateKind, CONTR_NEUTRAL_LABEL, FINAL_ANSWER_MARKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    MockEchoNeutral,
    MockFixed,
}

impl std::str::FromStr for BackendKind {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http_chat" => Ok(BackendKind::HttpChat),
            "mock_echo_neutral" => Ok(BackendKind::MockEchoNeutral),
            "mock_fixed" => Ok(BackendKind::MockFixed),
            other => Err(BackendError::Config(format!("unknown backend kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_attempts: u32,
    pub max_in_flight: usize,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored in configuration.
    pub credential_env_var: String,
    pub system_message: Option<String>,
    pub timeout_ms: u64,
    pub retry_base_ms: u64,
    pub retry_cap_ms: u64,
    /// Answer returned by `mock_fixed`.
    pub fixed_text: Option<String>,
    /// Entry ids for which a mock backend reports a failure.
    pub fail_entries: Vec<String>,
    /// Upper bound of a per-request pseudo-random mock delay.
    pub mock_max_delay_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::MockEchoNeutral,
            endpoint_url: None,
            model_name: "gpt-4-0613".to_string(),
            temperature: 0.0,
            max_attempts: 3,
            max_in_flight: 4,
            credential_env_var: "OPENAI_API_KEY".to_string(),
            system_message: None,
            timeout_ms: 60_000,
            retry_base_ms: 1_000,
            retry_cap_ms: 30_000,
            fixed_text: None,
            fail_entries: Vec::new(),
            mock_max_delay_ms: 0,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_attempts == 0 {
            return Err(BackendError::Config("max_attempts must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be positive".into()));
        }
        match self.kind {
            BackendKind::HttpChat => {
                let url = self
                    .endpoint_url
                    .as_deref()
                    .ok_or_else(|| BackendError::Config("http_chat requires endpoint_url".into()))?;
                if !(url.starts_with("http://") || url.starts_with("https://")) {
                    return Err(BackendError::Config(format!(
                        "endpoint_url `{url}` is not an http(s) URL"
                    )));
                }
            }
            BackendKind::MockFixed if self.fixed_text.as_deref().is_none_or(str::is_empty) => {
                return Err(BackendError::Config(
                    "mock_fixed requires a non-empty fixed_text".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub entry_id: String,
    pub request_fingerprint: String,
    pub text: String,
    pub latency_ms: u64,
    pub prompt_chars: usize,
    pub completion_chars: usize,
    pub attempt: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("request failed after {attempts} attempt(s) (last status: {}): {message}", last_status.map_or("none".to_string(), |s| s.to_string()))]
    Transport {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("mock failure for entry `{0}`")]
    MockFailure(String),
    #[error("no neutral fixture for entry `{0}`")]
    MissingFixture(String),
}

/// A completed request: the answer text and the attempt that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempt: u32,
}

pub trait Backend: Send + Sync {
    fn complete(&self, entry_id: &str, bundle: &PromptBundle) -> Result<Completion, BackendError>;
}

pub fn fingerprint(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// The answer shape each template leads the model to produce, wrapped around
/// `neutral`.
pub fn echo_answer(kind: TemplateKind, neutral: &str) -> String {
    match kind {
        TemplateKind::ZeroShot => neutral.to_string(),
        TemplateKind::Contr => format!("{CONTR_NEUTRAL_LABEL} {neutral}"),
        TemplateKind::CotSrc => format!("A: {FINAL_ANSWER_MARKER} [{neutral}]"),
        TemplateKind::CotTgt => format!("A: {FINAL_ANSWER_MARKER} [{neutral}]."),
    }
}

fn mock_delay(entry_id: &str, max_ms: u64) -> Duration {
    if max_ms == 0 {
        return Duration::ZERO;
    }
    let digest = Sha256::digest(entry_id.as_bytes());
    let n = u64::from_le_bytes(digest[..8].try_into().unwrap());
    Duration::from_millis(n % (max_ms + 1))
}

pub struct MockBackend {
    kind: BackendKind,
    fixed_text: Option<String>,
    /// entry_id -> neutral reference
    fixture: HashMap<String, String>,
    fail_entries: HashSet<String>,
    max_delay_ms: u64,
}

impl MockBackend {
    fn answer(&self, entry_id: &str, bundle: &PromptBundle) -> Result<String, BackendError> {
        match self.kind {
            BackendKind::MockFixed => Ok(self.fixed_text.clone().unwrap_or_default()),
            BackendKind::MockEchoNeutral => {
                let neutral = self
                    .fixture
                    .get(entry_id)
                    .ok_or_else(|| BackendError::MissingFixture(entry_id.to_string()))?;
                Ok(echo_answer(bundle.template_kind, neutral))
            }
            BackendKind::HttpChat => unreachable!("mock constructed with http kind"),
        }
    }
}

impl Backend for MockBackend {
    fn complete(&self, entry_id: &str, bundle: &PromptBundle) -> Result<Completion, BackendError> {
        thread::sleep(mock_delay(entry_id, self.max_delay_ms));
        if self.fail_entries.contains(entry_id) {
            return Err(BackendError::MockFailure(entry_id.to_string()));
        }
        Ok(Completion {
            text: self.answer(entry_id, bundle)?,
            attempt: 1,
        })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

/// Builds the chat-completion JSON body for a prompt: a single user message,
/// optionally preceded by a system message.
pub fn chat_request_body(config: &BackendConfig, prompt: &str) -> serde_json::Value {
    let mut messages = Vec::with_capacity(2);
    if let Some(system) = config.system_message.as_deref() {
        messages.push(ChatMessage {
            role: "system",
            content: system,
        });
    }
    messages.push(ChatMessage {
        role: "user",
        content: prompt,
    });
    serde_json::to_value(ChatRequest {
        model: &config.model_name,
        temperature: config.temperature,
        messages,
    })
    .expect("request body serializes")
}

/// Full-jitter exponential backoff: uniform in `[0, min(cap, base * 2^(attempt-1))]`.
pub fn backoff_delay(attempt: u32, base_ms: u64, cap_ms: u64, rng: &mut impl Rng) -> Duration {
    let exp = base_ms.saturating_mul(1u64 << attempt.saturating_sub(1).min(32));
    let ceiling = exp.min(cap_ms);
    Duration::from_millis(if ceiling == 0 { 0 } else { rng.random_range(0..=ceiling) })
}

pub struct HttpChatBackend {
    config: BackendConfig,
    credential: String,
    client: reqwest::blocking::Client,
}

enum AttemptError {
    Retryable { status: Option<u16>, message: String },
    Fatal(BackendError),
}

impl HttpChatBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let credential = std::env::var(&config.credential_env_var)
            .ok()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| BackendError::MissingCredential(config.credential_env_var.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            config,
            credential,
            client,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, AttemptError> {
        let url = self.config.endpoint_url.as_deref().unwrap_or_default();
        let response = self
            .client
            .post(url)
            .bearer_auth(&self.credential)
            .json(body)
            .send()
            .map_err(|e| AttemptError::Retryable {
                status: e.status().map(|s| s.as_u16()),
                message: e.to_string(),
            })?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Retryable {
                status: Some(status.as_u16()),
                message: format!("server returned {status}"),
            });
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(AttemptError::Fatal(BackendError::Transport {
                attempts: 0,
                last_status: Some(status.as_u16()),
                message: text,
            }));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| AttemptError::Fatal(BackendError::Malformed(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| AttemptError::Fatal(BackendError::Malformed("no answer in first choice".into())))
    }
}

impl Backend for HttpChatBackend {
    fn complete(&self, entry_id: &str, bundle: &PromptBundle) -> Result<Completion, BackendError> {
        let body = chat_request_body(&self.config, &bundle.rendered_text);
        let mut rng = rand::rng();
        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(Completion { text, attempt }),
                Err(AttemptError::Fatal(BackendError::Transport {
                    last_status, message, ..
                })) => {
                    return Err(BackendError::Transport {
                        attempts: attempt,
                        last_status,
                        message,
                    })
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable { status, message }) => {
                    warn!(entry_id, attempt, max = self.config.max_attempts, status, %message, "chat request failed");
                    last_status = status;
                    last_message = message;
                    if attempt < self.config.max_attempts {
                        let delay =
                            backoff_delay(attempt, self.config.retry_base_ms, self.config.retry_cap_ms, &mut rng);
                        debug!(entry_id, ?delay, "backing off");
                        thread::sleep(delay);
                    }
                }
            }
        }
        Err(BackendError::Transport {
            attempts: self.config.max_attempts,
            last_status,
            message: last_message,
        })
    }
}

/// Constructs the configured backend. `fixture` maps entry ids to neutral
/// references and is consulted only by `mock_echo_neutral`.
pub fn build_backend(
    config: &BackendConfig,
    fixture: HashMap<String, String>,
) -> Result<Box<dyn Backend>, BackendError> {
    config.validate()?;
    match config.kind {
        BackendKind::HttpChat => Ok(Box::new(HttpChatBackend::new(config.clone())?)),
        kind => Ok(Box::new(MockBackend {
            kind,
            fixed_text: config.fixed_text.clone(),
            fixture,
            fail_entries: config.fail_entries.iter().cloned().collect(),
            max_delay_ms: config.mock_max_delay_ms,
        })),
    }
}

pub fn translate(backend: &dyn Backend, entry_id: &str, bundle: &PromptBundle) -> Result<RawResponse, BackendError> {
    let started = Instant::now();
    let completion = backend.complete(entry_id, bundle)?;
    Ok(RawResponse {
        entry_id: entry_id.to_string(),
        request_fingerprint: fingerprint(&bundle.rendered_text),
        prompt_chars: bundle.rendered_text.chars().count(),
        completion_chars: completion.text.chars().count(),
        text: completion.text,
        latency_ms: started.elapsed().as_millis() as u64,
        attempt: completion.attempt,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub entry_id: String,
    pub result: Result<RawResponse, BackendError>,
}

/// Sends every `(entry_id, bundle)` request with at most `max_in_flight`
/// outstanding at once. Results come back in input order; a failed entry
/// does not stop the others.
pub fn run_batch(backend: &dyn Backend, requests: &[(String, PromptBundle)], max_in_flight: usize) -> Vec<BatchItem> {
    let slots: Vec<Mutex<Option<BatchItem>>> = requests.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.max(1).min(requests.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((entry_id, bundle)) = requests.get(i) else {
                    break;
                };
                let result = translate(backend, entry_id, bundle);
                *slots[i].lock().unwrap() = Some(BatchItem {
                    entry_id: entry_id.clone(),
                    result,
                });
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every request is processed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::build_zero_shot;
    use rand::SeedableRng;

    fn mock(config: BackendConfig, fixture: &[(&str, &str)]) -> Box<dyn Backend> {
        let fixture = fixture.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        build_backend(&config, fixture).unwrap()
    }

    fn fixed(text: &str) -> BackendConfig {
        BackendConfig {
            kind: BackendKind::MockFixed,
            fixed_text: Some(text.into()),
            ..Default::default()
        }
    }

    #[test]
    fn default_temperature_is_zero() {
        assert_eq!(BackendConfig::default().temperature, 0.0);
    }

    #[test]
    fn fixed_mock_returns_constant() {
        let backend = mock(fixed("X"), &[]);
        let bundle = build_zero_shot("Hello.", "Italian").unwrap();
        let r = translate(backend.as_ref(), "e1", &bundle).unwrap();
        assert_eq!(r.text, "X");
        assert_eq!(r.request_fingerprint, fingerprint(&bundle.rendered_text));
        assert_eq!(r.prompt_chars, bundle.rendered_text.chars().count());
    }

    #[test]
    fn echo_mock_cot_tgt_shape() {
        let mut bundle = build_zero_shot("Hello.", "Italian").unwrap();
        bundle.template_kind = TemplateKind::CotTgt;
        let backend = mock(BackendConfig::default(), &[("e1", "Y")]);
        let r = translate(backend.as_ref(), "e1", &bundle).unwrap();
        assert!(r.text.ends_with("The final gender-neutral translation is [Y]."));
        assert_eq!(
            translate(backend.as_ref(), "e2", &bundle).unwrap_err(),
            BackendError::MissingFixture("e2".into())
        );
    }

    #[test]
    fn config_validation() {
        let c = BackendConfig {
            temperature: 2.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = BackendConfig {
            kind: BackendKind::HttpChat,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(BackendError::Config(_))));
        let c = BackendConfig {
            kind: BackendKind::MockFixed,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_credential_fails_before_network() {
        let c = BackendConfig {
            kind: BackendKind::HttpChat,
            endpoint_url: Some("http://127.0.0.1:9/v1/chat/completions".into()),
            credential_env_var: "GNT_TEST_DEFINITELY_UNSET_KEY".into(),
            ..Default::default()
        };
        assert_eq!(
            build_backend(&c, HashMap::new()).err().unwrap(),
            BackendError::MissingCredential("GNT_TEST_DEFINITELY_UNSET_KEY".into())
        );
    }

    #[test]
    fn request_body_shape() {
        let c = BackendConfig::default();
        let body = chat_request_body(&c, "hello");
        assert_eq!(
            body,
            serde_json::json!({
                "model": "gpt-4-0613",
                "temperature": 0.0,
                "messages": [{"role": "user", "content": "hello"}]
            })
        );
        let c = BackendConfig {
            system_message: Some("sys".into()),
            ..Default::default()
        };
        assert_eq!(chat_request_body(&c, "hi")["messages"][0]["role"], "system");
    }

    #[test]
    fn backoff_is_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for attempt in 1..40 {
            let d = backoff_delay(attempt, 1_000, 30_000, &mut rng);
            assert!(d <= Duration::from_millis(30_000));
            assert!(d <= Duration::from_millis(1_000 * (1 << (attempt - 1).min(5))));
        }
    }

    #[test]
    fn batch_preserves_order_and_isolates_failures() {
        let bundle = build_zero_shot("Hello.", "Italian").unwrap();
        let requests: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|id| (id.to_string(), bundle.clone()))
            .collect();
        let mut config = fixed("X");
        config.fail_entries = vec!["b".into()];
        let backend = mock(config, &[]);
        let results = run_batch(backend.as_ref(), &requests, 2);
        assert_eq!(
            results.iter().map(|r| r.entry_id.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        assert!(results[0].result.is_ok());
        assert_eq!(results[1].result, Err(BackendError::MockFailure("b".into())));
        assert!(results[2].result.is_ok());
        assert!(run_batch(backend.as_ref(), &[], 4).is_empty());
    }
}
