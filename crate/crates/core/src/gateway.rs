//! Uniform access to chat-completion providers: a live OpenAI-compatible
//! client, a scripted mock for hermetic tests, retry with backoff, and a
//! content-addressed on-disk response cache.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompts::{Message, RenderedPrompt, Role};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const ENDPOINT_ENV: &str = "AUTOREASON_ENDPOINT";

/// Provider model assignment plus decoding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub endpoint: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
}

impl ModelSpec {
    pub fn new(model_id: impl Into<String>) -> Self {
        ModelSpec {
            model_id: model_id.into(),
            endpoint: DEFAULT_ENDPOINT.to_string(),
            temperature: 0.0,
            max_output_tokens: 512,
            timeout_secs: 60,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model_id.is_empty() {
            return Err(GatewayError::rejected("model_id is empty"));
        }
        if self.timeout_secs == 0 {
            return Err(GatewayError::rejected("timeout must be positive"));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::rejected("temperature out of range [0, 2]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub spec: ModelSpec,
    pub messages: Vec<Message>,
}

impl CompletionRequest {
    pub fn new(spec: &ModelSpec, prompt: &RenderedPrompt) -> Self {
        CompletionRequest {
            spec: spec.clone(),
            messages: prompt.messages.clone(),
        }
    }
}

// ModelSpec carries f64 temperature; request equality for tests only ever
// compares specs built from the same literals.
impl Eq for ModelSpec {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayErrorKind {
    Network,
    RateLimited,
    ProviderRejected,
    Timeout,
    MalformedResponse,
    Unscripted,
}

impl FromStr for GatewayErrorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "network" => Ok(Self::Network),
            "rate_limited" => Ok(Self::RateLimited),
            "provider_rejected" => Ok(Self::ProviderRejected),
            "timeout" => Ok(Self::Timeout),
            "malformed_response" => Ok(Self::MalformedResponse),
            other => Err(format!("unknown fault kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Error)]
#[error("{kind:?}: {detail}")]
pub struct GatewayError {
    pub kind: GatewayErrorKind,
    pub detail: String,
    pub retryable: bool,
}

impl GatewayError {
    /// Constructor fixing the kind/retryable invariant: rate-limit and
    /// network faults are retryable, provider rejections never are.
    pub fn of_kind(kind: GatewayErrorKind, detail: impl Into<String>) -> Self {
        let retryable = match kind {
            GatewayErrorKind::Network | GatewayErrorKind::RateLimited => true,
            GatewayErrorKind::Timeout => true,
            GatewayErrorKind::ProviderRejected
            | GatewayErrorKind::MalformedResponse
            | GatewayErrorKind::Unscripted => false,
        };
        GatewayError {
            kind,
            detail: detail.into(),
            retryable,
        }
    }

    pub fn rejected(detail: impl Into<String>) -> Self {
        Self::of_kind(GatewayErrorKind::ProviderRejected, detail)
    }
}

/// Stable digest over (model_id, temperature, max_output_tokens, messages).
///
/// Serialized through a fixed-field-order JSON value, so the digest is
/// reproducible across processes and platforms.
pub fn request_digest(request: &CompletionRequest) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        model: &'a str,
        temperature: String,
        max_output_tokens: u32,
        messages: Vec<(&'static str, &'a str)>,
    }
    let canonical = Canonical {
        model: &request.spec.model_id,
        temperature: format!("{:?}", request.spec.temperature),
        max_output_tokens: request.spec.max_output_tokens,
        messages: request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                };
                (role, m.content.as_str())
            })
            .collect(),
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Single-attempt transport. The gateway layers cache and retry on top.
pub trait Backend: Send + Sync {
    fn execute(&self, request: &CompletionRequest, digest: &str) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedReply {
    Response(String),
    Fault(GatewayErrorKind),
}

#[derive(Debug, Clone)]
pub struct CallRecord {
    pub model_id: String,
    pub digest: String,
}

/// Replays a scripted transcript keyed by request digest. Each entry is
/// consumed once, so fault sequences for the same digest play in order.
/// Unscripted digests fail loudly, keeping tests hermetic.
pub struct MockBackend {
    entries: Mutex<Vec<(String, Option<ScriptedReply>)>>,
    log: Mutex<Vec<CallRecord>>,
}

impl MockBackend {
    pub fn new(transcript: Vec<(String, ScriptedReply)>) -> Self {
        MockBackend {
            entries: Mutex::new(
                transcript
                    .into_iter()
                    .map(|(d, r)| (d, Some(r)))
                    .collect(),
            ),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Load a transcript from JSONL: each line is either
    /// `{"digest": "...", "response": "..."}` or `{"digest": "...", "fault": "rate_limited"}`.
    pub fn from_jsonl(path: &Path) -> Result<Self, GatewayError> {
        #[derive(Deserialize)]
        struct Line {
            digest: String,
            #[serde(default)]
            response: Option<String>,
            #[serde(default)]
            fault: Option<String>,
        }
        let text = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::rejected(format!("cannot read transcript {}: {e}", path.display()))
        })?;
        let mut transcript = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| {
                GatewayError::rejected(format!("transcript line {}: {e}", i + 1))
            })?;
            let reply = match (parsed.response, parsed.fault) {
                (Some(r), None) => ScriptedReply::Response(r),
                (None, Some(f)) => ScriptedReply::Fault(
                    f.parse().map_err(GatewayError::rejected)?,
                ),
                _ => {
                    return Err(GatewayError::rejected(format!(
                        "transcript line {}: exactly one of response/fault required",
                        i + 1
                    )))
                }
            };
            transcript.push((parsed.digest, reply));
        }
        Ok(Self::new(transcript))
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn calls_for_model(&self, model_id: &str) -> usize {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|c| c.model_id == model_id)
            .count()
    }

    pub fn remaining(&self) -> usize {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .filter(|(_, r)| r.is_some())
            .count()
    }
}

impl Backend for MockBackend {
    fn execute(&self, request: &CompletionRequest, digest: &str) -> Result<String, GatewayError> {
        self.log.lock().unwrap().push(CallRecord {
            model_id: request.spec.model_id.clone(),
            digest: digest.to_string(),
        });
        let mut entries = self.entries.lock().unwrap();
        let slot = entries
            .iter_mut()
            .find(|(d, r)| d == digest && r.is_some());
        match slot {
            Some((_, reply)) => match reply.take().unwrap() {
                ScriptedReply::Response(text) => Ok(text),
                ScriptedReply::Fault(kind) => {
                    Err(GatewayError::of_kind(kind, "scripted fault"))
                }
            },
            None => {
                let rendered: Vec<String> = request
                    .messages
                    .iter()
                    .map(|m| format!("[{}] {}", m.role, m.content))
                    .collect();
                Err(GatewayError::of_kind(
                    GatewayErrorKind::Unscripted,
                    format!(
                        "no scripted reply for digest {digest} (model {}):\n{}",
                        request.spec.model_id,
                        rendered.join("\n")
                    ),
                ))
            }
        }
    }
}

/// Live OpenAI-compatible chat-completions client.
pub struct LiveBackend {
    api_key: String,
    endpoint_override: Option<String>,
}

impl LiveBackend {
    pub fn from_env() -> Result<Self, GatewayError> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| {
            GatewayError::rejected(format!("{API_KEY_ENV} is not set"))
        })?;
        Ok(LiveBackend {
            api_key,
            endpoint_override: std::env::var(ENDPOINT_ENV).ok(),
        })
    }
}

impl Backend for LiveBackend {
    fn execute(&self, request: &CompletionRequest, _digest: &str) -> Result<String, GatewayError> {
        let base = self
            .endpoint_override
            .as_deref()
            .unwrap_or(&request.spec.endpoint)
            .trim_end_matches('/');
        let url = format!("{base}/chat/completions");
        let body = serde_json::json!({
            "model": request.spec.model_id,
            "messages": request.messages.iter().map(|m| {
                serde_json::json!({"role": m.role.to_string(), "content": m.content})
            }).collect::<Vec<_>>(),
            "temperature": request.spec.temperature,
            "max_tokens": request.spec.max_output_tokens,
        });
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(request.spec.timeout_secs))
            .build()
            .map_err(|e| GatewayError::of_kind(GatewayErrorKind::Network, e.to_string()))?;
        let response = client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    GatewayError::of_kind(GatewayErrorKind::Timeout, e.to_string())
                } else {
                    GatewayError::of_kind(GatewayErrorKind::Network, e.to_string())
                }
            })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| GatewayError::of_kind(GatewayErrorKind::Network, e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(GatewayError::of_kind(GatewayErrorKind::RateLimited, text));
        }
        if status.is_server_error() {
            return Err(GatewayError::of_kind(GatewayErrorKind::Network, text));
        }
        if !status.is_success() {
            return Err(GatewayError::rejected(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            GatewayError::of_kind(GatewayErrorKind::MalformedResponse, e.to_string())
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                GatewayError::of_kind(
                    GatewayErrorKind::MalformedResponse,
                    "payload lacks an assistant message",
                )
            })
    }
}

/// One file per digest; writes go through a temp file and rename so
/// concurrent writers of identical content are harmless.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(digest)
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        std::fs::read_to_string(self.path(digest)).ok()
    }

    pub fn put(&self, digest: &str, content: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!("{digest}.tmp{}", std::process::id()));
        std::fs::write(&tmp, content)?;
        std::fs::rename(&tmp, self.path(digest))
    }

    pub fn clear(&self) -> std::io::Result<usize> {
        let mut removed = 0;
        match std::fs::read_dir(&self.dir) {
            Ok(entries) => {
                for entry in entries.flatten() {
                    if entry.file_type().map(|t| t.is_file()).unwrap_or(false) {
                        std::fs::remove_file(entry.path())?;
                        removed += 1;
                    }
                }
                Ok(removed)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Zero-delay policy for tests.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            factor: 2.0,
            jitter: false,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.as_secs_f64() * self.factor.powi(attempt as i32);
        let secs = if self.jitter {
            rand::thread_rng().gen_range(0.0..=exp)
        } else {
            exp
        };
        Duration::from_secs_f64(secs)
    }
}

/// Counting semaphore bounding concurrent provider calls.
struct InFlightLimit {
    available: Mutex<u32>,
    released: std::sync::Condvar,
}

impl InFlightLimit {
    fn new(limit: u32) -> Self {
        InFlightLimit {
            available: Mutex::new(limit.max(1)),
            released: std::sync::Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.released.wait(available).unwrap();
        }
        *available -= 1;
    }

    fn release(&self) {
        *self.available.lock().unwrap() += 1;
        self.released.notify_one();
    }
}

pub const DEFAULT_IN_FLIGHT_LIMIT: u32 = 4;

/// Backend plus cache and retry; the single entry point the pipeline uses.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    in_flight: InFlightLimit,
    provider_calls: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, cache: Option<ResponseCache>, retry: RetryPolicy) -> Self {
        Self::with_in_flight_limit(backend, cache, retry, DEFAULT_IN_FLIGHT_LIMIT)
    }

    pub fn with_in_flight_limit(
        backend: Arc<dyn Backend>,
        cache: Option<ResponseCache>,
        retry: RetryPolicy,
        limit: u32,
    ) -> Self {
        Gateway {
            backend,
            cache,
            retry,
            in_flight: InFlightLimit::new(limit),
            provider_calls: AtomicU64::new(0),
        }
    }

    /// Total attempts actually issued to the backend (cache hits excluded).
    pub fn provider_call_count(&self) -> u64 {
        self.provider_calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.spec.validate()?;
        if request.messages.is_empty() {
            return Err(GatewayError::rejected("messages must be non-empty"));
        }
        let digest = request_digest(request);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&digest) {
                return Ok(hit);
            }
        }
        let mut last_err = None;
        for attempt in 0..self.retry.max_attempts {
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            self.in_flight.acquire();
            let result = self.backend.execute(request, &digest);
            self.in_flight.release();
            match result {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        // cache write failure is not a completion failure
                        let _ = cache.put(&digest, &text);
                    }
                    return Ok(text);
                }
                Err(err) if err.retryable && attempt + 1 < self.retry.max_attempts => {
                    std::thread::sleep(self.retry.delay(attempt));
                    last_err = Some(err);
                }
                Err(err) => return Err(err),
            }
        }
        Err(last_err.unwrap_or_else(|| GatewayError::rejected("attempt limit is zero")))
    }
}
