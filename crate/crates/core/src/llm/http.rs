//! OpenAI-compatible chat-completions client with retry and bounded concurrency.

use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{
    BackendError, CompletionRequest, CompletionResult, ConcurrencyLimiter, HashEmbedder, LlmBackend,
    TokenUsage,
};

pub const DEFAULT_API_KEY_ENV: &str = "CIRAG_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub model: String,
    pub embedding_model: Option<String>,
    pub timeout_secs: f64,
    /// Retries after the first attempt for transient failures (429, 5xx, I/O).
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_in_flight: usize,
    pub hash_embedding_fallback: bool,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            model: "qwen2.5-7b-instruct".into(),
            embedding_model: None,
            timeout_secs: 120.0,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
            max_in_flight: 8,
            hash_embedding_fallback: false,
        }
    }
}

impl HttpConfig {
    fn backoff(&self, retry: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fatal(BackendError),
}

pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    limiter: ConcurrencyLimiter,
    embedder: HashEmbedder,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// Reads the API key from `cfg.api_key_env`; a missing key is allowed for
    /// local servers.
    pub fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Other(format!("cannot build http client: {e}")))?;
        Ok(Self {
            limiter: ConcurrencyLimiter::new(cfg.max_in_flight.max(1)),
            cfg,
            client,
            api_key,
            embedder: HashEmbedder::default(),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    pub fn limiter(&self) -> &ConcurrencyLimiter {
        &self.limiter
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.endpoint.trim_end_matches('/'), path)
    }

    fn post<B: Serialize, T: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Attempt<T> {
        let mut rb = self.client.post(self.url(path)).json(body);
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = match rb.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("status {status}"));
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Attempt::Fatal(BackendError::Status {
                status: status.as_u16(),
                body,
            });
        }
        match resp.json::<T>() {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fatal(BackendError::Decode(e.to_string())),
        }
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Attempt<T>) -> Result<T, BackendError> {
        let _permit = self.limiter.acquire();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match call() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(message) => {
                    if attempts > self.cfg.max_retries {
                        return Err(BackendError::Transport { attempts, message });
                    }
                    let wait = self.cfg.backoff(attempts - 1);
                    debug!("transient failure ({message}); retry {attempts} after {wait:?}");
                    std::thread::sleep(wait);
                }
            }
        }
    }
}

impl LlmBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let started = Instant::now();
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &req.prompt,
            }],
            temperature: req.temperature,
            max_tokens: req.max_output_tokens,
        };
        let resp: ChatResponse = self.with_retries(|| self.post("chat/completions", &body))?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Decode("response has no message content".into()))?;
        let usage = resp.usage.map_or_else(TokenUsage::default, |u| TokenUsage {
            input: u.prompt_tokens,
            output: u.completion_tokens,
        });
        Ok(CompletionResult {
            text,
            latency: started.elapsed(),
            model_id: resp.model.unwrap_or_else(|| self.cfg.model.clone()),
            token_usage: usage,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let remote = match &self.cfg.embedding_model {
            Some(model) => {
                let body = EmbeddingRequest { model, input: texts };
                self.with_retries(|| self.post::<_, EmbeddingResponse>("embeddings", &body))
                    .and_then(|r| {
                        if r.data.len() != texts.len() {
                            return Err(BackendError::Decode(format!(
                                "expected {} embeddings, got {}",
                                texts.len(),
                                r.data.len()
                            )));
                        }
                        Ok(r.data.into_iter().map(|d| unit(d.embedding)).collect())
                    })
            }
            None => Err(BackendError::EmbeddingUnavailable("no embedding model configured".into())),
        };
        match remote {
            Ok(v) => Ok(v),
            Err(e) if self.cfg.hash_embedding_fallback => {
                warn!("embedding endpoint failed ({e}); using hash embeddings");
                Ok(self.embedder.embed(texts))
            }
            Err(e) => Err(e),
        }
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}
