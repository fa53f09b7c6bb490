//! Chat-completion and embedding backends.
//!
//! [`Llm`] and [`Embedder`] are the two provider traits. Pipeline code never
//! calls them directly; it goes through [`complete`] and [`embed_texts`], which
//! validate inputs, batch embedding requests and check dimensions.

pub mod mock;
mod openai;
mod retry;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use openai::{HttpResponse, OpenAiClient, Transport, UreqTransport};
pub use retry::RetryPolicy;

use crate::text::sha256_hex;

pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_EMBED_MODEL: &str = "text-embedding-ada-002";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";
pub const MAX_EMBED_BATCH: usize = 128;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProviderError {
    #[error("HTTP {status} from {endpoint}: {message}")]
    Http {
        endpoint: String,
        status: u16,
        message: String,
    },
    #[error("transport failure calling {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("malformed response from {endpoint}: {message}")]
    MalformedResponse { endpoint: String, message: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid provider request: {0}")]
    InvalidRequest(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<ProviderError>,
    },
    #[error("mock provider: {message}")]
    Mock { message: String, retryable: bool },
}

impl ProviderError {
    /// Whether the failure is worth retrying: 429, 5xx and transport errors.
    pub fn retryable(&self) -> bool {
        match self {
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            ProviderError::Transport { .. } => true,
            ProviderError::RetriesExhausted { last, .. } => last.retryable(),
            ProviderError::Mock { retryable, .. } => *retryable,
            _ => false,
        }
    }

    pub fn mock(message: impl Into<String>) -> Self {
        ProviderError::Mock {
            message: message.into(),
            retryable: false,
        }
    }
}

/// An embedding as returned by a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionParams {
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for CompletionParams {
    /// Pipeline-internal calls run at temperature 0.
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

pub trait Llm: Send + Sync {
    fn model_id(&self) -> &str;

    /// One completion request. Callers go through [`complete`].
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;

    /// Largest batch accepted by [`Embedder::embed_batch`].
    fn max_batch(&self) -> usize {
        MAX_EMBED_BATCH
    }

    /// One embedding request. Callers go through [`embed_texts`].
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

impl<T: Llm + ?Sized> Llm for Arc<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError> {
        (**self).complete(messages, params)
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

/// Validates the conversation, then issues a completion.
pub fn complete(
    llm: &dyn Llm,
    messages: &[ChatMessage],
    params: &CompletionParams,
) -> Result<String, ProviderError> {
    let Some(last) = messages.last() else {
        return Err(ProviderError::InvalidRequest("no messages".into()));
    };
    if last.role != Role::User {
        return Err(ProviderError::InvalidRequest(
            "conversation must end with a user message".into(),
        ));
    }
    if let Some(m) = messages
        .iter()
        .find(|m| m.role != Role::Assistant && m.content.trim().is_empty())
    {
        return Err(ProviderError::InvalidRequest(format!(
            "empty {} message",
            m.role.as_str()
        )));
    }
    llm.complete(messages, params)
}

/// Shorthand for a single user prompt at default parameters.
pub fn complete_prompt(llm: &dyn Llm, prompt: &str) -> Result<String, ProviderError> {
    complete(
        llm,
        &[ChatMessage::user(prompt)],
        &CompletionParams::default(),
    )
}

/// Embeds `texts` in order, splitting into requests of at most
/// `embedder.max_batch()` texts. Every vector must share one dimension.
pub fn embed_texts(
    embedder: &dyn Embedder,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>, ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::InvalidRequest("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ProviderError::InvalidRequest(format!("text {i} is empty")));
    }
    let batch = embedder.max_batch().clamp(1, MAX_EMBED_BATCH);
    let mut out = Vec::with_capacity(texts.len());
    let mut dim: Option<usize> = None;
    for group in texts.chunks(batch) {
        let vectors = embedder.embed_batch(group)?;
        if vectors.len() != group.len() {
            return Err(ProviderError::MalformedResponse {
                endpoint: "embeddings".into(),
                message: format!("{} vectors for {} inputs", vectors.len(), group.len()),
            });
        }
        for v in vectors {
            let expected = *dim.get_or_insert(v.dim());
            if v.dim() != expected || expected == 0 {
                return Err(ProviderError::DimensionMismatch {
                    expected,
                    got: v.dim(),
                });
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(ProviderError::MalformedResponse {
                    endpoint: "embeddings".into(),
                    message: "non-finite embedding value".into(),
                });
            }
            out.push(v);
        }
    }
    Ok(out)
}

pub fn embed_one(embedder: &dyn Embedder, text: &str) -> Result<EmbeddingVector, ProviderError> {
    Ok(embed_texts(embedder, &[text.to_string()])?.remove(0))
}

/// Key used by transcript replay: SHA-256 over `role\ncontent` of every
/// message, messages separated by a blank line.
pub fn prompt_sha256(messages: &[ChatMessage]) -> String {
    let rendered = messages
        .iter()
        .map(|m| format!("{}\n{}", m.role.as_str(), m.content))
        .collect::<Vec<_>>()
        .join("\n\n");
    sha256_hex(rendered)
}

/// Secret string that never prints.
#[derive(Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Replaces any occurrence of the key in `text`.
    pub fn redact(&self, text: &str) -> String {
        if self.0.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.0, "***")
        }
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_empty() {
            "ApiKey(<unset>)"
        } else {
            "ApiKey(***)"
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: ApiKey,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.into(),
            api_key: ApiKey::default(),
            chat_model: DEFAULT_CHAT_MODEL.into(),
            embed_model: DEFAULT_EMBED_MODEL.into(),
            timeout_secs: 60,
            max_retries: 3,
            max_in_flight: 4,
        }
    }
}

impl ProviderConfig {
    /// Overlays `LITRAG_BASE_URL`, `LITRAG_API_KEY`, `LITRAG_CHAT_MODEL` and
    /// `LITRAG_EMBED_MODEL` onto `self`.
    pub fn with_env(mut self) -> Self {
        self.apply_env(|k| std::env::var(k).ok());
        self
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("LITRAG_BASE_URL") {
            self.base_url = v;
        }
        if let Some(v) = get("LITRAG_API_KEY") {
            self.api_key = ApiKey::new(v);
        }
        if let Some(v) = get("LITRAG_CHAT_MODEL") {
            self.chat_model = v;
        }
        if let Some(v) = get("LITRAG_EMBED_MODEL") {
            self.embed_model = v;
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_in_flight == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_in_flight must be at least 1".into(),
            ));
        }
        if self.base_url.is_empty() {
            return Err(ProviderError::InvalidRequest("base_url is empty".into()));
        }
        Ok(())
    }
}

/// Wraps an [`Llm`] and counts completion calls.
pub struct CountingLlm<'a> {
    inner: &'a dyn Llm,
    calls: AtomicUsize,
}

impl<'a> CountingLlm<'a> {
    pub fn new(inner: &'a dyn Llm) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Llm for CountingLlm<'_> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(messages, params)
    }
}

/// Wraps an [`Embedder`] and counts embedding requests.
pub struct CountingEmbedder<'a> {
    inner: &'a dyn Embedder,
    calls: AtomicUsize,
}

impl<'a> CountingEmbedder<'a> {
    pub fn new(inner: &'a dyn Embedder) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Embedder for CountingEmbedder<'_> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn max_batch(&self) -> usize {
        self.inner.max_batch()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed_batch(texts)
    }
}
