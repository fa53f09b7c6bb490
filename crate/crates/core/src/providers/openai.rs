use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    ApiKey, ChatMessage, CompletionParams, Embedder, EmbeddingVector, Llm, ProviderConfig,
    ProviderError, RetryPolicy,
};
use crate::concurrency::Semaphore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP surface the client needs: one JSON POST with bearer auth.
/// Transport failures (connect, timeout) surface as `ProviderError::Transport`.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: &ApiKey,
        body: &Value,
    ) -> Result<HttpResponse, ProviderError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: config.into(),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: &ApiKey,
        body: &Value,
    ) -> Result<HttpResponse, ProviderError> {
        let transport = |e: ureq::Error| ProviderError::Transport {
            endpoint: url.to_string(),
            message: api_key.redact(&e.to_string()),
        };
        let mut request = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if !api_key.is_empty() {
            request = request.header("Authorization", &format!("Bearer {}", api_key.expose()));
        }
        let mut response = request.send_json(body).map_err(transport)?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(transport)?;
        Ok(HttpResponse { status, body })
    }
}

/// Client for `/v1/chat/completions` and `/v1/embeddings`.
pub struct OpenAiClient {
    config: ProviderConfig,
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    in_flight: Semaphore,
}

impl OpenAiClient {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        let transport = UreqTransport::new(Duration::from_secs(config.timeout_secs.max(1)));
        Self::with_transport(config, Box::new(transport))
    }

    pub fn with_transport(
        config: ProviderConfig,
        transport: Box<dyn Transport>,
    ) -> Result<Self, ProviderError> {
        config.validate()?;
        let retry = RetryPolicy {
            max_retries: config.max_retries,
            ..RetryPolicy::default()
        };
        let in_flight = Semaphore::new(config.max_in_flight);
        Ok(Self {
            config,
            transport,
            retry,
            in_flight,
        })
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/v1/{path}", self.config.base_url.trim_end_matches('/'))
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = self.url(path);
        let key = &self.config.api_key;
        self.retry.run(|attempt| {
            let _permit = self.in_flight.acquire();
            tracing::debug!(%url, attempt, "provider request");
            let response = self.transport.post_json(&url, key, body)?;
            if !(200..300).contains(&response.status) {
                return Err(ProviderError::Http {
                    endpoint: url.clone(),
                    status: response.status,
                    message: key.redact(&error_message(&response.body)),
                });
            }
            serde_json::from_str(&response.body).map_err(|e| ProviderError::MalformedResponse {
                endpoint: url.clone(),
                message: e.to_string(),
            })
        })
    }
}

fn error_message(body: &str) -> String {
    #[derive(Deserialize)]
    struct Envelope {
        error: Detail,
    }
    #[derive(Deserialize)]
    struct Detail {
        message: String,
    }
    match serde_json::from_str::<Envelope>(body) {
        Ok(e) => e.error.message,
        Err(_) => body.chars().take(200).collect(),
    }
}

impl Llm for OpenAiClient {
    fn model_id(&self) -> &str {
        &self.config.chat_model
    }

    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.chat_model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let value = self.post("chat/completions", &body)?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::MalformedResponse {
                endpoint: self.url("chat/completions"),
                message: "missing choices[0].message.content".into(),
            })
    }
}

impl Embedder for OpenAiClient {
    fn model_id(&self) -> &str {
        &self.config.embed_model
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        #[derive(Deserialize)]
        struct Row {
            index: usize,
            embedding: Vec<f32>,
        }
        #[derive(Deserialize)]
        struct Reply {
            data: Vec<Row>,
            #[serde(default)]
            model: Option<String>,
        }
        let body = json!({ "model": self.config.embed_model, "input": texts });
        let value = self.post("embeddings", &body)?;
        let malformed = |message: String| ProviderError::MalformedResponse {
            endpoint: self.url("embeddings"),
            message,
        };
        let reply: Reply = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        let model_id = reply
            .model
            .unwrap_or_else(|| self.config.embed_model.clone());
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        for row in reply.data {
            let slot = slots
                .get_mut(row.index)
                .ok_or_else(|| malformed(format!("index {} out of range", row.index)))?;
            *slot = Some(row.embedding);
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.map(|values| EmbeddingVector {
                    values,
                    model_id: model_id.clone(),
                })
                .ok_or_else(|| malformed(format!("no embedding for input {i}")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::providers::{complete, embed_texts};

    /// Replays canned responses and records requests.
    #[derive(Clone, Default)]
    struct ScriptedTransport {
        replies: Arc<Mutex<Vec<Result<HttpResponse, ProviderError>>>>,
        seen: Arc<Mutex<Vec<(String, Value)>>>,
    }

    impl ScriptedTransport {
        fn new(replies: Vec<Result<HttpResponse, ProviderError>>) -> Self {
            let mut replies = replies;
            replies.reverse();
            Self {
                replies: Arc::new(Mutex::new(replies)),
                seen: Default::default(),
            }
        }
    }

    impl Transport for ScriptedTransport {
        fn post_json(
            &self,
            url: &str,
            _key: &ApiKey,
            body: &Value,
        ) -> Result<HttpResponse, ProviderError> {
            self.seen
                .lock()
                .unwrap()
                .push((url.to_string(), body.clone()));
            self.replies
                .lock()
                .unwrap()
                .pop()
                .expect("unexpected request")
        }
    }

    fn ok(body: &str) -> Result<HttpResponse, ProviderError> {
        Ok(HttpResponse {
            status: 200,
            body: body.into(),
        })
    }

    fn status(code: u16, body: &str) -> Result<HttpResponse, ProviderError> {
        Ok(HttpResponse {
            status: code,
            body: body.into(),
        })
    }

    fn client(transport: ScriptedTransport, max_retries: u32) -> OpenAiClient {
        let config = ProviderConfig {
            base_url: "http://llm.test/".into(),
            api_key: ApiKey::new("sk-test-SECRET-42"),
            max_retries,
            ..ProviderConfig::default()
        };
        OpenAiClient::with_transport(config, Box::new(transport))
            .unwrap()
            .with_retry_policy(RetryPolicy::immediate(max_retries))
    }

    const CHAT_OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"OK"}}]}"#;

    #[test]
    fn chat_request_shape() {
        let t = ScriptedTransport::new(vec![ok(CHAT_OK)]);
        let c = client(t.clone(), 0);
        let params = CompletionParams {
            temperature: 0.0,
            max_tokens: 16,
        };
        assert_eq!(
            complete(&c, &[ChatMessage::user("hi")], &params).unwrap(),
            "OK"
        );
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen[0].0, "http://llm.test/v1/chat/completions");
        assert_eq!(seen[0].1["model"], "gpt-4o-mini");
        assert_eq!(seen[0].1["messages"][0]["role"], "user");
        assert_eq!(seen[0].1["max_tokens"], 16);
    }

    #[test]
    fn retries_then_succeeds() {
        let t = ScriptedTransport::new(vec![status(503, ""), status(429, ""), ok(CHAT_OK)]);
        let c = client(t.clone(), 3);
        assert_eq!(
            complete(&c, &[ChatMessage::user("hi")], &CompletionParams::default()).unwrap(),
            "OK"
        );
        assert_eq!(t.seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn bad_request_not_retried() {
        let t = ScriptedTransport::new(vec![status(400, r#"{"error":{"message":"bad"}}"#)]);
        let c = client(t.clone(), 3);
        let err =
            complete(&c, &[ChatMessage::user("hi")], &CompletionParams::default()).unwrap_err();
        assert!(matches!(err, ProviderError::Http { status: 400, .. }));
        assert!(!err.retryable());
        assert_eq!(t.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn malformed_body_is_an_error() {
        let t = ScriptedTransport::new(vec![ok("not json"), ok(r#"{"choices":[]}"#)]);
        let c = client(t, 0);
        for _ in 0..2 {
            let err =
                complete(&c, &[ChatMessage::user("hi")], &CompletionParams::default()).unwrap_err();
            assert!(matches!(err, ProviderError::MalformedResponse { .. }));
        }
    }

    #[test]
    fn embeddings_reordered_by_index() {
        let body = r#"{"model":"ada","data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
        let t = ScriptedTransport::new(vec![ok(body)]);
        let c = client(t.clone(), 0);
        let out = embed_texts(&c, &["a".into(), "b".into()]).unwrap();
        assert_eq!(out[0].values, [1.0, 0.0]);
        assert_eq!(out[1].values, [0.0, 1.0]);
        assert_eq!(out[0].model_id, "ada");
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen[0].0, "http://llm.test/v1/embeddings");
        assert_eq!(seen[0].1["input"][1], "b");
    }

    #[derive(Clone, Default)]
    struct LogSink(Arc<Mutex<Vec<u8>>>);

    impl Write for LogSink {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn secrets_stay_out_of_logs_and_errors() {
        let sink = LogSink::default();
        let writer = sink.clone();
        let subscriber = tracing_subscriber::fmt()
            .with_max_level(tracing::Level::TRACE)
            .with_writer(move || writer.clone())
            .with_ansi(false)
            .finish();
        let echoed = r#"{"error":{"message":"Incorrect API key provided: sk-test-SECRET-42"}}"#;
        let t = ScriptedTransport::new(vec![
            status(500, echoed),
            status(500, echoed),
            status(401, echoed),
        ]);
        let c = client(t, 2);
        let err = tracing::subscriber::with_default(subscriber, || {
            complete(&c, &[ChatMessage::user("hi")], &CompletionParams::default()).unwrap_err()
        });
        let log = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
        assert!(
            log.contains("retrying provider call"),
            "log fixture captured: {log}"
        );
        assert!(!log.contains("SECRET"), "{log}");
        assert!(!err.to_string().contains("SECRET"));
        assert!(!format!("{err:?}").contains("SECRET"));
        assert!(!format!("{c:?}", c = c.config()).contains("SECRET"));
    }
}
