//! Chat-completions client.
//!
//! [`LlmClient`] owns the request policy (concurrency cap, minimum spacing
//! between requests, retries) and delegates the wire to a
//! [`ChatTransport`]. Tests plug in [`ScriptedTransport`] or
//! [`FnTransport`]; production uses [`HttpTransport`].

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::super::EstimatorError;
use super::LlmConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// Sends one request and returns the first choice's message content.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest, correlation_id: u64) -> Result<String, EstimatorError>;
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: String,
}

/// HTTP JSON transport for chat-completions-style endpoints.
///
/// The bearer token is read from the environment variable named in the
/// config at construction time. The correlation id travels in the
/// `x-request-id` header; when the server echoes that header back it must
/// match.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

pub const CORRELATION_HEADER: &str = "x-request-id";

impl HttpTransport {
    pub fn from_config(config: &LlmConfig) -> Result<Self, EstimatorError> {
        let api_key = match std::env::var(&config.api_key_env) {
            Ok(key) if !key.is_empty() => Some(key),
            _ if config.require_api_key => return Err(EstimatorError::MissingApiKey(config.api_key_env.clone())),
            _ => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { agent, endpoint: config.endpoint.clone(), api_key })
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, request: &ChatRequest, correlation_id: u64) -> Result<String, EstimatorError> {
        let id = correlation_id.to_string();
        let mut call = self.agent.post(&self.endpoint).header(CORRELATION_HEADER, &id);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(request).map_err(|e| EstimatorError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(EstimatorError::Transport(format!("HTTP {}", status.as_u16())));
        }
        if let Some(echo) = response.headers().get(CORRELATION_HEADER) {
            if echo.to_str().ok() != Some(id.as_str()) {
                return Err(EstimatorError::Transport(format!("response correlation id {echo:?} does not match {id}")));
            }
        }
        let body: ChatResponse =
            response.body_mut().read_json().map_err(|e| EstimatorError::Transport(format!("bad response body: {e}")))?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| EstimatorError::Transport("response has no choices".into()))
    }
}

/// Replies from a fixed script, in order. Running past the end is a
/// transport error, so a test sees exactly how many calls were made.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<Result<String, String>>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(|r| Ok(r.into())).collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Queues a transport failure.
    pub fn push_failure(&self, message: impl Into<String>) {
        self.replies.lock().expect("script lock").push_back(Err(message.into()));
    }

    pub fn push_reply(&self, reply: impl Into<String>) {
        self.replies.lock().expect("script lock").push_back(Ok(reply.into()));
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().expect("script lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("script lock").len()
    }
}

impl ChatTransport for ScriptedTransport {
    fn send(&self, request: &ChatRequest, _correlation_id: u64) -> Result<String, EstimatorError> {
        self.requests.lock().expect("script lock").push(request.clone());
        match self.replies.lock().expect("script lock").pop_front() {
            Some(Ok(reply)) => Ok(reply),
            Some(Err(message)) => Err(EstimatorError::Transport(message)),
            None => Err(EstimatorError::Transport("script exhausted".into())),
        }
    }
}

/// Computes each reply from the request; handy for fakes that must answer
/// whatever the estimator happens to ask.
pub struct FnTransport<F>(pub F);

impl<F> ChatTransport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<String, EstimatorError> + Send + Sync,
{
    fn send(&self, request: &ChatRequest, _correlation_id: u64) -> Result<String, EstimatorError> {
        (self.0)(request)
    }
}

/// Counting semaphore.
struct Gate {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.available.lock().expect("gate lock");
        while *n == 0 {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("gate lock") += 1;
        self.0.freed.notify_one();
    }
}

pub struct LlmClient {
    config: LlmConfig,
    transport: Box<dyn ChatTransport>,
    gate: Gate,
    next_slot: Mutex<Option<Instant>>,
    next_id: AtomicU64,
    calls: AtomicU64,
}

impl LlmClient {
    pub fn new(config: LlmConfig, transport: Box<dyn ChatTransport>) -> Result<Self, EstimatorError> {
        config.validate()?;
        let permits = config.max_concurrent;
        Ok(Self {
            config,
            transport,
            gate: Gate { available: Mutex::new(permits), freed: Condvar::new() },
            next_slot: Mutex::new(None),
            next_id: AtomicU64::new(1),
            calls: AtomicU64::new(0),
        })
    }

    /// Client over HTTP, configured from `config`.
    pub fn http(config: LlmConfig) -> Result<Self, EstimatorError> {
        let transport = HttpTransport::from_config(&config)?;
        Self::new(config, Box::new(transport))
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Requests sent so far, retries included.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn wait_for_slot(&self) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.config.min_interval_ms);
        let wait = {
            let mut next = self.next_slot.lock().expect("rate lock");
            let now = Instant::now();
            let start = next.map_or(now, |t| t.max(now));
            *next = Some(start + interval);
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn send_once(&self, messages: &[ChatMessage]) -> Result<String, EstimatorError> {
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: messages.to_vec(),
            temperature: self.config.temperature,
        };
        let _permit = self.gate.acquire();
        self.wait_for_slot();
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.transport.send(&request, id)
    }

    /// Sends `messages` and parses the reply, retrying up to `max_retries`
    /// times on transport or parse failures. The last error is returned.
    pub fn complete_with<T>(
        &self,
        messages: &[ChatMessage],
        mut parse: impl FnMut(&str) -> Result<T, EstimatorError>,
    ) -> Result<T, EstimatorError> {
        let mut attempt = 0;
        loop {
            let result = self.send_once(messages).and_then(|reply| parse(&reply));
            match result {
                Ok(value) => return Ok(value),
                Err(e) if attempt >= self.config.max_retries || !retryable(&e) => return Err(e),
                Err(_) => {
                    attempt += 1;
                    if self.config.retry_backoff_ms > 0 {
                        std::thread::sleep(Duration::from_millis(self.config.retry_backoff_ms * attempt as u64));
                    }
                }
            }
        }
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, EstimatorError> {
        self.complete_with(messages, |reply| Ok(reply.to_string()))
    }
}

fn retryable(error: &EstimatorError) -> bool {
    !matches!(error, EstimatorError::MissingApiKey(_) | EstimatorError::Template { .. } | EstimatorError::Config(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    fn config() -> LlmConfig {
        LlmConfig { retry_backoff_ms: 0, ..LlmConfig::default() }
    }

    #[test]
    fn scripted_replies_in_order() {
        let client = LlmClient::new(config(), Box::new(ScriptedTransport::new(["a", "b"]))).unwrap();
        assert_eq!(client.complete(&[ChatMessage::user("x")]).unwrap(), "a");
        assert_eq!(client.complete(&[ChatMessage::user("x")]).unwrap(), "b");
        assert!(matches!(client.complete(&[ChatMessage::user("x")]), Err(EstimatorError::Transport(_))));
    }

    #[test]
    fn parse_failures_retry_once_then_surface() {
        let client = LlmClient::new(config(), Box::new(ScriptedTransport::new(["bad", "bad", "good"]))).unwrap();
        let parse = |s: &str| if s == "good" { Ok(()) } else { Err(EstimatorError::ParseFailure(s.into())) };
        assert!(matches!(client.complete_with(&[], parse), Err(EstimatorError::ParseFailure(_))));
        assert_eq!(client.calls(), 2);
        assert!(client.complete_with(&[], parse).is_ok());
    }

    #[test]
    fn transport_failures_are_retried() {
        let transport = ScriptedTransport::default();
        transport.push_failure("connection reset");
        transport.push_reply("ok");
        let client = LlmClient::new(config(), Box::new(transport)).unwrap();
        assert_eq!(client.complete(&[]).unwrap(), "ok");
    }

    #[test]
    fn requests_carry_model_and_temperature() {
        let transport = Arc::new(ScriptedTransport::new(["hi"]));
        struct Shared(Arc<ScriptedTransport>);
        impl ChatTransport for Shared {
            fn send(&self, r: &ChatRequest, id: u64) -> Result<String, EstimatorError> {
                self.0.send(r, id)
            }
        }
        let cfg = LlmConfig { model: "m-test".into(), ..config() };
        let client = LlmClient::new(cfg, Box::new(Shared(transport.clone()))).unwrap();
        client.complete(&[ChatMessage::user("hello")]).unwrap();
        let sent = transport.requests();
        assert_eq!(sent[0].model, "m-test");
        assert_eq!(sent[0].temperature, 0.0);
        assert_eq!(sent[0].messages[0].content, "hello");
    }

    #[test]
    fn concurrency_cap_is_respected() {
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (f, p) = (in_flight.clone(), peak.clone());
        let transport = FnTransport(move |_: &ChatRequest| {
            let now = f.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            f.fetch_sub(1, Ordering::SeqCst);
            Ok("x".to_string())
        });
        let client = Arc::new(LlmClient::new(LlmConfig { max_concurrent: 2, ..config() }, Box::new(transport)).unwrap());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let c = client.clone();
                std::thread::spawn(move || c.complete(&[]).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(client.calls(), 8);
    }

    #[test]
    fn rate_limit_spaces_requests() {
        let cfg = LlmConfig { min_interval_ms: 30, ..config() };
        let client = LlmClient::new(cfg, Box::new(FnTransport(|_: &ChatRequest| Ok(String::new())))).unwrap();
        let start = Instant::now();
        for _ in 0..3 {
            client.complete(&[]).unwrap();
        }
        assert!(start.elapsed() >= Duration::from_millis(60));
    }
}
