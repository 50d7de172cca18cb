//! Offline stand-ins for a chat-completions endpoint.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use clarify_core::estimator::llm::{ChatRequest, FnTransport, LlmClient, LlmConfig};
use clarify_core::estimator::EstimatorError;

/// Test configuration: no API key needed, no backoff, never the network.
pub fn offline_config() -> LlmConfig {
    LlmConfig {
        endpoint: "http://127.0.0.1:9/unused".into(),
        require_api_key: false,
        retry_backoff_ms: 0,
        ..LlmConfig::default()
    }
}

fn last_user(request: &ChatRequest) -> &str {
    &request.messages.last().expect("request has messages").content
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(rest.find(end).map_or(rest, |i| &rest[..i]))
}

/// Plays a model that knows the toy task: "Does it purr?" is yes for the
/// cat and no for the dog, the weekday question is a shrug. Questions are
/// proposed separating one first, and confidence reports `confidence` on
/// `guess`.
pub fn toy_model(guess: &'static str, confidence: u32) -> impl Fn(&ChatRequest) -> Result<String, EstimatorError> + Send + Sync {
    move |request| {
        let text = last_user(request);
        if text.contains("Candidates:") {
            let question = between(text, "Question: \"", "\"").unwrap_or_default();
            let names = between(text, "Candidates: ", "\n").unwrap_or_default();
            let lines: Vec<String> = names
                .split(',')
                .map(str::trim)
                .map(|name| {
                    let answer = match (question, name) {
                        ("Does it purr?", "cat") => "yes",
                        ("Does it purr?", _) => "no",
                        _ => "maybe",
                    };
                    format!("{name}: {answer}")
                })
                .collect();
            Ok(lines.join("\n"))
        } else if text.contains("Generate 5 closed questions") {
            Ok("1. Does it purr?\n2. Was it born on a weekday?".into())
        } else if text.contains("confidence") {
            Ok(format!("{{\"guess\": \"{guess}\", \"confidence\": {confidence}}}"))
        } else {
            Err(EstimatorError::Transport(format!("fake model got an unexpected prompt: {text}")))
        }
    }
}

pub fn toy_client(guess: &'static str, confidence: u32) -> LlmClient {
    LlmClient::new(offline_config(), Box::new(FnTransport(toy_model(guess, confidence)))).unwrap()
}

/// One request as seen by [`FakeServer`].
#[derive(Debug, Clone)]
pub struct Received {
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

impl Received {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// What [`FakeServer`] sends back for one request.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub content: String,
    /// Request id to echo instead of the one received.
    pub echo_id: Option<String>,
}

impl Reply {
    pub fn ok(content: impl Into<String>) -> Self {
        Self { status: 200, content: content.into(), echo_id: None }
    }

    pub fn status(status: u16) -> Self {
        Self { status, content: String::new(), echo_id: None }
    }
}

/// A chat-completions endpoint on the loopback interface. Each request is
/// answered by `reply`, given the request's index and JSON body; the
/// request id header is echoed back.
pub struct FakeServer {
    pub url: String,
    pub received: Arc<Mutex<Vec<Received>>>,
}

impl FakeServer {
    pub fn start<F>(reply: F) -> Self
    where
        F: Fn(usize, &serde_json::Value) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let received = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&received);
        let reply = Arc::new(reply);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let log = Arc::clone(&log);
                let reply = Arc::clone(&reply);
                thread::spawn(move || serve(stream, &log, &*reply));
            }
        });
        Self { url, received }
    }

    pub fn requests(&self) -> Vec<Received> {
        self.received.lock().unwrap().clone()
    }
}

fn serve<F>(stream: TcpStream, log: &Mutex<Vec<Received>>, reply: &F)
where
    F: Fn(usize, &serde_json::Value) -> Reply,
{
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let mut headers = Vec::new();
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let len: usize = headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
            .and_then(|(_, v)| v.parse().ok())
            .unwrap_or(0);
        let mut body = vec![0u8; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let body: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
        let received = Received { headers, body };
        let id = received.header("x-request-id").unwrap_or_default().to_string();
        let index = {
            let mut log = log.lock().unwrap();
            log.push(received.clone());
            log.len() - 1
        };
        let Reply { status, content, echo_id } = reply(index, &received.body);
        let id = echo_id.unwrap_or(id);
        let payload = serde_json::json!({
            "id": "fake",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        })
        .to_string();
        let response = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nx-request-id: {id}\r\n\r\n{payload}",
            payload.len()
        );
        if writer.write_all(response.as_bytes()).is_err() {
            return;
        }
    }
}
