//! Text-completion backends: an OpenAI-style HTTP client, a scripted
//! replay backend keyed by prompt digest, a recorder and a concurrency
//! limiter.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("no scripted response for prompt {digest}")]
    UnmappedPrompt { digest: String },
    #[error("server returned {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Empty means the backend's configured model.
    #[serde(default)]
    pub model_id: String,
}

impl CompletionRequest {
    /// Greedy decoding with the default length limit.
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            model_id: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} is negative",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens is 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

impl CompletionResponse {
    pub fn stop(text: impl Into<String>) -> Self {
        CompletionResponse {
            text: text.into(),
            finish_reason: FinishReason::Stop,
        }
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

/// Lowercase hex SHA-256 of the prompt text.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One line of a script file. `prompt` may be given instead of the digest;
/// a digest of `*` marks the fallback sequence used for unmapped prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub responses: Vec<String>,
}

pub const FALLBACK_KEY: &str = "*";

#[derive(Debug, Default)]
struct Cursors {
    next: HashMap<String, usize>,
}

/// Replays responses by prompt digest. Successive calls with the same prompt
/// walk its response list; the last entry repeats once the list runs out.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: HashMap<String, Vec<String>>,
    cursors: Mutex<Cursors>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_prompt(mut self, prompt: &str, responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.insert_digest(prompt_digest(prompt), responses);
        self
    }

    /// Responses served in order to any prompt without its own entry.
    pub fn with_fallback(mut self, responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.insert_digest(FALLBACK_KEY.to_string(), responses);
        self
    }

    pub fn insert_digest(&mut self, digest: String, responses: impl IntoIterator<Item = impl Into<String>>) {
        let list: Vec<String> = responses.into_iter().map(Into::into).collect();
        if !list.is_empty() {
            self.responses.entry(digest).or_default().extend(list);
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Result<Self, BackendError> {
        let mut b = ScriptedBackend::new();
        for (i, e) in entries.into_iter().enumerate() {
            let digest = match (e.prompt_sha256, e.prompt) {
                (Some(d), _) => d.to_ascii_lowercase(),
                (None, Some(p)) => prompt_digest(&p),
                (None, None) => {
                    return Err(BackendError::Script {
                        line: i + 1,
                        message: "entry has neither prompt_sha256 nor prompt".into(),
                    })
                }
            };
            if e.responses.is_empty() {
                return Err(BackendError::Script {
                    line: i + 1,
                    message: "entry has no responses".into(),
                });
            }
            b.insert_digest(digest, e.responses);
        }
        Ok(b)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(line).map_err(|e| BackendError::Script {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    fn next_for(&self, key: &str) -> Option<String> {
        let list = self.responses.get(key)?;
        let mut cursors = self.cursors.lock().unwrap_or_else(|p| p.into_inner());
        let slot = cursors.next.entry(key.to_string()).or_insert(0);
        let i = (*slot).min(list.len() - 1);
        *slot += 1;
        Some(list[i].clone())
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let digest = prompt_digest(&req.prompt);
        self.next_for(&digest)
            .or_else(|| self.next_for(FALLBACK_KEY))
            .map(CompletionResponse::stop)
            .ok_or(BackendError::UnmappedPrompt { digest })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: CompletionRequest,
    pub response: Result<CompletionResponse, String>,
}

/// Wraps a backend and keeps every exchange, in call order.
#[derive(Debug)]
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<Exchange>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Successful exchanges as a replay script, one entry per distinct
    /// prompt in order of first use.
    pub fn to_script(&self) -> Vec<ScriptEntry> {
        let mut order: Vec<String> = Vec::new();
        let mut by_digest: HashMap<String, Vec<String>> = HashMap::new();
        for ex in self.exchanges() {
            if let Ok(resp) = ex.response {
                let d = prompt_digest(&ex.request.prompt);
                if !by_digest.contains_key(&d) {
                    order.push(d.clone());
                }
                by_digest.entry(d).or_default().push(resp.text);
            }
        }
        order
            .into_iter()
            .map(|d| ScriptEntry {
                responses: by_digest.remove(&d).unwrap_or_default(),
                prompt_sha256: Some(d),
                prompt: None,
            })
            .collect()
    }

    pub fn script_jsonl(&self) -> String {
        self.to_script()
            .iter()
            .map(|e| serde_json::to_string(e).expect("script entries serialize") + "\n")
            .collect()
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let result = self.inner.complete(req);
        self.log
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(Exchange {
                request: req.clone(),
                response: result.clone().map_err(|e| e.to_string()),
            });
        result
    }
}

/// Allows at most `limit` requests in flight through the wrapped backend.
#[derive(Debug)]
pub struct Throttled<B> {
    inner: B,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<B: Backend> Throttled<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Throttled {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

impl<B: Backend> Backend for Throttled<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
            while *n >= self.limit {
                n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
            }
            *n += 1;
        }
        let result = self.inner.complete(req);
        *self.in_flight.lock().unwrap_or_else(|p| p.into_inner()) -= 1;
        self.freed.notify_one();
        result
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubled on every further retry.
    pub backoff: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            model: "gpt-3.5-turbo".into(),
            timeout: Duration::from_secs(120),
            max_retries: 4,
            backoff: Duration::from_millis(500),
        }
    }
}

impl HttpConfig {
    /// Reads `CONPARSE_API_KEY`, `CONPARSE_API_BASE` and `CONPARSE_MODEL`.
    pub fn from_env() -> Self {
        let mut c = HttpConfig::default();
        if let Ok(key) = std::env::var("CONPARSE_API_KEY") {
            c.api_key = Some(key);
        }
        if let Ok(base) = std::env::var("CONPARSE_API_BASE") {
            c.base_url = base;
        }
        if let Ok(model) = std::env::var("CONPARSE_MODEL") {
            c.model = model;
        }
        c
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Chat-completions client with retry on 429, 5xx, timeouts and
/// connection failures.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.config.base_url)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }

    pub fn from_env() -> Result<Self, BackendError> {
        Self::new(HttpConfig::from_env())
    }

    fn attempt(&self, req: &CompletionRequest) -> Result<CompletionResponse, (BackendError, bool)> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let model = if req.model_id.is_empty() {
            &self.config.model
        } else {
            &req.model_id
        };
        let body = ChatBody {
            model,
            messages: [ChatMessage {
                role: "user",
                content: &req.prompt,
            }],
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let mut builder = self.client.post(url).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| {
            if e.is_timeout() {
                (BackendError::Timeout, true)
            } else {
                (BackendError::Transport(e.to_string()), e.is_connect())
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                (BackendError::Timeout, true)
            } else {
                (BackendError::Transport(e.to_string()), false)
            }
        })?;
        match status {
            200..=299 => {}
            401 | 403 => return Err((BackendError::AuthFailure(text), false)),
            429 => return Err((BackendError::RateLimited { attempts: 0 }, true)),
            500..=599 => return Err((BackendError::Http { status, body: text }, true)),
            _ => return Err((BackendError::Http { status, body: text }, false)),
        }
        let reply: ChatReply =
            serde_json::from_str(&text).map_err(|e| (BackendError::MalformedReply(e.to_string()), false))?;
        let choice = reply
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| (BackendError::MalformedReply("no choices".into()), false))?;
        let content = choice
            .message
            .content
            .ok_or_else(|| (BackendError::MalformedReply("choice has no content".into()), false))?;
        Ok(CompletionResponse {
            text: content,
            finish_reason: match choice.finish_reason.as_deref() {
                Some("length") => FinishReason::Length,
                _ => FinishReason::Stop,
            },
        })
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let mut delay = self.config.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(req) {
                Ok(r) => return Ok(r),
                Err((err, retry)) => {
                    if !retry || attempts > self.config.max_retries {
                        return Err(match err {
                            BackendError::RateLimited { .. } => BackendError::RateLimited { attempts },
                            other => other,
                        });
                    }
                }
            }
            std::thread::sleep(delay);
            delay = delay.saturating_mul(2);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn scripted_replay() {
        let b = ScriptedBackend::new().with_prompt("P", ["R"]);
        assert_eq!(b.complete(&CompletionRequest::new("P")).unwrap().text, "R");
        assert_eq!(
            b.complete(&CompletionRequest::new("Q")),
            Err(BackendError::UnmappedPrompt {
                digest: prompt_digest("Q")
            })
        );
    }

    #[test]
    fn scripted_sequences() {
        let b = ScriptedBackend::new()
            .with_prompt("P", ["first", "second"])
            .with_fallback(["x", "y"]);
        let next = |p: &str| b.complete(&CompletionRequest::new(p)).unwrap().text;
        assert_eq!(next("P"), "first");
        assert_eq!(next("P"), "second");
        assert_eq!(next("P"), "second");
        assert_eq!(next("other"), "x");
        assert_eq!(next("another"), "y");
    }

    #[test]
    fn script_file() {
        let text = format!(
            "{{\"prompt_sha256\": \"{}\", \"responses\": [\"a\", \"b\"]}}\n\n{{\"prompt\": \"Q\", \"responses\": [\"c\"]}}\n",
            prompt_digest("P").to_uppercase()
        );
        let b = ScriptedBackend::from_jsonl(&text).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.complete(&CompletionRequest::new("Q")).unwrap().text, "c");
        assert!(matches!(
            ScriptedBackend::from_jsonl("{\"responses\": [\"a\"]}"),
            Err(BackendError::Script { line: 1, .. })
        ));
        assert!(matches!(
            ScriptedBackend::from_jsonl("{\"prompt\": \"a\", \"responses\": []}\nnot json"),
            Err(BackendError::Script { line: 2, .. })
        ));
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            prompt_digest("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn invalid_requests() {
        let b = ScriptedBackend::new().with_fallback(["x"]);
        let mut req = CompletionRequest::new("P");
        req.max_tokens = 0;
        assert!(matches!(b.complete(&req), Err(BackendError::InvalidRequest(_))));
        req.max_tokens = 1;
        req.temperature = -0.5;
        assert!(matches!(b.complete(&req), Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn concurrent_callers_each_get_one_entry() {
        let responses: Vec<String> = (0..64).map(|i| i.to_string()).collect();
        let b = Arc::new(ScriptedBackend::new().with_prompt("P", responses.clone()));
        let got: Vec<String> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..64)
                .map(|_| {
                    let b = Arc::clone(&b);
                    s.spawn(move || b.complete(&CompletionRequest::new("P")).unwrap().text)
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut sorted = got;
        sorted.sort_by_key(|s| s.parse::<u32>().unwrap());
        assert_eq!(sorted, responses);
    }

    #[test]
    fn recorder_round_trips_to_a_script() {
        let rec = RecordingBackend::new(
            ScriptedBackend::new()
                .with_prompt("A", ["1", "2"])
                .with_prompt("B", ["3"]),
        );
        for p in ["A", "B", "A", "C"] {
            let _ = rec.complete(&CompletionRequest::new(p));
        }
        assert_eq!(rec.exchanges().len(), 4);
        assert!(rec.exchanges()[3].response.is_err());
        let replay = ScriptedBackend::from_jsonl(&rec.script_jsonl()).unwrap();
        let texts: Vec<String> = ["A", "B", "A"]
            .iter()
            .map(|p| replay.complete(&CompletionRequest::new(*p)).unwrap().text)
            .collect();
        assert_eq!(texts, ["1", "3", "2"]);
    }

    struct Slow {
        now: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Backend for Slow {
        fn complete(&self, _: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
            let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(n, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.now.fetch_sub(1, Ordering::SeqCst);
            Ok(CompletionResponse::stop(""))
        }
    }

    #[test]
    fn throttle_bounds_in_flight_requests() {
        let t = Throttled::new(
            Slow {
                now: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
            },
            3,
        );
        std::thread::scope(|s| {
            for _ in 0..16 {
                s.spawn(|| t.complete(&CompletionRequest::new("x")).unwrap());
            }
        });
        let peak = t.inner.peak.load(Ordering::SeqCst);
        assert!((1..=3).contains(&peak), "peak {peak}");
    }

    /// Serves one canned (status, body) per connection and returns the
    /// request bodies it saw.
    fn serve(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                let mut line = String::new();
                loop {
                    line.clear();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (base, handle)
    }

    fn http(base: String) -> HttpBackend {
        HttpBackend::new(HttpConfig {
            base_url: base,
            api_key: Some("k".into()),
            model: "m".into(),
            timeout: Duration::from_secs(10),
            max_retries: 2,
            backoff: Duration::from_millis(1),
        })
        .unwrap()
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"(S (NN x))"},"finish_reason":"stop"}]}"#;

    #[test]
    fn http_wire_format_and_retry() {
        let (base, server) = serve(vec![(429, "{}".into()), (503, "busy".into()), (200, OK.into())]);
        let resp = http(base).complete(&CompletionRequest::new("parse me")).unwrap();
        assert_eq!(resp, CompletionResponse::stop("(S (NN x))"));
        let bodies = server.join().unwrap();
        assert_eq!(bodies.len(), 3);
        let body: serde_json::Value = serde_json::from_str(&bodies[2]).unwrap();
        assert_eq!(
            body,
            serde_json::json!({
                "model": "m",
                "messages": [{"role": "user", "content": "parse me"}],
                "temperature": 0.0,
                "max_tokens": 2048
            })
        );
    }

    #[test]
    fn http_errors() {
        let (base, server) = serve(vec![(401, "nope".into())]);
        assert_eq!(
            http(base).complete(&CompletionRequest::new("p")),
            Err(BackendError::AuthFailure("nope".into()))
        );
        server.join().unwrap();

        let (base, server) = serve(vec![(429, "{}".into()); 3]);
        assert_eq!(
            http(base).complete(&CompletionRequest::new("p")),
            Err(BackendError::RateLimited { attempts: 3 })
        );
        server.join().unwrap();

        let (base, server) = serve(vec![(200, "{\"choices\": []}".into())]);
        assert!(matches!(
            http(base).complete(&CompletionRequest::new("p")),
            Err(BackendError::MalformedReply(_))
        ));
        server.join().unwrap();
    }
}
