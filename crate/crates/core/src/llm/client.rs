use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::transport::{HttpRequest, HttpTransport, Transport, TransportError};
use super::{Cassette, ChatRequest, LlmError, API_KEY_ENV};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub timeout: Duration,
    /// Delay before the second attempt; doubles each retry.
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            timeout: Duration::from_secs(60),
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    fn delay(&self, attempt: u32, hint: Option<Duration>) -> Duration {
        let backoff = self
            .base_delay
            .saturating_mul(1u32 << (attempt - 1).min(16));
        hint.unwrap_or(backoff).min(self.max_delay)
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

/// OpenAI-compatible chat-completion client. Cassette hits are served
/// without touching the transport; in replay mode a miss is an error.
pub struct LlmClient {
    url: String,
    api_key: Option<String>,
    transport: Box<dyn Transport>,
    cassette: Cassette,
    retry: RetryPolicy,
    inflight: Semaphore,
}

impl LlmClient {
    pub fn new(endpoint: &str, transport: Box<dyn Transport>, cassette: Cassette) -> Self {
        Self {
            url: completions_url(endpoint),
            api_key: None,
            transport,
            cassette,
            retry: RetryPolicy::default(),
            inflight: Semaphore::new(4),
        }
    }

    /// HTTP client with the API key taken from the environment.
    pub fn http(endpoint: &str, cassette: Cassette) -> Result<Self, LlmError> {
        let transport = HttpTransport::new().map_err(|e| LlmError::Transport(e.to_string()))?;
        let key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok()
            .filter(|k| !k.is_empty());
        Ok(Self::new(endpoint, Box::new(transport), cassette).with_api_key(key))
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Upper bound on concurrent in-flight requests.
    pub fn with_max_inflight(mut self, n: usize) -> Self {
        self.inflight = Semaphore::new(n);
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn cassette(&self) -> &Cassette {
        &self.cassette
    }

    /// Returns the assistant message text for `request`.
    pub fn chat_complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let fingerprint = request.fingerprint();
        if let Some(hit) = self.cassette.lookup(&fingerprint) {
            return Ok(hit);
        }
        if self.cassette.mode() == super::CassetteMode::Replay {
            return Err(LlmError::CassetteMiss(fingerprint));
        }
        let text = {
            let _permit = self.inflight.acquire();
            self.call_with_retries(request)?
        };
        self.cassette.store(request, &text)?;
        Ok(text)
    }

    fn call_with_retries(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
        .to_string();
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            headers.push(("authorization".to_string(), format!("Bearer {key}")));
        }
        let http = HttpRequest {
            url: self.url.clone(),
            headers,
            body,
            timeout: self.retry.timeout,
        };
        let attempts = self.retry.max_attempts.max(1);
        for attempt in 1..=attempts {
            let last = attempt == attempts;
            match self.transport.send(&http) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return extract_content(&resp.body)
                }
                Ok(resp) if retryable(resp.status) && !last => {
                    std::thread::sleep(self.retry.delay(attempt, resp.retry_after));
                }
                Ok(resp) => {
                    return Err(LlmError::HttpStatus {
                        code: resp.status,
                        body: resp.body.chars().take(500).collect(),
                    })
                }
                Err(TransportError::Timeout) if last => return Err(LlmError::Timeout { attempts }),
                Err(e) if last => return Err(LlmError::Transport(e.to_string())),
                Err(_) => std::thread::sleep(self.retry.delay(attempt, None)),
            }
        }
        unreachable!("the final attempt always returns")
    }
}

fn retryable(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

fn completions_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim_end_matches('/');
    if trimmed.ends_with("/chat/completions") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/chat/completions")
    }
}

fn extract_content(body: &str) -> Result<String, LlmError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CassetteEntry, CassetteMode, HttpResponse, NoNetwork};
    use crate::oracle::Message;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Scripted {
        replies: Mutex<Vec<Result<HttpResponse, TransportError>>>,
        calls: Arc<AtomicUsize>,
        seen: Arc<Mutex<Vec<HttpRequest>>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<HttpResponse, TransportError>>) -> Self {
            replies.reverse();
            Self {
                replies: Mutex::new(replies),
                calls: Arc::new(AtomicUsize::new(0)),
                seen: Arc::new(Mutex::new(Vec::new())),
            }
        }
    }

    impl Transport for Scripted {
        fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.seen.lock().unwrap().push(request.clone());
            self.replies.lock().unwrap().pop().expect("unexpected call")
        }
    }

    fn ok(content: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
                .to_string(),
            retry_after: None,
        })
    }

    fn status(code: u16) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: code,
            body: "{}".into(),
            retry_after: None,
        })
    }

    fn request() -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![Message::user("hi")],
            temperature: 0.7,
            max_tokens: 8,
        }
    }

    fn client(t: Scripted) -> LlmClient {
        LlmClient::new("http://x/v1", Box::new(t), Cassette::passthrough())
            .with_retry(RetryPolicy::no_delay())
    }

    #[test]
    fn retries_transient_failures() {
        let t = Scripted::new(vec![status(429), Err(TransportError::Timeout), ok("fine")]);
        let calls = t.calls.clone();
        assert_eq!(client(t).chat_complete(&request()).unwrap(), "fine");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let t = Scripted::new(vec![status(503), status(503), status(503)]);
        assert!(matches!(
            client(t).chat_complete(&request()),
            Err(LlmError::HttpStatus { code: 503, .. })
        ));
        let t = Scripted::new(vec![Err(TransportError::Timeout); 3]);
        assert!(matches!(
            client(t).chat_complete(&request()),
            Err(LlmError::Timeout { attempts: 3 })
        ));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Scripted::new(vec![status(400)]);
        let calls = t.calls.clone();
        assert!(matches!(
            client(t).chat_complete(&request()),
            Err(LlmError::HttpStatus { code: 400, .. })
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn malformed_body_is_reported() {
        let t = Scripted::new(vec![Ok(HttpResponse {
            status: 200,
            body: r#"{"choices": []}"#.into(),
            retry_after: None,
        })]);
        assert!(matches!(
            client(t).chat_complete(&request()),
            Err(LlmError::MalformedResponse(_))
        ));
    }

    #[test]
    fn wire_format_and_auth_header() {
        let t = Scripted::new(vec![ok("x")]);
        let seen = t.seen.clone();
        let c = client(t).with_api_key(Some("k".into()));
        assert_eq!(c.url(), "http://x/v1/chat/completions");
        c.chat_complete(&request()).unwrap();
        let sent = &seen.lock().unwrap()[0];
        assert!(sent
            .headers
            .contains(&("authorization".into(), "Bearer k".into())));
        let body: Value = serde_json::from_str(&sent.body).unwrap();
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["max_tokens"], 8);
    }

    #[test]
    fn replay_serves_hits_and_rejects_misses() {
        let entry = CassetteEntry {
            fingerprint: request().fingerprint(),
            request: request(),
            response: "stored".into(),
        };
        let c = LlmClient::new(
            "http://x",
            Box::new(NoNetwork),
            Cassette::in_memory(CassetteMode::Replay, [entry]),
        );
        assert_eq!(c.chat_complete(&request()).unwrap(), "stored");
        let mut other = request();
        other.temperature = 0.1;
        assert!(matches!(
            c.chat_complete(&other),
            Err(LlmError::CassetteMiss(_))
        ));
    }

    #[test]
    fn record_mode_calls_once_per_fingerprint() {
        let t = Scripted::new(vec![ok("first")]);
        let calls = t.calls.clone();
        let c = LlmClient::new(
            "http://x",
            Box::new(t),
            Cassette::in_memory(CassetteMode::Record, []),
        )
        .with_retry(RetryPolicy::no_delay());
        assert_eq!(c.chat_complete(&request()).unwrap(), "first");
        assert_eq!(c.chat_complete(&request()).unwrap(), "first");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn url_normalization() {
        assert_eq!(
            completions_url("http://a/v1/"),
            "http://a/v1/chat/completions"
        );
        assert_eq!(
            completions_url("http://a/v1/chat/completions"),
            "http://a/v1/chat/completions"
        );
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let r = RetryPolicy::default();
        assert_eq!(r.delay(1, None), Duration::from_millis(500));
        assert_eq!(r.delay(2, None), Duration::from_millis(1000));
        assert_eq!(r.delay(10, None), Duration::from_secs(8));
        assert_eq!(
            r.delay(1, Some(Duration::from_secs(2))),
            Duration::from_secs(2)
        );
    }
}
