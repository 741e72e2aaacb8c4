use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use turnbench::llm::{
    Cassette, CassetteMode, ChatRequest, HttpTransport, LlmClient, LlmError, RetryPolicy,
};
use turnbench::oracle::Message;

/// Serves the given (status, body) pairs in order, one per connection, and
/// records each request body.
fn stub(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0; length];
            reader.read_exact(&mut req).unwrap();
            log.lock().unwrap().push(String::from_utf8(req).unwrap());
            let mut stream = reader.into_inner();
            let extra = if status == 429 {
                "Retry-After: 0\r\n"
            } else {
                ""
            };
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\n{extra}content-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn request() -> ChatRequest {
    ChatRequest {
        model: "m".into(),
        messages: vec![Message::user("hello")],
        temperature: 0.0,
        max_tokens: 16,
    }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        timeout: Duration::from_secs(5),
        ..RetryPolicy::no_delay()
    }
}

const OK: &str =
    r#"{"choices":[{"message":{"role":"assistant","content":"```python\ndone()\n```"}}]}"#;

#[test]
fn retries_rate_limit_then_records_and_replays() {
    let (url, seen) = stub(vec![(429, "{}".into()), (200, OK.into())]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cassette.jsonl");

    let client = LlmClient::new(
        &url,
        Box::new(HttpTransport::new().unwrap()),
        Cassette::open(&path, CassetteMode::Record).unwrap(),
    )
    .with_retry(fast_retry());
    let reply = client.chat_complete(&request()).unwrap();
    assert_eq!(reply, "```python\ndone()\n```");
    assert_eq!(seen.lock().unwrap().len(), 2);
    let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[1]).unwrap();
    assert_eq!(body["model"], "m");

    // The stub has no responses left; replay must answer from disk.
    let replay = LlmClient::new(
        &url,
        Box::new(HttpTransport::new().unwrap()),
        Cassette::open(&path, CassetteMode::Replay).unwrap(),
    );
    assert_eq!(replay.chat_complete(&request()).unwrap(), reply);
    let other = ChatRequest {
        max_tokens: 17,
        ..request()
    };
    assert!(matches!(
        replay.chat_complete(&other),
        Err(LlmError::CassetteMiss(_))
    ));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = stub(vec![(400, r#"{"error":"bad"}"#.into()), (200, OK.into())]);
    let client = LlmClient::new(
        &url,
        Box::new(HttpTransport::new().unwrap()),
        Cassette::passthrough(),
    )
    .with_retry(fast_retry());
    match client.chat_complete(&request()) {
        Err(LlmError::HttpStatus { code, .. }) => assert_eq!(code, 400),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}
