//! Minimal chat-completion client with retries and record/replay cassettes.

mod cassette;
mod client;
mod transport;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::oracle::Message;

pub use cassette::{Cassette, CassetteEntry, CassetteMode};
pub use client::{LlmClient, RetryPolicy};
pub use transport::{
    HttpRequest, HttpResponse, HttpTransport, NoNetwork, Transport, TransportError,
};

pub const API_KEY_ENV: &str = "TURNBENCH_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("endpoint returned HTTP {code}: {body}")]
    HttpStatus { code: u16, body: String },
    #[error("no cassette entry for request {0}")]
    CassetteMiss(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cassette i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest(
                "messages must not be empty".into(),
            ));
        }
        if self.model.is_empty() {
            return Err(LlmError::InvalidRequest("model must not be empty".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over model, messages and sampling parameters.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(json))
    }
}

pub fn fingerprint(request: &ChatRequest) -> String {
    request.fingerprint()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![Message::system("sys"), Message::user("hello")],
            temperature: 0.7,
            max_tokens: 64,
        }
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = request();
        assert_eq!(a.fingerprint(), request().fingerprint());
        let mut b = request();
        b.temperature = 0.0;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut c = request();
        c.messages[1].content.push('!');
        assert_ne!(a.fingerprint(), c.fingerprint());
        let mut d = request();
        d.model = "n".into();
        assert_ne!(a.fingerprint(), d.fingerprint());
    }

    #[test]
    fn fingerprint_is_frozen() {
        // Cassettes on disk depend on this exact value.
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![Message::user("x")],
            temperature: 0.5,
            max_tokens: 1,
        };
        let expected = hex::encode(Sha256::digest(
            br#"{"model":"m","messages":[{"role":"user","content":"x"}],"temperature":0.5,"max_tokens":1}"#,
        ));
        assert_eq!(req.fingerprint(), expected);
    }
}
