use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    /// Serve stored responses, call the endpoint on a miss and store the result.
    Record,
    /// Serve stored responses only; never touch the network.
    Replay,
    /// Always call the endpoint; nothing is stored.
    Passthrough,
}

impl FromStr for CassetteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            "live" | "passthrough" => Ok(Self::Passthrough),
            other => Err(format!(
                "unknown mode '{other}' (expected record, replay or live)"
            )),
        }
    }
}

/// One line of a cassette file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response: String,
}

/// Request-fingerprint to response store backed by a JSON-lines file.
pub struct Cassette {
    mode: CassetteMode,
    entries: Mutex<BTreeMap<String, String>>,
    sink: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl Cassette {
    pub fn passthrough() -> Self {
        Self {
            mode: CassetteMode::Passthrough,
            entries: Mutex::new(BTreeMap::new()),
            sink: Mutex::new(None),
            path: None,
        }
    }

    /// In-memory cassette, mainly for tests.
    pub fn in_memory(mode: CassetteMode, entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        Self {
            mode,
            entries: Mutex::new(
                entries
                    .into_iter()
                    .map(|e| (e.fingerprint, e.response))
                    .collect(),
            ),
            sink: Mutex::new(None),
            path: None,
        }
    }

    /// Loads `path` (missing is fine in record mode) and, when recording,
    /// opens it for appending.
    pub fn open(path: impl AsRef<Path>, mode: CassetteMode) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let entries = if path.exists() {
            load_entries(&path)?
        } else if mode == CassetteMode::Replay {
            return Err(LlmError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("cassette {} does not exist", path.display()),
            )));
        } else {
            Vec::new()
        };
        let sink = if mode == CassetteMode::Record {
            Some(OpenOptions::new().create(true).append(true).open(&path)?)
        } else {
            None
        };
        Ok(Self {
            mode,
            entries: Mutex::new(
                entries
                    .into_iter()
                    .map(|e| (e.fingerprint, e.response))
                    .collect(),
            ),
            sink: Mutex::new(sink),
            path: Some(path),
        })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, fingerprint: &str) -> Option<String> {
        if self.mode == CassetteMode::Passthrough {
            return None;
        }
        self.entries
            .lock()
            .expect("cassette lock")
            .get(fingerprint)
            .cloned()
    }

    pub fn store(&self, request: &ChatRequest, response: &str) -> Result<(), LlmError> {
        if self.mode != CassetteMode::Record {
            return Ok(());
        }
        let entry = CassetteEntry {
            fingerprint: request.fingerprint(),
            request: request.clone(),
            response: response.to_string(),
        };
        let mut entries = self.entries.lock().expect("cassette lock");
        if entries.contains_key(&entry.fingerprint) {
            return Ok(());
        }
        if let Some(file) = self.sink.lock().expect("cassette lock").as_mut() {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        entries.insert(entry.fingerprint, entry.response);
        Ok(())
    }
}

pub fn load_entries(path: &Path) -> Result<Vec<CassetteEntry>, LlmError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
            LlmError::MalformedResponse(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}
