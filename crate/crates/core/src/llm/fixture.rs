use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatResponse, Transport, TransportError};

/// Stable hash over (model, messages, temperature). The canonical form is
/// compact JSON with sorted keys, so equal requests hash equally everywhere.
pub fn request_hash(request: &ChatRequest) -> String {
    let canonical = json!({
        "messages": request.messages,
        "model": request.model,
        "temperature": request.temperature,
    });
    let bytes = serde_json::to_vec(&canonical).expect("request serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// One recorded exchange. `request` is informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub request_hash: String,
    pub response: ChatResponse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<Value>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    One(Fixture),
    Many(Vec<Fixture>),
}

/// Replays recorded responses keyed by request hash.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    fixtures: BTreeMap<String, ChatResponse>,
}

impl FixtureTransport {
    pub fn new(fixtures: impl IntoIterator<Item = Fixture>) -> Self {
        FixtureTransport {
            fixtures: fixtures
                .into_iter()
                .map(|f| (f.request_hash, f.response))
                .collect(),
        }
    }

    /// Loads every `*.json` file in `dir`. Each file holds one fixture
    /// object or an array of them.
    pub fn load_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut all = Vec::new();
        for p in paths {
            let text = fs::read_to_string(&p)?;
            let parsed: FixtureFile = serde_json::from_str(&text).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}: {e}", p.display()),
                )
            })?;
            match parsed {
                FixtureFile::One(f) => all.push(f),
                FixtureFile::Many(v) => all.extend(v),
            }
        }
        Ok(FixtureTransport::new(all))
    }

    pub fn insert(&mut self, request: &ChatRequest, response: ChatResponse) {
        self.fixtures.insert(request_hash(request), response);
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl Transport for FixtureTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let hash = request_hash(request);
        self.fixtures.get(&hash).cloned().ok_or_else(|| {
            TransportError::Malformed(format!(
                "no fixture for request {hash} ({} call for `{}`)",
                request.context.agent, request.context.scope
            ))
        })
    }
}

/// Forwards to another transport and writes each successful exchange to
/// `<dir>/<hash>.json`, producing a directory `FixtureTransport` can replay.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    dir: PathBuf,
    lock: Mutex<()>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(RecordingTransport {
            inner,
            dir,
            lock: Mutex::new(()),
        })
    }
}

impl Transport for RecordingTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let response = self.inner.send(request)?;
        let fixture = Fixture {
            request_hash: request_hash(request),
            response: response.clone(),
            request: Some(json!({ "model": request.model, "messages": request.messages })),
        };
        let _guard = self.lock.lock().unwrap();
        let path = self.dir.join(format!("{}.json", fixture.request_hash));
        let text = serde_json::to_string_pretty(&fixture).expect("fixture serializes");
        if let Err(e) = fs::write(&path, text) {
            log::warn!("could not record fixture {}: {e}", path.display());
        }
        Ok(response)
    }
}
