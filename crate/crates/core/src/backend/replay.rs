use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, BackendKind, ChatBackend, ChatReply, ChatRequest};
use crate::jsonl::{read_jsonl, JsonlError};

/// One line of a recording file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub hash: String,
    pub request: ChatRequest,
    pub reply: ChatReply,
}

/// Proxies an inner backend and appends every successful exchange to a sink.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    sink: Mutex<BufWriter<File>>,
}

impl RecordingBackend {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(inner: Arc<dyn ChatBackend>, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            sink: Mutex::new(BufWriter::new(file)),
        })
    }
}

#[async_trait]
impl ChatBackend for RecordingBackend {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        let reply = self.inner.complete(req).await?;
        let hash = req.fingerprint();
        let sink_err = |message: String| BackendError::Sink {
            fingerprint: hash.clone(),
            message,
        };
        let entry = RecordEntry {
            hash: hash.clone(),
            request: req.clone(),
            reply: reply.clone(),
        };
        let line = serde_json::to_string(&entry).map_err(|e| sink_err(e.to_string()))?;
        let mut sink = self.sink.lock().unwrap();
        writeln!(sink, "{line}")
            .and_then(|_| sink.flush())
            .map_err(|e| sink_err(e.to_string()))?;
        Ok(reply)
    }
}

/// Serves replies from a recording, keyed by request fingerprint.
pub struct ReplayBackend {
    entries: HashMap<String, ChatReply>,
    calls: AtomicUsize,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        Ok(Self::from_entries(read_jsonl(path)?))
    }

    /// The first entry recorded for a fingerprint wins.
    pub fn from_entries(entries: impl IntoIterator<Item = RecordEntry>) -> Self {
        let mut map = HashMap::new();
        for e in entries {
            map.entry(e.hash).or_insert(e.reply);
        }
        Self {
            entries: map,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl ChatBackend for ReplayBackend {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fingerprint = req.fingerprint();
        match self.entries.get(&fingerprint) {
            Some(reply) => Ok(ChatReply {
                backend_kind: BackendKind::Replay,
                ..reply.clone()
            }),
            None => Err(BackendError::ScriptMiss { fingerprint }),
        }
    }
}
