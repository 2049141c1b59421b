//! Recorded transcripts: a JSON-lines file of `{request_hash, response_text}`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::chat::{ChatRequest, ChatTransport, TransportError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub request_hash: String,
    pub response_text: String,
}

/// Serves recorded replies by request hash. Repeated requests with the same
/// hash receive the recorded replies in file order; the last one repeats.
pub struct ReplayTransport {
    responses: HashMap<String, Vec<String>>,
    cursor: Mutex<HashMap<String, usize>>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        let mut responses: HashMap<String, Vec<String>> = HashMap::new();
        for e in entries {
            responses
                .entry(e.request_hash)
                .or_default()
                .push(e.response_text);
        }
        Self {
            responses,
            cursor: Mutex::new(HashMap::new()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: {e}", i + 1),
                )
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.responses.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatTransport for ReplayTransport {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let hash = req.hash();
        let replies = self
            .responses
            .get(&hash)
            .ok_or_else(|| TransportError::ReplayMiss(hash.clone()))?;
        let mut cursor = self.cursor.lock().unwrap();
        let pos = cursor.entry(hash).or_insert(0);
        let reply = replies[(*pos).min(replies.len() - 1)].clone();
        *pos += 1;
        Ok(reply)
    }
}

/// Wraps a transport and appends every reply it receives to a transcript file.
pub struct RecordingTransport<T> {
    inner: T,
    sink: Mutex<BufWriter<File>>,
}

impl<T: ChatTransport> RecordingTransport<T> {
    pub fn new(inner: T, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            sink: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let reply = self.inner.complete(req)?;
        let entry = ReplayEntry {
            request_hash: req.hash(),
            response_text: reply.clone(),
        };
        let mut sink = self.sink.lock().unwrap();
        let line = serde_json::to_string(&entry).expect("entry serializes");
        if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
            log::warn!("failed to record transcript entry: {e}");
        }
        Ok(reply)
    }
}
