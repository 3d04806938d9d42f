//! Recorded LLM exchanges, keyed by prompt digest, for caching and replay.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use groupscope_core::digest::sha256_hex;
use groupscope_core::extract::{LlmRequest, LlmTransport, TransportError};
use serde::{Deserialize, Serialize};

use crate::fsio::{self, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub sentence_id: String,
    pub prompt: String,
    pub prompt_digest: String,
    pub raw_response: String,
    #[serde(default = "one")]
    pub attempts: u32,
    pub timestamp: String,
}

fn one() -> u32 {
    1
}

/// Digest over everything that influences the answer.
pub fn request_digest(req: &LlmRequest) -> String {
    sha256_hex(serde_json::to_string(req).expect("serializable").as_bytes())
}

/// Transcript file plus an in-memory index. Later records for the same
/// digest win.
pub struct TranscriptLog {
    path: PathBuf,
    index: Mutex<BTreeMap<String, (String, u32)>>,
    write_lock: Mutex<()>,
}

impl TranscriptLog {
    pub fn open(path: &Path) -> Result<Self, IoError> {
        let records: Vec<TranscriptRecord> = if path.exists() {
            fsio::read_jsonl(path)?
        } else {
            Vec::new()
        };
        let index = records
            .into_iter()
            .map(|r| (r.prompt_digest, (r.raw_response, r.attempts)))
            .collect();
        Ok(TranscriptLog {
            path: path.to_path_buf(),
            index: Mutex::new(index),
            write_lock: Mutex::new(()),
        })
    }

    pub fn len(&self) -> usize {
        self.index.lock().expect("transcript index").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Recorded answer and the attempts it took.
    pub fn lookup(&self, req: &LlmRequest) -> Option<(String, u32)> {
        self.index.lock().expect("transcript index").get(&request_digest(req)).cloned()
    }

    pub fn record(&self, sentence_id: &str, req: &LlmRequest, raw: &str, attempts: u32) -> Result<(), IoError> {
        let digest = request_digest(req);
        let rec = TranscriptRecord {
            sentence_id: sentence_id.into(),
            prompt: req.prompt.clone(),
            prompt_digest: digest.clone(),
            raw_response: raw.into(),
            attempts,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        let _guard = self.write_lock.lock().expect("transcript writer");
        fsio::append_jsonl(&self.path, &rec)?;
        self.index.lock().expect("transcript index").insert(digest, (raw.into(), attempts));
        Ok(())
    }
}

/// Answers from recorded transcripts only.
pub struct ReplayTransport<'a> {
    pub log: &'a TranscriptLog,
}

impl LlmTransport for ReplayTransport<'_> {
    fn complete(&self, request: &LlmRequest) -> Result<String, TransportError> {
        self.log
            .lookup(request)
            .map(|(raw, _)| raw)
            .ok_or_else(|| TransportError::Permanent(format!("no transcript for prompt {}", &request_digest(request)[..12])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(p: &str) -> LlmRequest {
        LlmRequest {
            prompt: p.into(),
            temperature: 0.0,
            max_tokens: 256,
        }
    }

    #[test]
    fn record_then_reopen_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let log = TranscriptLog::open(&path).unwrap();
        log.record("d:0", &req("a"), r#"{"explicit":["x"]}"#, 2).unwrap();
        let reopened = TranscriptLog::open(&path).unwrap();
        assert_eq!(reopened.lookup(&req("a")).unwrap().1, 2);
        let t = ReplayTransport { log: &reopened };
        assert_eq!(t.complete(&req("a")).unwrap(), r#"{"explicit":["x"]}"#);
        assert!(matches!(t.complete(&req("b")), Err(TransportError::Permanent(_))));
    }

    #[test]
    fn decoding_params_are_part_of_the_key() {
        let mut r = req("a");
        let d0 = request_digest(&r);
        r.temperature = 0.7;
        assert_ne!(d0, request_digest(&r));
    }
}
