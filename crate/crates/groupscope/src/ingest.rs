//! Corpus, vote-history and gold-label readers.

use std::path::Path;

use groupscope_core::corpus::{assemble_corpus, Corpus, CorpusError, Manifesto, RawManifesto, Rejection};
use groupscope_core::econometrics::VoteRecord;
use groupscope_core::eval::GoldLabel;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fsio::{self, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
}

/// Reads a corpus file. Rows that fail validation end up in the rejection
/// report; a duplicate `doc_id` is fatal.
pub fn ingest(path: &Path, format: CorpusFormat) -> Result<(Corpus, Vec<Rejection>), IngestError> {
    let text = fsio::read_to_string(path)?;
    match format {
        CorpusFormat::Jsonl => ingest_jsonl(&text),
        CorpusFormat::Csv => ingest_csv(path, &text),
    }
}

pub fn ingest_jsonl(text: &str) -> Result<(Corpus, Vec<Rejection>), IngestError> {
    let mut rows = Vec::new();
    let mut rejections = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawManifesto>(line) {
            Ok(raw) => rows.push((i + 1, raw)),
            Err(e) => rejections.push(Rejection {
                line_no: i + 1,
                reason: format!("malformed JSON: {e}"),
            }),
        }
    }
    let (corpus, mut invalid) = assemble_corpus(rows)?;
    rejections.append(&mut invalid);
    rejections.sort_by_key(|r| r.line_no);
    Ok((corpus, rejections))
}

fn ingest_csv(path: &Path, text: &str) -> Result<(Corpus, Vec<Rejection>), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    let mut rows = Vec::new();
    let mut rejections = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line_no = e.position().map(|p| p.line() as usize).unwrap_or(0);
                rejections.push(Rejection {
                    line_no,
                    reason: format!("malformed CSV row: {e}"),
                });
                continue;
            }
        };
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != headers.len() {
            rejections.push(Rejection {
                line_no,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
            continue;
        }
        let obj: serde_json::Map<String, Value> = headers
            .iter()
            .zip(record.iter())
            .filter(|(_, v)| !v.is_empty())
            .map(|(h, v)| (h.to_string(), Value::String(v.to_string())))
            .collect();
        match serde_json::from_value::<RawManifesto>(Value::Object(obj)) {
            Ok(raw) => rows.push((line_no, raw)),
            Err(e) => rejections.push(Rejection {
                line_no,
                reason: e.to_string(),
            }),
        }
    }
    let (corpus, mut invalid) = assemble_corpus(rows)?;
    rejections.append(&mut invalid);
    rejections.sort_by_key(|r| r.line_no);
    Ok((corpus, rejections))
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> Vec<u8> {
    fsio::to_jsonl(&corpus.manifestos)
}

/// Reads the normalized corpus written by the ingest stage.
pub fn read_corpus_jsonl(path: &Path) -> Result<Corpus, IoError> {
    let mut manifestos: Vec<Manifesto> = fsio::read_jsonl(path)?;
    manifestos.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(Corpus { manifestos })
}

/// CSV with columns `party_id,country,election_date,vote_share_pct`.
pub fn read_vote_history(path: &Path) -> Result<Vec<VoteRecord>, IngestError> {
    let text = fsio::read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize::<VoteRecord>() {
        let mut r = row.map_err(|e| IngestError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        r.country = r.country.to_ascii_lowercase();
        out.push(r);
    }
    Ok(out)
}

pub fn read_gold(path: &Path) -> Result<Vec<GoldLabel>, IoError> {
    fsio::read_jsonl(path)
}
