//! Backend construction from configuration.

use std::time::Duration;

use groupscope_core::embedding::{EmbedError, EmbeddingBackend, HashEmbedder};
use groupscope_core::extract::{LlmTransport, RuleBasedTransport};

use crate::config::{Config, EmbeddingBackendKind, LlmTransportKind};
use crate::http::{HttpEmbedder, HttpLlm};
use crate::vectors::{self, VectorFileError};

pub type SharedEmbedder = Box<dyn EmbeddingBackend + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    VectorFile(#[from] VectorFileError),
}

pub fn embedder(cfg: &Config) -> Result<SharedEmbedder, BackendError> {
    let e = &cfg.pipeline.embedding;
    Ok(match e.backend {
        EmbeddingBackendKind::Test => Box::new(HashEmbedder::new(e.dimension, e.seed)?),
        EmbeddingBackendKind::File => {
            let path = cfg.resolve(e.path.as_deref().expect("validated"));
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Box::new(vectors::load_store(&path, &format!("file:{name}"))?)
        }
        EmbeddingBackendKind::Http => Box::new(HttpEmbedder::new(
            e.url.clone().expect("validated"),
            e.batch_size,
            e.max_in_flight,
            Duration::from_secs(e.timeout_secs),
        )),
    })
}

/// The live transport for `rule` and `http`; `None` for `replay`, which
/// answers from transcripts only.
pub fn transport(cfg: &Config) -> Option<Box<dyn LlmTransport + Send + Sync>> {
    let l = &cfg.pipeline.llm;
    match l.transport {
        LlmTransportKind::Rule => Some(Box::new(RuleBasedTransport)),
        LlmTransportKind::Http => Some(Box::new(HttpLlm::new(
            l.url.clone().expect("validated"),
            Duration::from_secs(l.timeout_secs),
        ))),
        LlmTransportKind::Replay => None,
    }
}
