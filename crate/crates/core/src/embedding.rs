//! Phrase embeddings: the vector type, an in-memory store and the seeded
//! hashing backend used for deterministic tests.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub phrase: String,
    pub vector: Vec<f64>,
    pub backend_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Result for one requested phrase. A missing vector is not an error; the
/// caller decides what to do with it.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Vector(EmbeddingVector),
    Missing(String),
}

impl Embedding {
    pub fn vector(&self) -> Option<&EmbeddingVector> {
        match self {
            Embedding::Vector(v) => Some(v),
            Embedding::Missing(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("phrase {0:?} is empty after normalization")]
    EmptyPhrase(String),
    #[error("dimension mismatch for {phrase:?}: expected {expected}, got {got}")]
    DimensionMismatch {
        phrase: String,
        expected: usize,
        got: usize,
    },
    #[error("vector for {0:?} has non-finite components")]
    NonFinite(String),
    #[error("embedding dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("transport failed for batch of {} phrases: {message}", batch.len())]
    Transport { batch: Vec<String>, message: String },
}

/// A source of phrase vectors. Implementations must preserve input order
/// and return exactly one entry per phrase.
pub trait EmbeddingBackend {
    fn backend_id(&self) -> String;
    fn embed(&self, phrases: &[String]) -> Result<Vec<Embedding>, EmbedError>;
}

fn normalized_nonempty(p: &str) -> Result<String, EmbedError> {
    let n = normalize(p);
    if n.is_empty() {
        Err(EmbedError::EmptyPhrase(String::from(p)))
    } else {
        Ok(n)
    }
}

/// Vectors keyed by normalized phrase, all of one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStore {
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    backend: String,
}

impl EmbeddingStore {
    pub fn new(backend: impl Into<String>) -> Self {
        EmbeddingStore {
            dimension: 0,
            vectors: BTreeMap::new(),
            backend: backend.into(),
        }
    }

    /// Inserts or replaces a vector. The first insert fixes the dimension.
    pub fn insert(&mut self, phrase: &str, vector: Vec<f64>) -> Result<(), EmbedError> {
        let key = normalized_nonempty(phrase)?;
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite(key));
        }
        if self.vectors.is_empty() && self.dimension == 0 {
            if vector.len() < 2 {
                return Err(EmbedError::DimensionTooSmall(vector.len()));
            }
            self.dimension = vector.len();
        } else if vector.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                phrase: key,
                expected: self.dimension,
                got: vector.len(),
            });
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, phrase: &str) -> Option<&[f64]> {
        self.vectors.get(&normalize(phrase)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

impl EmbeddingBackend for EmbeddingStore {
    fn backend_id(&self) -> String {
        self.backend.clone()
    }

    fn embed(&self, phrases: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        phrases
            .iter()
            .map(|p| {
                let key = normalized_nonempty(p)?;
                Ok(match self.vectors.get(&key) {
                    Some(v) => Embedding::Vector(EmbeddingVector {
                        phrase: key,
                        vector: v.clone(),
                        backend_id: self.backend.clone(),
                    }),
                    None => Embedding::Missing(key),
                })
            })
            .collect()
    }
}

/// Deterministic test backend: hashed character trigrams of the normalized
/// phrase, signed and bucketed into `dimension` slots, then scaled to unit
/// length. Phrases sharing trigrams get nearby vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, EmbedError> {
        if dimension < 2 {
            return Err(EmbedError::DimensionTooSmall(dimension));
        }
        Ok(HashEmbedder { dimension, seed })
    }

    fn hash(&self, parts: &[&[u8]]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        h.finalize().into()
    }

    pub fn vector(&self, normalized: &str) -> Vec<f64> {
        let padded: Vec<char> = core::iter::once('#')
            .chain(normalized.chars())
            .chain(core::iter::once('#'))
            .collect();
        let mut v = vec![0.0f64; self.dimension];
        for w in padded.windows(3) {
            let tri: String = w.iter().collect();
            let h = self.hash(&[b"tri", tri.as_bytes()]);
            let bucket = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
            let idx = (bucket % self.dimension as u64) as usize;
            v[idx] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        if v.iter().all(|&x| x == 0.0) {
            for (i, x) in v.iter_mut().enumerate() {
                let h = self.hash(&[b"fallback", normalized.as_bytes(), &(i as u64).to_le_bytes()]);
                let u = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
                *x = (u >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        for x in &mut v {
            *x /= norm;
        }
        v
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn backend_id(&self) -> String {
        format!("hash-trigram-d{}-s{}", self.dimension, self.seed)
    }

    fn embed(&self, phrases: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        let id = self.backend_id();
        phrases
            .iter()
            .map(|p| {
                let key = normalized_nonempty(p)?;
                Ok(Embedding::Vector(EmbeddingVector {
                    vector: self.vector(&key),
                    phrase: key,
                    backend_id: id.clone(),
                }))
            })
            .collect()
    }
}
