//! Embedding-space filtering: a semantic center with two radial thresholds
//! and an optional one-class SVM, all fitted on whitelist phrase vectors.

mod ocsvm;


pub use ocsvm::{median_gamma, solve_dual, DualSolution, GammaPolicy, Kernel, KernelKind, KernelSpec, OcsvmModel, KKT_TOLERANCE};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::digest::{sha256_hex, vectors_digest};
use crate::embedding::EmbeddingVector;
use crate::extract::CandidateGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    AvgRadius,
    MaxRadius,
    Ocsvm,
}

impl Classifier {
    pub const ALL: [Classifier; 3] = [Classifier::AvgRadius, Classifier::MaxRadius, Classifier::Ocsvm];

    pub fn as_str(self) -> &'static str {
        match self {
            Classifier::AvgRadius => "avg_radius",
            Classifier::MaxRadius => "max_radius",
            Classifier::Ocsvm => "ocsvm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub classifier: Classifier,
    pub accepted: bool,
    /// Distance to the center for radial classifiers, `f(x)` for the SVM.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Euclidean distance between unit-normalized vectors.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EsfError {
    #[error("whitelist needs at least 2 embeddings, got {0}")]
    DegenerateWhitelist(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector cannot be unit-normalized for cosine distance")]
    ZeroVector,
    #[error("{0}")]
    Invalid(String),
    #[error("one-class SVM did not converge after {iterations} iterations (KKT residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("model has no one-class SVM")]
    NoOcsvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcsvmSettings {
    pub nu: f64,
    pub kernel: KernelSpec,
}

impl Default for OcsvmSettings {
    fn default() -> Self {
        OcsvmSettings {
            nu: 0.1,
            kernel: KernelSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsfModel {
    pub metric: Metric,
    pub center: Vec<f64>,
    pub n_whitelist: usize,
    pub radius_avg: f64,
    pub d_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocsvm: Option<OcsvmModel>,
    pub whitelist_digest: String,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(ocsvm::squared_distance(a, b))
}

fn unit(v: &[f64]) -> Result<Vec<f64>, EsfError> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n == 0.0 {
        return Err(EsfError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn check_dims(points: &[&[f64]]) -> Result<usize, EsfError> {
    if points.len() < 2 {
        return Err(EsfError::DegenerateWhitelist(points.len()));
    }
    let d = points[0].len();
    for p in points {
        if p.len() != d {
            return Err(EsfError::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }
    Ok(d)
}

/// Center as the componentwise mean, and the mean and maximum distance of the
/// points to it.
pub fn fit_center(points: &[&[f64]]) -> Result<(Vec<f64>, f64, f64), EsfError> {
    let d = check_dims(points)?;
    let n = points.len() as f64;
    let mut center = alloc::vec![0.0; d];
    for p in points {
        for (c, x) in center.iter_mut().zip(p.iter()) {
            *c += x;
        }
    }
    for c in &mut center {
        *c /= n;
    }
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for p in points {
        let dist = euclid(p, &center);
        sum += dist;
        max = max.max(dist);
    }
    // Summation order can push the mean a hair past the max.
    let avg = (sum / n).min(max);
    Ok((center, avg, max))
}

/// Fits the one-class SVM on raw points.
pub fn fit_ocsvm(
    phrases: &[&str],
    points: &[&[f64]],
    nu: f64,
    kernel: KernelSpec,
) -> Result<OcsvmModel, EsfError> {
    check_dims(points)?;
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(EsfError::Invalid(format!("nu must lie in (0, 1], got {nu}")));
    }
    let kernel = kernel.resolve(points)?;
    let n = points.len();
    let mut k = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(points[i], points[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let sol = solve_dual(&k, n, nu)?;
    let mut support_indices = Vec::new();
    let mut alphas = Vec::new();
    for (i, &a) in sol.alphas.iter().enumerate() {
        if a > 0.0 {
            support_indices.push(i);
            alphas.push(a);
        }
    }
    let digest = vectors_digest(phrases.iter().copied().zip(points.iter().copied()));
    let training_digest = sha256_hex(
        format!(
            "{digest}|{}|{}",
            serde_json::to_string(&kernel).unwrap_or_default(),
            nu
        )
        .as_bytes(),
    );
    Ok(OcsvmModel {
        nu,
        kernel,
        support_phrases: support_indices.iter().map(|&i| String::from(phrases[i])).collect(),
        support_vectors: support_indices.iter().map(|&i| points[i].to_vec()).collect(),
        support_indices,
        alphas,
        rho: sol.rho,
        training_digest,
        iterations: sol.iterations,
    })
}

impl EsfModel {
    /// Fits center, radii and (if `ocsvm` is given) the SVM on the whitelist.
    pub fn fit(
        whitelist: &[EmbeddingVector],
        metric: Metric,
        ocsvm: Option<OcsvmSettings>,
    ) -> Result<EsfModel, EsfError> {
        let prepared: Vec<Vec<f64>> = match metric {
            Metric::Euclidean => whitelist.iter().map(|e| e.vector.clone()).collect(),
            Metric::Cosine => whitelist.iter().map(|e| unit(&e.vector)).collect::<Result<_, _>>()?,
        };
        let points: Vec<&[f64]> = prepared.iter().map(Vec::as_slice).collect();
        let phrases: Vec<&str> = whitelist.iter().map(|e| e.phrase.as_str()).collect();
        let (center, radius_avg, d_max) = fit_center(&points)?;
        let ocsvm = match ocsvm {
            Some(s) => Some(fit_ocsvm(&phrases, &points, s.nu, s.kernel)?),
            None => None,
        };
        let whitelist_digest = vectors_digest(whitelist.iter().map(|e| (e.phrase.as_str(), e.vector.as_slice())));
        Ok(EsfModel {
            metric,
            center,
            n_whitelist: whitelist.len(),
            radius_avg,
            d_max,
            ocsvm,
            whitelist_digest,
        })
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    /// Digest of the serialized model.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }

    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>, EsfError> {
        if x.len() != self.center.len() {
            return Err(EsfError::DimensionMismatch {
                expected: self.center.len(),
                got: x.len(),
            });
        }
        match self.metric {
            Metric::Euclidean => Ok(x.to_vec()),
            Metric::Cosine => unit(x),
        }
    }

    /// Distance of `x` to the center under the model's metric.
    pub fn distance(&self, x: &[f64]) -> Result<f64, EsfError> {
        Ok(euclid(&self.prepare(x)?, &self.center))
    }

    pub fn classify(&self, x: &[f64], mode: Classifier) -> Result<Verdict, EsfError> {
        let p = self.prepare(x)?;
        let (accepted, score) = match mode {
            Classifier::AvgRadius => {
                let d = euclid(&p, &self.center);
                (d <= self.radius_avg, d)
            }
            Classifier::MaxRadius => {
                let d = euclid(&p, &self.center);
                (d <= self.d_max, d)
            }
            Classifier::Ocsvm => {
                let f = self.ocsvm.as_ref().ok_or(EsfError::NoOcsvm)?.decision(&p);
                (f >= 0.0, f)
            }
        };
        Ok(Verdict {
            classifier: mode,
            accepted,
            score,
        })
    }

    /// Verdicts for every classifier the model supports.
    pub fn classify_all(&self, x: &[f64]) -> Result<Vec<Verdict>, EsfError> {
        Classifier::ALL
            .into_iter()
            .filter(|c| *c != Classifier::Ocsvm || self.ocsvm.is_some())
            .map(|c| self.classify(x, c))
            .collect()
    }
}

/// Candidates split by the verdict of one classifier.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Partition {
    pub accepted: Vec<CandidateGroup>,
    pub rejected: Vec<CandidateGroup>,
    /// Candidates without an embedding; no verdict is recorded.
    pub unresolved: Vec<CandidateGroup>,
}

/// Records verdicts of all available classifiers on each candidate and
/// partitions by `mode`. Input order is kept within each bucket.
pub fn filter_candidates(
    candidates: Vec<CandidateGroup>,
    model: &EsfModel,
    mode: Classifier,
) -> Result<Partition, EsfError> {
    if mode == Classifier::Ocsvm && model.ocsvm.is_none() {
        return Err(EsfError::NoOcsvm);
    }
    let mut out = Partition::default();
    for mut c in candidates {
        let Some(emb) = c.embedding.as_ref() else {
            c.verdicts.clear();
            out.unresolved.push(c);
            continue;
        };
        let verdicts = model.classify_all(&emb.vector)?;
        c.verdicts = verdicts.into_iter().map(|v| (v.classifier, v)).collect();
        if c.verdicts[&mode].accepted {
            out.accepted.push(c);
        } else {
            out.rejected.push(c);
        }
    }
    Ok(out)
}
