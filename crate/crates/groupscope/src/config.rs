//! Pipeline configuration (TOML). Relative paths resolve against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use groupscope_core::digest::sha256_hex;
use groupscope_core::esf::{Classifier, GammaPolicy, KernelKind, KernelSpec, Metric, OcsvmSettings};
use groupscope_core::extract::DecodingParams;
use groupscope_core::metrics::SimilarityMode;
use serde::{Deserialize, Serialize};

use crate::ingest::CorpusFormat;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{what} not found: {path}")]
    MissingPath { what: String, path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: CorpusFormat,
    #[serde(default)]
    pub vote_history: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconConfig {
    /// Lexicon file; the bundled seed lexicon when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Journal of reviewed expansion events; created on first decision.
    #[serde(default)]
    pub journal: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackendKind {
    #[default]
    Test,
    File,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub backend: EmbeddingBackendKind,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_dimension() -> usize {
    64
}
fn default_batch() -> usize {
    32
}
fn default_in_flight() -> usize {
    4
}
fn default_timeout() -> u64 {
    60
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            backend: EmbeddingBackendKind::Test,
            dimension: default_dimension(),
            seed: 0,
            path: None,
            url: None,
            batch_size: default_batch(),
            max_in_flight: default_in_flight(),
            timeout_secs: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmTransportKind {
    /// Offline deterministic stand-in.
    #[default]
    Rule,
    Http,
    /// Recorded transcripts only.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default)]
    pub transport: LlmTransportKind,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Feed implicit groups into filtering and expansion as well.
    #[serde(default)]
    pub include_implicit: bool,
    /// Template files per language, overriding the bundled ones.
    #[serde(default)]
    pub templates: BTreeMap<String, PathBuf>,
    #[serde(default = "yes")]
    pub cache: bool,
}

fn default_max_tokens() -> u32 {
    DecodingParams::default().max_tokens
}
fn yes() -> bool {
    true
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            transport: LlmTransportKind::Rule,
            url: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            max_in_flight: default_in_flight(),
            timeout_secs: default_timeout(),
            include_implicit: false,
            templates: BTreeMap::new(),
            cache: true,
        }
    }
}

impl LlmConfig {
    pub fn decoding(&self) -> DecodingParams {
        DecodingParams {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

/// `gamma = "median"` or a positive number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Named(String),
    Value(f64),
}

impl Default for GammaSetting {
    fn default() -> Self {
        GammaSetting::Named("median".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsfConfig {
    #[serde(default = "default_mode")]
    pub mode: Classifier,
    #[serde(default)]
    pub metric: Metric,
    /// Fit the one-class SVM alongside the radial classifiers.
    #[serde(default = "yes")]
    pub ocsvm: bool,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default)]
    pub gamma: GammaSetting,
}

fn default_mode() -> Classifier {
    Classifier::AvgRadius
}
fn default_nu() -> f64 {
    0.1
}
fn default_kernel() -> KernelKind {
    KernelKind::Rbf
}

impl Default for EsfConfig {
    fn default() -> Self {
        EsfConfig {
            mode: default_mode(),
            metric: Metric::Euclidean,
            ocsvm: true,
            nu: default_nu(),
            kernel: default_kernel(),
            gamma: GammaSetting::default(),
        }
    }
}

impl EsfConfig {
    pub fn ocsvm_settings(&self) -> Result<Option<OcsvmSettings>, ConfigError> {
        if !self.ocsvm {
            return Ok(None);
        }
        let gamma = match &self.gamma {
            GammaSetting::Named(s) if s == "median" => GammaPolicy::Median,
            GammaSetting::Named(s) => return Err(ConfigError::Invalid(format!("esf.gamma {s:?}: expected \"median\" or a number"))),
            GammaSetting::Value(g) if *g > 0.0 && g.is_finite() => GammaPolicy::Fixed(*g),
            GammaSetting::Value(g) => return Err(ConfigError::Invalid(format!("esf.gamma must be positive, got {g}"))),
        };
        Ok(Some(OcsvmSettings {
            nu: self.nu,
            kernel: KernelSpec { kind: self.kernel, gamma },
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionSource {
    /// Mentions from the expanded lexicon (expand-dict stage).
    #[default]
    Expanded,
    /// Mentions from the base lexicon only (label-dict stage).
    Dictionary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    /// Accept ESF-accepted candidates as synonyms of the nearest group
    /// without review.
    #[serde(default)]
    pub auto_accept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default)]
    pub similarity_mode: SimilarityMode,
    #[serde(default)]
    pub mentions: MentionSource,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_in_flight")]
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            threads: default_in_flight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub lexicon: LexiconConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub esf: EsfConfig,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// A parsed config plus the directory its relative paths refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub base_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Config::from_toml(&text, base_dir).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str, base_dir: PathBuf) -> Result<Config, ConfigError> {
        let pipeline: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        let cfg = Config { pipeline, base_dir };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.pipeline.output.dir)
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.output_dir().join(name)
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.resolve(&self.pipeline.corpus.path)
    }

    pub fn vote_history_path(&self) -> Option<PathBuf> {
        self.pipeline.corpus.vote_history.as_deref().map(|p| self.resolve(p))
    }

    pub fn lexicon_path(&self) -> Option<PathBuf> {
        self.pipeline.lexicon.path.as_deref().map(|p| self.resolve(p))
    }

    pub fn journal_path(&self) -> Option<PathBuf> {
        self.pipeline.lexicon.journal.as_deref().map(|p| self.resolve(p))
    }

    pub fn gold_path(&self) -> Option<PathBuf> {
        self.pipeline.eval.gold.as_deref().map(|p| self.resolve(p))
    }

    /// Digest of the parsed settings. Independent of formatting, comments,
    /// where the config file lives, the output directory and the thread
    /// count.
    pub fn digest(&self) -> String {
        let mut p = self.pipeline.clone();
        p.run = RunConfig::default();
        p.output.dir = PathBuf::new();
        // concurrency limits change scheduling, not results
        p.llm.max_in_flight = default_in_flight();
        p.embedding.max_in_flight = default_in_flight();
        sha256_hex(serde_json::to_string(&p).expect("serializable").as_bytes())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pipeline;
        if !(p.esf.nu > 0.0 && p.esf.nu <= 1.0) {
            return Err(ConfigError::Invalid(format!("esf.nu must be in (0, 1], got {}", p.esf.nu)));
        }
        if p.esf.mode == Classifier::Ocsvm && !p.esf.ocsvm {
            return Err(ConfigError::Invalid("esf.mode = \"ocsvm\" requires esf.ocsvm = true".into()));
        }
        p.esf.ocsvm_settings()?;
        if p.embedding.dimension < 2 {
            return Err(ConfigError::Invalid("embedding.dimension must be at least 2".into()));
        }
        match p.embedding.backend {
            EmbeddingBackendKind::File if p.embedding.path.is_none() => {
                return Err(ConfigError::Invalid("embedding.backend = \"file\" needs embedding.path".into()))
            }
            EmbeddingBackendKind::Http if p.embedding.url.is_none() => {
                return Err(ConfigError::Invalid("embedding.backend = \"http\" needs embedding.url".into()))
            }
            _ => {}
        }
        if p.llm.transport == LlmTransportKind::Http && p.llm.url.is_none() {
            return Err(ConfigError::Invalid("llm.transport = \"http\" needs llm.url".into()));
        }
        if !(p.llm.temperature >= 0.0 && p.llm.temperature.is_finite()) {
            return Err(ConfigError::Invalid("llm.temperature must be a non-negative number".into()));
        }
        if p.run.threads == 0 || p.llm.max_in_flight == 0 || p.embedding.max_in_flight == 0 || p.embedding.batch_size == 0 {
            return Err(ConfigError::Invalid("thread, batch and in-flight limits must be positive".into()));
        }
        Ok(())
    }

    /// Checks that every configured input file exists.
    pub fn check_inputs(&self) -> Result<(), ConfigError> {
        let mut required = vec![("corpus", Some(self.corpus_path()))];
        required.push(("vote history", self.vote_history_path()));
        required.push(("lexicon", self.lexicon_path()));
        required.push(("gold labels", self.gold_path()));
        if self.pipeline.embedding.backend == EmbeddingBackendKind::File {
            required.push(("vector file", self.pipeline.embedding.path.as_deref().map(|p| self.resolve(p))));
        }
        for p in self.pipeline.llm.templates.values() {
            required.push(("prompt template", Some(self.resolve(p))));
        }
        for (what, path) in required {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(ConfigError::MissingPath { what: what.into(), path });
                }
            }
        }
        Ok(())
    }
}
