//! Resumable pipeline stages. Each stage reads the artifacts of earlier
//! stages from the output directory, writes its own atomically and then
//! records their digests in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use groupscope_core::corpus::{split_sentences, Corpus, PartyFamily, Rejection, Sentence};
use groupscope_core::digest::sha256_hex;
use groupscope_core::econometrics::{build_panel, fit_ols_fe, standard_specs, VoteRecord};
use groupscope_core::embedding::{Embedding, EmbeddingBackend, EmbeddingVector};
use groupscope_core::esf::{filter_candidates, Classifier, EsfModel};
use groupscope_core::eval::{score_detection, Granularity};
use groupscope_core::extract::{
    aggregate, build_request, result_from_raw, with_retries, CandidateGroup, ExtractError, ExtractionMeta,
    ExtractionResult, LlmTransport, PromptTemplate, RetryPolicy,
};
use groupscope_core::lexicon::{
    apply_expansion, replay, Decision, ExpansionEvent, GroupLexicon, GroupMention, Matcher, MentionMethod,
    SEED_LEXICON_JSON,
};
use groupscope_core::metrics::keyness;
use groupscope_core::metrics::{pool_counts, salience, select_dyads, similarity, SalienceProfile, SimilarityRecord};
use groupscope_core::text::normalize;
use groupscope_core::Warnings;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends;
use crate::config::{Config, ConfigError, MentionSource};
use crate::fsio::{self, IoError};
use crate::ingest::{self, corpus_to_jsonl, read_corpus_jsonl};
use crate::manifest::{RunLogEntry, RunManifest, StageRecord, RUN_LOG_FILE};
use crate::report;
use crate::transcripts::{ReplayTransport, TranscriptLog};
use crate::vectors;

pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
/// Timestamp used for events generated by the pipeline itself, so that
/// reruns stay byte-identical.
pub const AUTO_EVENT_TIMESTAMP: &str = "1970-01-01T00:00:00Z";
pub const AUTO_REVIEWER: &str = "esf-auto";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    LabelDict,
    ExtractLlm,
    Embed,
    EsfFit,
    EsfFilter,
    ExpandDict,
    Salience,
    Similarity,
    Keyness,
    Panel,
    Regress,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 13] = [
        Stage::Ingest,
        Stage::LabelDict,
        Stage::ExtractLlm,
        Stage::Embed,
        Stage::EsfFit,
        Stage::EsfFilter,
        Stage::ExpandDict,
        Stage::Salience,
        Stage::Similarity,
        Stage::Keyness,
        Stage::Panel,
        Stage::Regress,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::LabelDict => "label-dict",
            Stage::ExtractLlm => "extract-llm",
            Stage::Embed => "embed",
            Stage::EsfFit => "esf-fit",
            Stage::EsfFilter => "esf-filter",
            Stage::ExpandDict => "expand-dict",
            Stage::Salience => "salience",
            Stage::Similarity => "similarity",
            Stage::Keyness => "keyness",
            Stage::Panel => "panel",
            Stage::Regress => "regress",
            Stage::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s)
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[CORPUS, SENTENCES, "rejections.jsonl"],
            Stage::LabelDict => &[MENTIONS_DICT],
            Stage::ExtractLlm => &["extractions.jsonl", "extraction_errors.jsonl", CANDIDATES],
            Stage::Embed => &[CANDIDATES_EMBEDDED, WHITELIST_VECTORS],
            Stage::EsfFit => &[ESF_MODEL],
            Stage::EsfFilter => &[REVIEW_QUEUE, "esf_rejected.jsonl", "esf_unresolved.jsonl", "esf_known.jsonl"],
            Stage::ExpandDict => &["lexicon.json", "auto_events.jsonl", MENTIONS],
            Stage::Salience => &["salience.csv", SALIENCE_PROFILES],
            Stage::Similarity => &["similarity.csv", SIMILARITY],
            Stage::Keyness => &["keyness_rr_vs_cl.csv", "keyness_rr_vs_cr.csv"],
            Stage::Panel => &[PANEL],
            Stage::Regress => &["regression.txt", "regression.csv", "regression.json"],
            Stage::Eval => &["eval.json", "eval.txt"],
        }
    }

    /// Upstream artifacts this stage reads, with the stage producing each.
    pub fn requires(self, cfg: &Config) -> Vec<(&'static str, Stage)> {
        let ingest = [(CORPUS, Stage::Ingest), (SENTENCES, Stage::Ingest)];
        match self {
            Stage::Ingest => vec![],
            Stage::LabelDict | Stage::ExtractLlm => ingest.to_vec(),
            Stage::Embed => vec![(CANDIDATES, Stage::ExtractLlm)],
            Stage::EsfFit => vec![(WHITELIST_VECTORS, Stage::Embed)],
            Stage::EsfFilter => vec![(CANDIDATES_EMBEDDED, Stage::Embed), (ESF_MODEL, Stage::EsfFit)],
            Stage::ExpandDict => {
                let mut v = ingest.to_vec();
                if cfg.pipeline.expansion.auto_accept {
                    v.push((REVIEW_QUEUE, Stage::EsfFilter));
                    v.push((WHITELIST_VECTORS, Stage::Embed));
                }
                v
            }
            Stage::Salience => {
                let mut v = ingest.to_vec();
                v.push(match cfg.pipeline.metrics.mentions {
                    MentionSource::Expanded => (MENTIONS, Stage::ExpandDict),
                    MentionSource::Dictionary => (MENTIONS_DICT, Stage::LabelDict),
                });
                v
            }
            Stage::Similarity | Stage::Keyness => vec![(CORPUS, Stage::Ingest), (SALIENCE_PROFILES, Stage::Salience)],
            Stage::Panel => vec![(CORPUS, Stage::Ingest), (SIMILARITY, Stage::Similarity)],
            Stage::Regress => vec![(PANEL, Stage::Panel)],
            Stage::Eval => vec![(SENTENCES, Stage::Ingest), (MENTIONS_DICT, Stage::LabelDict)],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const CORPUS: &str = "corpus.jsonl";
pub const SENTENCES: &str = "sentences.jsonl";
pub const MENTIONS_DICT: &str = "mentions_dict.jsonl";
pub const MENTIONS: &str = "mentions.jsonl";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const CANDIDATES_EMBEDDED: &str = "candidates_embedded.jsonl";
pub const WHITELIST_VECTORS: &str = "whitelist_vectors.tsv";
pub const ESF_MODEL: &str = "esf_model.json";
pub const REVIEW_QUEUE: &str = "review_queue.jsonl";
pub const SALIENCE_PROFILES: &str = "salience_profiles.jsonl";
pub const SIMILARITY: &str = "similarity.jsonl";
pub const PANEL: &str = "panel.csv";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{stage} needs {artifact}: run {needs} first")]
    MissingUpstream {
        stage: Stage,
        artifact: String,
        needs: Stage,
    },
    #[error(
        "output directory holds a run with config digest {existing}, current config is {current}; use --force to start over"
    )]
    ConfigMismatch { existing: String, current: String },
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
}

fn fail(stage: Stage, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Discard a manifest written under a different configuration.
    pub force: bool,
    /// Ignore recorded LLM transcripts and query the transport again.
    pub no_cache: bool,
}

/// What a stage produced, before anything is written.
#[derive(Debug, Default)]
pub struct StageOutput {
    pub files: Vec<(&'static str, Vec<u8>)>,
    pub warnings: Vec<String>,
    pub lexicon_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: Stage,
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

pub struct Pipeline {
    pub cfg: Config,
    pub options: RunOptions,
    pool: rayon::ThreadPool,
}

/// The lexicon file named in the config, or the bundled seed.
pub fn base_lexicon(cfg: &Config) -> Result<GroupLexicon, PipelineError> {
    match cfg.lexicon_path() {
        Some(p) => {
            let text = fsio::read_to_string(&p)?;
            GroupLexicon::from_json(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())).into())
        }
        None => Ok(GroupLexicon::seed()),
    }
}

pub fn read_journal(cfg: &Config) -> Result<Vec<ExpansionEvent>, IoError> {
    match cfg.journal_path() {
        Some(p) if p.exists() => fsio::read_jsonl(&p),
        _ => Ok(Vec::new()),
    }
}

/// Base lexicon with every journaled decision applied.
pub fn current_lexicon(cfg: &Config) -> Result<GroupLexicon, PipelineError> {
    let base = base_lexicon(cfg)?;
    let journal = read_journal(cfg)?;
    replay(&base, &journal).map_err(|e| ConfigError::Invalid(format!("journal: {e}")).into())
}

fn file_digest(path: &Path) -> Result<String, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Digests of everything the configuration points at.
pub fn input_digests(cfg: &Config) -> Result<BTreeMap<String, String>, IoError> {
    let mut out = BTreeMap::new();
    out.insert("corpus".into(), file_digest(&cfg.corpus_path())?);
    if let Some(p) = cfg.vote_history_path() {
        out.insert("vote_history".into(), file_digest(&p)?);
    }
    let lex = match cfg.lexicon_path() {
        Some(p) => file_digest(&p)?,
        None => sha256_hex(SEED_LEXICON_JSON.as_bytes()),
    };
    out.insert("lexicon".into(), lex);
    if let Some(p) = cfg.journal_path().filter(|p| p.exists()) {
        out.insert("journal".into(), file_digest(&p)?);
    }
    if let Some(p) = cfg.pipeline.embedding.path.as_deref() {
        let p = cfg.resolve(p);
        if p.exists() {
            out.insert("vectors".into(), file_digest(&p)?);
        }
    }
    if let Some(p) = cfg.gold_path() {
        out.insert("gold".into(), file_digest(&p)?);
    }
    for (lang, p) in &cfg.pipeline.llm.templates {
        out.insert(format!("template:{lang}"), file_digest(&cfg.resolve(p))?);
    }
    Ok(out)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Pipeline {
    pub fn new(cfg: Config, options: RunOptions) -> Result<Pipeline, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.pipeline.run.threads)
            .build()
            .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
        Ok(Pipeline { cfg, options, pool })
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.cfg.output(name)
    }

    fn check_upstream(&self, stage: Stage) -> Result<(), PipelineError> {
        for (artifact, needs) in stage.requires(&self.cfg) {
            if !self.path(artifact).exists() {
                return Err(PipelineError::MissingUpstream {
                    stage,
                    artifact: artifact.into(),
                    needs,
                });
            }
        }
        if stage == Stage::Eval && self.cfg.gold_path().is_none() {
            return Err(fail(stage, "eval.gold is not configured"));
        }
        Ok(())
    }

    fn manifest_for_run(&self) -> Result<RunManifest, PipelineError> {
        let dir = self.cfg.output_dir();
        let digest = self.cfg.digest();
        let inputs = input_digests(&self.cfg)?;
        let mut manifest = match RunManifest::load(&dir)? {
            Some(m) if m.config_digest == digest => m,
            Some(m) if !self.options.force => {
                return Err(PipelineError::ConfigMismatch {
                    existing: m.config_digest,
                    current: digest,
                })
            }
            _ => RunManifest::new(digest, BTreeMap::new()),
        };
        manifest.input_digests = inputs;
        manifest.refresh_run_id();
        Ok(manifest)
    }

    /// Runs one stage: checks inputs, computes, writes outputs atomically,
    /// then updates the manifest.
    pub fn run_stage(&self, stage: Stage) -> Result<StageReport, PipelineError> {
        self.cfg.check_inputs()?;
        self.check_upstream(stage)?;
        let mut manifest = self.manifest_for_run()?;
        let started = now();
        let out = self.pool.install(|| self.compute(stage))?;
        let mut record = StageRecord {
            outputs: BTreeMap::new(),
            warnings: out.warnings,
        };
        for (name, bytes) in &out.files {
            fsio::write_atomic(&self.path(name), bytes)?;
            record.outputs.insert((*name).to_string(), sha256_hex(bytes));
        }
        if out.lexicon_version.is_some() {
            manifest.lexicon_version = out.lexicon_version;
        }
        manifest.stages.insert(stage.as_str().into(), record.clone());
        manifest.save(&self.cfg.output_dir())?;
        fsio::append_jsonl(
            &self.path(RUN_LOG_FILE),
            &RunLogEntry {
                run_id: manifest.run_id.clone(),
                stage: stage.as_str().into(),
                started,
                finished: now(),
            },
        )?;
        Ok(StageReport {
            stage,
            outputs: record.outputs,
            warnings: record.warnings,
        })
    }

    /// Every stage in order. `eval` runs only when gold labels are
    /// configured.
    pub fn run_all(&self) -> Result<Vec<StageReport>, PipelineError> {
        let mut out = Vec::new();
        for stage in Stage::ALL {
            if stage == Stage::Eval && self.cfg.gold_path().is_none() {
                continue;
            }
            out.push(self.run_stage(stage)?);
        }
        Ok(out)
    }

    fn compute(&self, stage: Stage) -> Result<StageOutput, PipelineError> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::LabelDict => self.label_dict(),
            Stage::ExtractLlm => self.extract_llm(),
            Stage::Embed => self.embed(),
            Stage::EsfFit => self.esf_fit(),
            Stage::EsfFilter => self.esf_filter(),
            Stage::ExpandDict => self.expand_dict(),
            Stage::Salience => self.salience(),
            Stage::Similarity => self.similarity(),
            Stage::Keyness => self.keyness(),
            Stage::Panel => self.panel(),
            Stage::Regress => self.regress(),
            Stage::Eval => self.eval(),
        }
    }

    fn corpus(&self) -> Result<Corpus, PipelineError> {
        Ok(read_corpus_jsonl(&self.path(CORPUS))?)
    }

    fn sentences(&self) -> Result<Vec<Sentence>, PipelineError> {
        Ok(fsio::read_jsonl(&self.path(SENTENCES))?)
    }

    fn ingest(&self) -> Result<StageOutput, PipelineError> {
        let c = &self.cfg.pipeline.corpus;
        let (corpus, rejections) =
            ingest::ingest(&self.cfg.corpus_path(), c.format).map_err(|e| fail(Stage::Ingest, e))?;
        let split: Vec<(Vec<Sentence>, Warnings)> = corpus
            .manifestos
            .par_iter()
            .map(|m| {
                let mut w = Warnings::new();
                (split_sentences(m, &mut w), w)
            })
            .collect();
        let mut warnings = Warnings::new();
        let mut sentences = Vec::new();
        for (s, w) in split {
            sentences.extend(s);
            warnings.merge(w);
        }
        let mut notes = warnings.messages;
        if !rejections.is_empty() {
            notes.push(format!("{} row(s) rejected, see rejections.jsonl", rejections.len()));
        }
        Ok(StageOutput {
            files: vec![
                (CORPUS, corpus_to_jsonl(&corpus)),
                (SENTENCES, fsio::to_jsonl(&sentences)),
                ("rejections.jsonl", fsio::to_jsonl::<Rejection>(&rejections)),
            ],
            warnings: notes,
            lexicon_version: None,
        })
    }

    fn label_dict(&self) -> Result<StageOutput, PipelineError> {
        let lex = base_lexicon(&self.cfg)?;
        let (mentions, warnings) = match_corpus(&lex, None, &self.corpus()?, &self.sentences()?);
        Ok(StageOutput {
            files: vec![(MENTIONS_DICT, fsio::to_jsonl(&mentions))],
            warnings,
            lexicon_version: Some(lex.version),
        })
    }

    fn templates(&self, languages: &BTreeSet<String>) -> Result<(BTreeMap<String, PromptTemplate>, Vec<String>), PipelineError> {
        let mut out = BTreeMap::new();
        let mut warnings = Vec::new();
        for lang in languages {
            if let Some(p) = self.cfg.pipeline.llm.templates.get(lang) {
                let text = fsio::read_to_string(&self.cfg.resolve(p))?;
                let t = PromptTemplate::new(text, lang.clone(), format!("custom-{lang}"))
                    .map_err(|e| fail(Stage::ExtractLlm, format!("template for {lang}: {e}")))?;
                out.insert(lang.clone(), t);
            } else if let Ok(t) = PromptTemplate::default_for(lang) {
                out.insert(lang.clone(), t);
            } else {
                warnings.push(format!("no prompt template for language {lang:?}; its sentences are skipped"));
            }
        }
        Ok((out, warnings))
    }

    fn extract_llm(&self) -> Result<StageOutput, PipelineError> {
        let stage = Stage::ExtractLlm;
        let corpus = self.corpus()?;
        let sentences = self.sentences()?;
        let lang_of = languages_by_doc(&corpus);
        let languages: BTreeSet<String> = lang_of.values().cloned().collect();
        let (templates, mut warnings) = self.templates(&languages)?;
        let llm = &self.cfg.pipeline.llm;
        let params = llm.decoding();
        let policy = RetryPolicy::default();
        let log = TranscriptLog::open(&self.path(TRANSCRIPTS_FILE))?;
        let live = backends::transport(&self.cfg);
        let replay_transport = ReplayTransport { log: &log };
        let transport: &(dyn LlmTransport + Sync) = match &live {
            Some(t) => t.as_ref(),
            None => &replay_transport,
        };
        let use_cache = llm.cache && !self.options.no_cache;
        let record = live.is_some() && llm.cache;

        let work: Vec<(&Sentence, &PromptTemplate)> = sentences
            .iter()
            .filter_map(|s| templates.get(lang_of.get(&s.doc_id)?).map(|t| (s, t)))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(llm.max_in_flight)
            .build()
            .map_err(|e| fail(stage, e))?;
        let log_failures = AtomicUsize::new(0);
        let results: Vec<Result<ExtractionResult, ExtractError>> = pool.install(|| {
            work.par_iter()
                .map(|(s, t)| {
                    let req = build_request(s, t, &params);
                    let (raw, attempts) = match log.lookup(&req).filter(|_| use_cache) {
                        Some(hit) => hit,
                        None => {
                            let mut sleep = |d: Duration| std::thread::sleep(d);
                            let (raw, attempts) = with_retries(&policy, &mut sleep, || transport.complete(&req))
                                .map_err(|(source, attempts)| ExtractError::Transport { attempts, source })?;
                            if record && log.record(&s.sentence_id, &req, &raw, attempts).is_err() {
                                log_failures.fetch_add(1, Ordering::Relaxed);
                            }
                            (raw, attempts)
                        }
                    };
                    let meta = ExtractionMeta {
                        instruction_id: t.instruction_id.clone(),
                        temperature: params.temperature,
                        max_tokens: params.max_tokens,
                        attempts,
                    };
                    result_from_raw(&s.sentence_id, raw, meta)
                })
                .collect()
        });
        let mut ok = Vec::new();
        let mut errors = Vec::new();
        let mut transport_failures = 0;
        for (r, (s, _)) in results.into_iter().zip(&work) {
            match r {
                Ok(r) => ok.push(r),
                Err(e) => {
                    if matches!(e, ExtractError::Transport { .. }) {
                        transport_failures += 1;
                    }
                    errors.push(ExtractionFailure::new(&s.sentence_id, &e));
                }
            }
        }
        if !work.is_empty() && transport_failures == work.len() {
            return Err(fail(stage, format!("all {} requests failed: {}", work.len(), errors[0].message)));
        }
        if !errors.is_empty() {
            warnings.push(format!("{} sentence(s) failed, see extraction_errors.jsonl", errors.len()));
        }
        let n = log_failures.load(Ordering::Relaxed);
        if n > 0 {
            warnings.push(format!("{n} transcript(s) could not be recorded"));
        }
        let pooled: Vec<ExtractionResult> = ok
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if !llm.include_implicit {
                    r.implicit_groups.clear();
                }
                r
            })
            .collect();
        let candidates = aggregate(&pooled);
        Ok(StageOutput {
            files: vec![
                ("extractions.jsonl", fsio::to_jsonl(&ok)),
                ("extraction_errors.jsonl", fsio::to_jsonl(&errors)),
                (CANDIDATES, fsio::to_jsonl(&candidates)),
            ],
            warnings,
            lexicon_version: None,
        })
    }

    fn embed(&self) -> Result<StageOutput, PipelineError> {
        let stage = Stage::Embed;
        let mut candidates: Vec<CandidateGroup> = fsio::read_jsonl(&self.path(CANDIDATES))?;
        let lex = current_lexicon(&self.cfg)?;
        let backend = backends::embedder(&self.cfg).map_err(|e| fail(stage, e))?;
        let mut warnings = Vec::new();

        let whitelist = embed_whitelist(backend.as_ref(), &lex, &mut warnings).map_err(|e| fail(stage, e))?;
        let dim = whitelist.first().map(|e| e.vector.len());

        let phrases: Vec<String> = candidates.iter().map(|c| c.surface_phrase.clone()).collect();
        let embedded = if phrases.is_empty() {
            Vec::new()
        } else {
            backend.embed(&phrases).map_err(|e| fail(stage, e))?
        };
        let mut missing = 0;
        for (c, e) in candidates.iter_mut().zip(embedded) {
            match e {
                Embedding::Vector(v) => {
                    if dim.is_some_and(|d| d != v.vector.len()) {
                        return Err(fail(
                            stage,
                            format!("candidate {:?} has dimension {}, whitelist {}", v.phrase, v.vector.len(), dim.unwrap_or(0)),
                        ));
                    }
                    c.embedding = Some(v);
                }
                Embedding::Missing(_) => {
                    c.embedding = None;
                    missing += 1;
                }
            }
        }
        if missing > 0 {
            warnings.push(format!("{missing} candidate(s) have no embedding"));
        }
        let tsv = vectors::format_rows(whitelist.iter().map(|e| (e.phrase.as_str(), e.vector.as_slice())));
        Ok(StageOutput {
            files: vec![
                (CANDIDATES_EMBEDDED, fsio::to_jsonl(&candidates)),
                (WHITELIST_VECTORS, tsv.into_bytes()),
            ],
            warnings,
            lexicon_version: Some(lex.version),
        })
    }

    fn whitelist_vectors(&self) -> Result<Vec<EmbeddingVector>, PipelineError> {
        let store = vectors::load_store(&self.path(WHITELIST_VECTORS), "whitelist").map_err(|e| fail(Stage::EsfFit, e))?;
        Ok(store
            .iter()
            .map(|(p, v)| EmbeddingVector {
                phrase: p.into(),
                vector: v.to_vec(),
                backend_id: "whitelist".into(),
            })
            .collect())
    }

    fn esf_fit(&self) -> Result<StageOutput, PipelineError> {
        let whitelist = self.whitelist_vectors()?;
        let model = fit_esf(&self.cfg, &whitelist).map_err(|e| fail(Stage::EsfFit, e))?;
        Ok(StageOutput {
            files: vec![(ESF_MODEL, pretty_json(&model))],
            warnings: vec![],
            lexicon_version: None,
        })
    }

    fn esf_filter(&self) -> Result<StageOutput, PipelineError> {
        let stage = Stage::EsfFilter;
        let candidates: Vec<CandidateGroup> = fsio::read_jsonl(&self.path(CANDIDATES_EMBEDDED))?;
        let model: EsfModel = fsio::read_json(&self.path(ESF_MODEL))?;
        let lex = current_lexicon(&self.cfg)?;
        let known_phrases: BTreeSet<String> = lex.whitelist_phrases().into_iter().collect();
        let (known, fresh): (Vec<CandidateGroup>, Vec<CandidateGroup>) =
            candidates.into_iter().partition(|c| known_phrases.contains(&c.surface_phrase));
        let mode = self.cfg.pipeline.esf.mode;
        let partition = filter_candidates(fresh, &model, mode).map_err(|e| fail(stage, e))?;
        let queue = rank_by_distance(partition.accepted, &model).map_err(|e| fail(stage, e))?;
        Ok(StageOutput {
            files: vec![
                (REVIEW_QUEUE, fsio::to_jsonl(&queue)),
                ("esf_rejected.jsonl", fsio::to_jsonl(&partition.rejected)),
                ("esf_unresolved.jsonl", fsio::to_jsonl(&partition.unresolved)),
                ("esf_known.jsonl", fsio::to_jsonl(&known)),
            ],
            warnings: vec![],
            lexicon_version: Some(lex.version),
        })
    }

    fn expand_dict(&self) -> Result<StageOutput, PipelineError> {
        let stage = Stage::ExpandDict;
        let base = base_lexicon(&self.cfg)?;
        let journal = read_journal(&self.cfg)?;
        let mut lex = replay(&base, &journal).map_err(|e| fail(stage, e))?;
        let corpus = self.corpus()?;
        let sentences = self.sentences()?;
        let mut warnings = Vec::new();
        let mut auto_events = Vec::new();
        if self.cfg.pipeline.expansion.auto_accept {
            let queue: Vec<CandidateGroup> = fsio::read_jsonl(&self.path(REVIEW_QUEUE))?;
            let whitelist = self.whitelist_vectors()?;
            let decided: BTreeSet<String> = journal.iter().map(|e| normalize(&e.surface_phrase)).collect();
            let lang_of = languages_by_doc(&corpus);
            for c in queue {
                if decided.contains(&c.surface_phrase) {
                    continue;
                }
                let Some(emb) = c.embedding.as_ref() else { continue };
                let Some(target) = nearest_group(&lex, &whitelist, &emb.vector) else { continue };
                let event = ExpansionEvent {
                    event_id: lex.provenance_journal.last().map_or(1, |e| e.event_id + 1),
                    timestamp: AUTO_EVENT_TIMESTAMP.into(),
                    surface_phrase: c.surface_phrase.clone(),
                    language: candidate_language(&c, &lang_of),
                    decision: Decision::AcceptAsSynonym,
                    target_group_id: Some(target),
                    reviewer: AUTO_REVIEWER.into(),
                };
                match apply_expansion(&lex, &event) {
                    Ok(next) => {
                        lex = next;
                        auto_events.push(event);
                    }
                    Err(e) => warnings.push(format!("skipped {:?}: {e}", c.surface_phrase)),
                }
            }
        }
        let (mentions, w) = match_corpus(&lex, Some(&base), &corpus, &sentences);
        warnings.extend(w);
        Ok(StageOutput {
            files: vec![
                ("lexicon.json", lex.to_json().into_bytes()),
                ("auto_events.jsonl", fsio::to_jsonl(&auto_events)),
                (MENTIONS, fsio::to_jsonl(&mentions)),
            ],
            warnings,
            lexicon_version: Some(lex.version),
        })
    }

    fn salience(&self) -> Result<StageOutput, PipelineError> {
        let source = match self.cfg.pipeline.metrics.mentions {
            MentionSource::Expanded => MENTIONS,
            MentionSource::Dictionary => MENTIONS_DICT,
        };
        let mentions: Vec<GroupMention> = fsio::read_jsonl(&self.path(source))?;
        let corpus = self.corpus()?;
        let sentences = self.sentences()?;
        let mut by_doc_sent: BTreeMap<&str, Vec<Sentence>> = BTreeMap::new();
        for s in &sentences {
            by_doc_sent.entry(s.doc_id.as_str()).or_default().push(s.clone());
        }
        let sid_doc: BTreeMap<&str, &str> = sentences.iter().map(|s| (s.sentence_id.as_str(), s.doc_id.as_str())).collect();
        let mut by_doc_ment: BTreeMap<&str, Vec<GroupMention>> = BTreeMap::new();
        for m in &mentions {
            if let Some(doc) = sid_doc.get(m.sentence_id.as_str()) {
                by_doc_ment.entry(doc).or_default().push(m.clone());
            }
        }
        let profiles: Vec<SalienceProfile> = corpus
            .manifestos
            .par_iter()
            .map(|m| {
                let d = m.doc_id.as_str();
                salience(
                    d,
                    by_doc_ment.get(d).map_or(&[][..], Vec::as_slice),
                    by_doc_sent.get(d).map_or(&[][..], Vec::as_slice),
                )
            })
            .collect();
        let warnings = profiles
            .iter()
            .filter(|p| p.is_empty())
            .map(|p| format!("{} has no group-mentioning sentences", p.doc_id))
            .collect();
        Ok(StageOutput {
            files: vec![
                ("salience.csv", report::salience_csv(&profiles)),
                (SALIENCE_PROFILES, fsio::to_jsonl(&profiles)),
            ],
            warnings,
            lexicon_version: None,
        })
    }

    fn profiles(&self) -> Result<BTreeMap<String, SalienceProfile>, PipelineError> {
        let v: Vec<SalienceProfile> = fsio::read_jsonl(&self.path(SALIENCE_PROFILES))?;
        Ok(v.into_iter().map(|p| (p.doc_id.clone(), p)).collect())
    }

    fn similarity(&self) -> Result<StageOutput, PipelineError> {
        let corpus = self.corpus()?;
        let profiles = self.profiles()?;
        let mode = self.cfg.pipeline.metrics.similarity_mode;
        let mut warnings = Warnings::new();
        let mut records = Vec::new();
        let mut rows = Vec::new();
        for d in select_dyads(&corpus) {
            let (Some(a), Some(b)) = (profiles.get(&d.centre_doc_id), profiles.get(&d.rr_doc_id)) else {
                warnings.push(format!("no salience profile for dyad {} / {}", d.centre_doc_id, d.rr_doc_id));
                continue;
            };
            match similarity(&d.election_id, a, b, mode, &mut warnings) {
                Ok(r) => {
                    let party = |doc: &str| corpus.get(doc).map(|m| m.party_id.clone()).unwrap_or_default();
                    rows.push(report::SimilarityCsvRow {
                        election_id: r.election_id.clone(),
                        centre_party_id: party(&r.centre_doc_id),
                        rr_party_id: party(&r.rr_doc_id),
                        family: d.family.as_str().into(),
                        similarity: r.similarity,
                    });
                    records.push(r);
                }
                Err(e) => warnings.push(e.to_string()),
            }
        }
        let mut notes = warnings.messages;
        if warnings.similarity_clamped > 0 {
            notes.push(format!("{} dissimilarity value(s) clamped to [0, 1]", warnings.similarity_clamped));
        }
        Ok(StageOutput {
            files: vec![
                ("similarity.csv", report::to_csv(&rows)),
                (SIMILARITY, fsio::to_jsonl(&records)),
            ],
            warnings: notes,
            lexicon_version: None,
        })
    }

    fn keyness(&self) -> Result<StageOutput, PipelineError> {
        let stage = Stage::Keyness;
        let corpus = self.corpus()?;
        let profiles = self.profiles()?;
        let family_counts = |f: PartyFamily| {
            pool_counts(
                corpus
                    .manifestos
                    .iter()
                    .filter(|m| m.party_family == f)
                    .filter_map(|m| profiles.get(&m.doc_id)),
            )
        };
        let rr = family_counts(PartyFamily::RadicalRight);
        let cl = family_counts(PartyFamily::CentreLeft);
        let cr = family_counts(PartyFamily::CentreRight);
        let vs_cl = keyness(&rr, &cl).map_err(|e| fail(stage, format!("radical right vs centre left: {e}")))?;
        let vs_cr = keyness(&rr, &cr).map_err(|e| fail(stage, format!("radical right vs centre right: {e}")))?;
        Ok(StageOutput {
            files: vec![
                ("keyness_rr_vs_cl.csv", report::keyness_csv(&vs_cl)),
                ("keyness_rr_vs_cr.csv", report::keyness_csv(&vs_cr)),
            ],
            warnings: vec![],
            lexicon_version: None,
        })
    }

    fn panel(&self) -> Result<StageOutput, PipelineError> {
        let stage = Stage::Panel;
        let corpus = self.corpus()?;
        let sims: Vec<SimilarityRecord> = fsio::read_jsonl(&self.path(SIMILARITY))?;
        let history: Vec<VoteRecord> = match self.cfg.vote_history_path() {
            Some(p) => ingest::read_vote_history(&p).map_err(|e| fail(stage, e))?,
            None => Vec::new(),
        };
        let panel = build_panel(&sims, &corpus, &history).map_err(|e| fail(stage, e))?;
        let mut warnings = Vec::new();
        if history.is_empty() {
            warnings.push("no vote history configured; lags come from the corpus only".into());
        }
        Ok(StageOutput {
            files: vec![(PANEL, report::to_csv(&panel))],
            warnings,
            lexicon_version: None,
        })
    }

    fn regress(&self) -> Result<StageOutput, PipelineError> {
        let panel = report::read_panel_csv(&self.path(PANEL)).map_err(|e| fail(Stage::Regress, e))?;
        let fits: Vec<report::ModelResult> = standard_specs()
            .par_iter()
            .map(|spec| match fit_ols_fe(&panel, spec) {
                Ok(f) => report::ModelResult {
                    model: spec.name.clone(),
                    fit: Some(f),
                    error: None,
                },
                Err(e) => report::ModelResult {
                    model: spec.name.clone(),
                    fit: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        let warnings = fits
            .iter()
            .filter_map(|m| m.error.as_ref().map(|e| format!("model {}: {e}", m.model)))
            .collect();
        Ok(StageOutput {
            files: vec![
                ("regression.txt", report::regression_text(&fits).into_bytes()),
                ("regression.csv", report::regression_csv(&fits)),
                ("regression.json", pretty_json(&fits)),
            ],
            warnings,
            lexicon_version: None,
        })
    }

    fn eval(&self) -> Result<StageOutput, PipelineError> {
        let stage = Stage::Eval;
        let gold = ingest::read_gold(&self.cfg.gold_path().expect("checked"))?;
        let sentences = self.sentences()?;
        let mut methods = vec![("dictionary", self.path(MENTIONS_DICT))];
        if self.path(MENTIONS).exists() {
            methods.push(("expanded", self.path(MENTIONS)));
        }
        let mut reports = Vec::new();
        for (name, path) in methods {
            let mentions: Vec<GroupMention> = fsio::read_jsonl(&path)?;
            let mut pred: BTreeMap<String, BTreeSet<String>> =
                sentences.iter().map(|s| (s.sentence_id.clone(), BTreeSet::new())).collect();
            for m in mentions {
                pred.entry(m.sentence_id).or_default().insert(m.group_id);
            }
            for g in [Granularity::Binary, Granularity::PerGroup] {
                let r = score_detection(&pred, &gold, g).map_err(|e| fail(stage, e))?;
                reports.push(report::EvalEntry {
                    method: name.into(),
                    report: r,
                });
            }
        }
        Ok(StageOutput {
            files: vec![
                ("eval.json", pretty_json(&reports)),
                ("eval.txt", report::eval_text(&reports).into_bytes()),
            ],
            warnings: vec![],
            lexicon_version: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionFailure {
    pub sentence_id: String,
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

impl ExtractionFailure {
    fn new(sentence_id: &str, e: &ExtractError) -> Self {
        let (kind, raw) = match e {
            ExtractError::EmptySentence(_) => ("empty_sentence", None),
            ExtractError::Transport { .. } => ("transport", None),
            ExtractError::Unparseable { raw_response, .. } => ("unparseable", Some(raw_response.clone())),
        };
        ExtractionFailure {
            sentence_id: sentence_id.into(),
            kind: kind.into(),
            message: e.to_string(),
            raw_response: raw,
        }
    }
}

pub fn pretty_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

pub fn languages_by_doc(corpus: &Corpus) -> BTreeMap<String, String> {
    corpus
        .manifestos
        .iter()
        .map(|m| (m.doc_id.clone(), m.language.clone()))
        .collect()
}

/// Most frequent document language among the candidate's sentences; ties
/// go to the alphabetically first language.
pub fn candidate_language(c: &CandidateGroup, lang_of: &BTreeMap<String, String>) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for sid in &c.sentence_ids {
        let doc = sid.rsplit_once(':').map_or(sid.as_str(), |(d, _)| d);
        if let Some(l) = lang_of.get(doc) {
            *counts.entry(l).or_default() += 1;
        }
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|(_, n)| *n == best)
        .map_or_else(|| "und".into(), |(l, _)| l.to_string())
}

/// Dictionary matching over all sentences, one matcher per language. With a
/// `base` lexicon, mentions of phrases the base does not contain are tagged
/// as coming from the expansion.
pub fn match_corpus(
    lex: &GroupLexicon,
    base: Option<&GroupLexicon>,
    corpus: &Corpus,
    sentences: &[Sentence],
) -> (Vec<GroupMention>, Vec<String>) {
    let lang_of = languages_by_doc(corpus);
    let matchers: BTreeMap<&str, Matcher> = lang_of
        .values()
        .map(|l| (l.as_str(), Matcher::new(lex, l)))
        .collect();
    let per_sentence: Vec<Vec<GroupMention>> = sentences
        .par_iter()
        .map(|s| {
            let Some(lang) = lang_of.get(&s.doc_id) else { return Vec::new() };
            let mut ms = matchers[lang.as_str()].find(s);
            if let Some(base) = base {
                for m in &mut ms {
                    let in_base = base
                        .entries
                        .get(&m.group_id)
                        .and_then(|e| e.synonyms.get(lang))
                        .is_some_and(|set| set.contains(&normalize(&m.matched_surface)));
                    if !in_base {
                        m.method = MentionMethod::LlmEsf;
                    }
                }
            }
            ms
        })
        .collect();
    let mut warnings = Vec::new();
    for (lang, m) in &matchers {
        if m.is_empty() {
            let n = sentences
                .iter()
                .filter(|s| lang_of.get(&s.doc_id).map(String::as_str) == Some(*lang))
                .count();
            warnings.push(format!("lexicon has no synonyms for language {lang:?}; {n} sentence(s) unmatched"));
        }
    }
    (per_sentence.into_iter().flatten().collect(), warnings)
}

/// Embeds every lexicon phrase. Phrases the backend cannot embed are
/// reported and left out.
pub fn embed_whitelist(
    backend: &dyn EmbeddingBackend,
    lex: &GroupLexicon,
    warnings: &mut Vec<String>,
) -> Result<Vec<EmbeddingVector>, groupscope_core::embedding::EmbedError> {
    let phrases = lex.whitelist_phrases();
    let mut out = Vec::new();
    for e in backend.embed(&phrases)? {
        match e {
            Embedding::Vector(v) => out.push(v),
            Embedding::Missing(p) => warnings.push(format!("no embedding for whitelist phrase {p:?}")),
        }
    }
    Ok(out)
}

pub fn fit_esf(cfg: &Config, whitelist: &[EmbeddingVector]) -> Result<EsfModel, PipelineError> {
    let esf = &cfg.pipeline.esf;
    EsfModel::fit(whitelist, esf.metric, esf.ocsvm_settings()?).map_err(|e| fail(Stage::EsfFit, e))
}

/// Ascending distance to the model center; ties by candidate id.
pub fn rank_by_distance(
    candidates: Vec<CandidateGroup>,
    model: &EsfModel,
) -> Result<Vec<CandidateGroup>, groupscope_core::esf::EsfError> {
    let mut keyed = Vec::with_capacity(candidates.len());
    for c in candidates {
        let d = match &c.embedding {
            Some(e) => model.distance(&e.vector)?,
            None => f64::INFINITY,
        };
        keyed.push((d, c));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.candidate_id.cmp(&b.1.candidate_id)));
    Ok(keyed.into_iter().map(|(_, c)| c).collect())
}

/// Group owning the whitelist phrase closest to `x`.
fn nearest_group(lex: &GroupLexicon, whitelist: &[EmbeddingVector], x: &[f64]) -> Option<String> {
    let owner = |phrase: &str| {
        lex.entries
            .values()
            .find(|e| e.synonyms.values().any(|s| s.contains(phrase)))
            .map(|e| e.group_id.clone())
    };
    whitelist
        .iter()
        .filter(|w| w.vector.len() == x.len())
        .map(|w| {
            let d: f64 = w.vector.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, w)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.phrase.cmp(&b.1.phrase)))
        .and_then(|(_, w)| owner(&w.phrase))
}

/// Verdicts of one classifier, for reporting.
pub fn accepted_by(c: &CandidateGroup, mode: Classifier) -> Option<bool> {
    c.verdicts.get(&mode).map(|v| v.accepted)
}
