//! HTTP API for reviewing expansion candidates.
//!
//! All state sits behind one async mutex, so decisions, journal appends and
//! refits are serialized: the server is the only writer of the journal while
//! it runs.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use groupscope_core::corpus::Sentence;
use groupscope_core::esf::{Classifier, EsfModel, Verdict};
use groupscope_core::extract::{CandidateGroup, CandidateSource, ReviewStatus};
use groupscope_core::lexicon::{
    apply_expansion, Category, Decision, ExpansionEvent, GroupEntry, GroupLexicon, LexiconError, Matcher,
};
use groupscope_core::text::normalize;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::backends::{self, SharedEmbedder};
use crate::config::Config;
use crate::fsio;
use crate::ingest::read_corpus_jsonl;
use crate::pipeline::{
    base_lexicon, candidate_language, embed_whitelist, fit_esf, languages_by_doc, read_journal, CORPUS, ESF_MODEL,
    REVIEW_QUEUE, SENTENCES,
};

pub const REVIEW_DIR: &str = "review";
const SAMPLES: usize = 3;

pub struct ReviewState {
    cfg: Config,
    lexicon: GroupLexicon,
    journal_path: PathBuf,
    candidates: Vec<CandidateGroup>,
    distances: BTreeMap<String, f64>,
    model: EsfModel,
    sentences: BTreeMap<String, Sentence>,
    lang_of: BTreeMap<String, String>,
    embedder: Arc<SharedEmbedder>,
}

impl ReviewState {
    /// Loads the review queue and filter model written by the pipeline and
    /// the current journal.
    pub fn load(cfg: Config) -> anyhow::Result<ReviewState> {
        let journal_path = cfg
            .journal_path()
            .ok_or_else(|| anyhow::anyhow!("the review server needs lexicon.journal in the configuration"))?;
        let base = base_lexicon(&cfg)?;
        let lexicon = groupscope_core::lexicon::replay(&base, &read_journal(&cfg)?)?;
        for name in [REVIEW_QUEUE, ESF_MODEL, CORPUS, SENTENCES] {
            if !cfg.output(name).exists() {
                anyhow::bail!("{} is missing; run the pipeline through esf-filter first", cfg.output(name).display());
            }
        }
        let candidates: Vec<CandidateGroup> = fsio::read_jsonl(&cfg.output(REVIEW_QUEUE))?;
        let model: EsfModel = fsio::read_json(&cfg.output(ESF_MODEL))?;
        let corpus = read_corpus_jsonl(&cfg.output(CORPUS))?;
        let sentences: Vec<Sentence> = fsio::read_jsonl(&cfg.output(SENTENCES))?;
        let embedder = Arc::new(backends::embedder(&cfg)?);
        let mut state = ReviewState {
            lang_of: languages_by_doc(&corpus),
            sentences: sentences.into_iter().map(|s| (s.sentence_id.clone(), s)).collect(),
            cfg,
            lexicon,
            journal_path,
            candidates,
            distances: BTreeMap::new(),
            model,
            embedder,
        };
        state.rescore()?;
        Ok(state)
    }

    fn rescore(&mut self) -> anyhow::Result<()> {
        self.distances.clear();
        for c in &mut self.candidates {
            if let Some(e) = &c.embedding {
                self.distances.insert(c.candidate_id.clone(), self.model.distance(&e.vector)?);
                c.verdicts = self
                    .model
                    .classify_all(&e.vector)?
                    .into_iter()
                    .map(|v| (v.classifier, v))
                    .collect();
            }
        }
        Ok(())
    }

    /// Review status follows from the journal: the latest decision on a
    /// candidate's phrase.
    fn status(&self, c: &CandidateGroup) -> ReviewStatus {
        self.lexicon
            .provenance_journal
            .iter()
            .rev()
            .find(|e| normalize(&e.surface_phrase) == c.surface_phrase)
            .map_or(ReviewStatus::Pending, |e| match e.decision {
                Decision::Reject => ReviewStatus::Rejected,
                _ => ReviewStatus::Accepted,
            })
    }

    fn distance(&self, c: &CandidateGroup) -> Option<f64> {
        self.distances.get(&c.candidate_id).copied()
    }

    /// Candidates by ascending distance; missing distances last, ties by id.
    fn ranked(&self) -> Vec<&CandidateGroup> {
        let mut v: Vec<&CandidateGroup> = self.candidates.iter().collect();
        v.sort_by(|a, b| {
            let da = self.distance(a).unwrap_or(f64::INFINITY);
            let db = self.distance(b).unwrap_or(f64::INFINITY);
            da.total_cmp(&db).then_with(|| a.candidate_id.cmp(&b.candidate_id))
        });
        v
    }

    fn samples(&self, c: &CandidateGroup) -> Vec<Sample> {
        let mut out = Vec::new();
        for sid in c.sentence_ids.iter().take(SAMPLES) {
            let Some(s) = self.sentences.get(sid) else { continue };
            let lang = self.lang_of.get(&s.doc_id).cloned().unwrap_or_default();
            let probe = single_phrase_lexicon(&c.surface_phrase, &lang);
            let spans = Matcher::new(&probe, &lang).find(s).into_iter().map(|m| m.char_span).collect();
            out.push(Sample {
                sentence_id: sid.clone(),
                text: s.text.clone(),
                spans,
            });
        }
        out
    }

    fn view(&self, c: &CandidateGroup) -> CandidateView {
        CandidateView {
            candidate_id: c.candidate_id.clone(),
            surface_phrase: c.surface_phrase.clone(),
            source: c.source,
            occurrence_count: c.occurrence_count,
            distance: self.distance(c),
            verdicts: c.verdicts.clone(),
            status: self.status(c),
            samples: self.samples(c),
        }
    }

    fn pending_order(&self) -> Vec<String> {
        self.ranked()
            .into_iter()
            .filter(|c| self.status(c) == ReviewStatus::Pending)
            .map(|c| c.candidate_id.clone())
            .collect()
    }

    pub fn lexicon(&self) -> &GroupLexicon {
        &self.lexicon
    }

    pub fn model(&self) -> &EsfModel {
        &self.model
    }
}

fn single_phrase_lexicon(phrase: &str, lang: &str) -> GroupLexicon {
    let entry = GroupEntry {
        group_id: "candidate".into(),
        canonical_label: phrase.into(),
        label_language: lang.into(),
        category: Category::Other,
        synonyms: BTreeMap::from([(lang.to_string(), [phrase.to_string()].into())]),
    };
    GroupLexicon {
        entries: BTreeMap::from([("candidate".to_string(), entry)]),
        version: 0,
        provenance_journal: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sentence_id: String,
    pub text: String,
    /// Character spans of the phrase in `text`.
    pub spans: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub candidate_id: String,
    pub surface_phrase: String,
    pub source: CandidateSource,
    pub occurrence_count: usize,
    pub distance: Option<f64>,
    pub verdicts: BTreeMap<Classifier, Verdict>,
    pub status: ReviewStatus,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    Distance,
    Occurrences,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ListQuery {
    pub status: Option<ReviewStatus>,
    #[serde(default)]
    pub sort: SortKey,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub decision: Decision,
    #[serde(default)]
    pub target_group_id: Option<String>,
    pub reviewer: String,
    /// Rejects the decision if the lexicon has moved past this version.
    #[serde(default)]
    pub expected_version: Option<u64>,
    /// Defaults to the majority language of the candidate's documents.
    #[serde(default)]
    pub language: Option<String>,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
    lexicon_version: u64,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.message, "lexicon_version": self.lexicon_version});
        (self.status, Json(body)).into_response()
    }
}

type Shared = Arc<Mutex<ReviewState>>;

fn err(status: StatusCode, message: impl Into<String>, st: &ReviewState) -> ApiError {
    ApiError {
        status,
        message: message.into(),
        lexicon_version: st.lexicon.version,
    }
}

async fn list_candidates(
    State(state): State<Shared>,
    query: Result<Query<ListQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let st = state.lock().await;
    let Query(q) = query.map_err(|e| err(StatusCode::BAD_REQUEST, e.body_text(), &st))?;
    let mut items: Vec<&CandidateGroup> = st.ranked();
    if q.sort == SortKey::Occurrences {
        items.sort_by(|a, b| {
            b.occurrence_count
                .cmp(&a.occurrence_count)
                .then_with(|| a.candidate_id.cmp(&b.candidate_id))
        });
    }
    let views: Vec<CandidateView> = items
        .into_iter()
        .filter(|c| q.status.is_none_or(|s| st.status(c) == s))
        .take(q.limit.unwrap_or(usize::MAX))
        .map(|c| st.view(c))
        .collect();
    Ok(Json(json!({"lexicon_version": st.lexicon.version, "candidates": views})))
}

fn lexicon_status(e: &LexiconError) -> StatusCode {
    match e {
        LexiconError::OutOfOrder { .. } => StatusCode::CONFLICT,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

async fn decide(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let mut st = state.lock().await;
    let Json(req) = body.map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, e.body_text(), &st))?;
    let Some(idx) = st.candidates.iter().position(|c| c.candidate_id == id) else {
        return Err(err(StatusCode::NOT_FOUND, format!("unknown candidate {id}"), &st));
    };
    let cand = &st.candidates[idx];
    let current = st.status(cand);
    if current != ReviewStatus::Pending {
        return Err(err(StatusCode::CONFLICT, format!("candidate {id} is already {current:?}"), &st));
    }
    if let Some(v) = req.expected_version.filter(|v| *v != st.lexicon.version) {
        return Err(err(
            StatusCode::CONFLICT,
            format!("lexicon is at version {}, not {v}", st.lexicon.version),
            &st,
        ));
    }
    if req.reviewer.trim().is_empty() {
        return Err(err(StatusCode::UNPROCESSABLE_ENTITY, "reviewer must be non-empty", &st));
    }
    let event = ExpansionEvent {
        event_id: st.lexicon.provenance_journal.last().map_or(1, |e| e.event_id + 1),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        surface_phrase: cand.surface_phrase.clone(),
        language: req.language.clone().unwrap_or_else(|| candidate_language(cand, &st.lang_of)),
        decision: req.decision,
        target_group_id: req.target_group_id.clone(),
        reviewer: req.reviewer.clone(),
    };
    let next = apply_expansion(&st.lexicon, &event).map_err(|e| err(lexicon_status(&e), e.to_string(), &st))?;
    // Journal first: on failure the in-memory state stays untouched.
    fsio::append_jsonl(&st.journal_path, &event)
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, format!("journal append failed: {e}"), &st))?;
    st.lexicon = next;
    let view = st.view(&st.candidates[idx]);
    Ok(Json(json!({"lexicon_version": st.lexicon.version, "event": event, "candidate": view})))
}

async fn recompute(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    let mut st = state.lock().await;
    let previous_order = st.pending_order();
    let previous_digest = st.model.digest();
    let lexicon = st.lexicon.clone();
    let embedder = Arc::clone(&st.embedder);
    let embedded = tokio::task::spawn_blocking(move || {
        let mut warnings = Vec::new();
        embed_whitelist(embedder.as_ref().as_ref(), &lexicon, &mut warnings).map(|v| (v, warnings))
    })
    .await
    .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), &st))?;
    let (whitelist, warnings) = embedded.map_err(|e| err(StatusCode::BAD_GATEWAY, e.to_string(), &st))?;
    let model = fit_esf(&st.cfg, &whitelist).map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), &st))?;
    let old_model = std::mem::replace(&mut st.model, model);
    if let Err(e) = st.rescore() {
        st.model = old_model;
        st.rescore().ok();
        return Err(err(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), &st));
    }
    let dir = st.cfg.output(REVIEW_DIR);
    let pending: Vec<CandidateGroup> = st
        .ranked()
        .into_iter()
        .filter(|c| st.status(c) == ReviewStatus::Pending)
        .cloned()
        .collect();
    let write = fsio::write_atomic(&dir.join(ESF_MODEL), &crate::pipeline::pretty_json(&st.model))
        .and_then(|_| fsio::write_atomic(&dir.join("queue.jsonl"), &fsio::to_jsonl(&pending)));
    if let Err(e) = write {
        return Err(err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), &st));
    }
    let order = st.pending_order();
    Ok(Json(json!({
        "lexicon_version": st.lexicon.version,
        "model_digest": st.model.digest(),
        "previous_model_digest": previous_digest,
        "whitelist_size": whitelist.len(),
        "pending_order": order,
        "order_changed": order != previous_order,
        "warnings": warnings,
    })))
}

async fn lexicon(State(state): State<Shared>) -> Json<Value> {
    let st = state.lock().await;
    let lex: Value = serde_json::from_str(&st.lexicon.to_json()).expect("lexicon serializes");
    Json(json!({
        "lexicon_version": st.lexicon.version,
        "lexicon": lex,
        "journal": st.lexicon.provenance_journal,
    }))
}

async fn stats(State(state): State<Shared>) -> Json<Value> {
    let st = state.lock().await;
    let mut counts: BTreeMap<ReviewStatus, usize> = BTreeMap::new();
    for c in &st.candidates {
        *counts.entry(st.status(c)).or_default() += 1;
    }
    Json(json!({
        "lexicon_version": st.lexicon.version,
        "candidates": st.candidates.len(),
        "pending": counts.get(&ReviewStatus::Pending).copied().unwrap_or(0),
        "accepted": counts.get(&ReviewStatus::Accepted).copied().unwrap_or(0),
        "rejected": counts.get(&ReviewStatus::Rejected).copied().unwrap_or(0),
        "journal_events": st.lexicon.provenance_journal.len(),
        "synonyms": st.lexicon.synonym_count(),
        "model_digest": st.model.digest(),
    }))
}

pub fn router(state: Arc<Mutex<ReviewState>>) -> Router {
    Router::new()
        .route("/api/candidates", get(list_candidates))
        .route("/api/candidates/{id}/decision", post(decide))
        .route("/api/recompute", post(recompute))
        .route("/api/lexicon", get(lexicon))
        .route("/api/stats", get(stats))
        .with_state(state)
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

/// Serves until Ctrl-C.
pub fn serve_blocking(cfg: Config, addr: &str) -> anyhow::Result<()> {
    // Backends may own blocking clients that must not be dropped inside the
    // runtime, so state is created and released out here.
    let state = Arc::new(Mutex::new(ReviewState::load(cfg)?));
    let app = router(Arc::clone(&state));
    let rt = runtime()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("review API listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                tokio::signal::ctrl_c().await.ok();
            })
            .await
    })?;
    drop(rt);
    drop(state);
    Ok(())
}

/// A server on its own thread, stopped when the handle is dropped.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub state: Arc<Mutex<ReviewState>>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts a server on `addr` (port 0 picks a free port) in a background
/// thread.
pub fn spawn(cfg: Config, addr: &str) -> anyhow::Result<ServerHandle> {
    let state = Arc::new(Mutex::new(ReviewState::load(cfg)?));
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let local = std_listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(Arc::clone(&state));
    let rt = runtime()?;
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    rx.await.ok();
                })
                .await
                .ok();
        });
    });
    Ok(ServerHandle {
        addr: local,
        state,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
