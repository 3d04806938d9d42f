//! Panel construction with lagged electoral covariates and pooled OLS with
//! party fixed effects and election-clustered (CR1) standard errors.

mod linalg;

pub use linalg::{cluster_covariance, least_squares, DependentColumn, LeastSquares, Matrix, RANK_TOLERANCE};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{election_id, Corpus, PartyFamily};
use crate::metrics::SimilarityRecord;

/// A party's vote share at one election, from an external series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub party_id: String,
    pub country: String,
    pub election_date: NaiveDate,
    pub vote_share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub party_id: String,
    pub family: PartyFamily,
    pub country: String,
    pub election_id: String,
    pub election_date: NaiveDate,
    pub rr_party_id: String,
    pub similarity: f64,
    pub rr_support_lag1: Option<f64>,
    pub centre_vote_diff: Option<f64>,
    pub gov_party: Option<u8>,
    pub centre_vote_share: Option<f64>,
    pub cluster_id: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PanelError {
    #[error("vote history for {party_id} is not in date order at {date}")]
    UnorderedHistory { party_id: String, date: NaiveDate },
    #[error("conflicting vote shares for {party_id} at {date}: {first} vs {second}")]
    ConflictingVoteShare {
        party_id: String,
        date: NaiveDate,
        first: f64,
        second: f64,
    },
    #[error("similarity record {record} references unknown document {doc_id}")]
    UnknownDocument { record: String, doc_id: String },
    #[error("duplicate panel row for party {party_id} in election {election_id}")]
    DuplicateRow { party_id: String, election_id: String },
}

/// Joins similarity records with corpus metadata and vote history.
///
/// Lags follow the country's election sequence (all dates seen in the corpus
/// or the history): `rr_support_lag1` is the dyad's radical-right party's
/// share at the previous election, and `centre_vote_diff = v(t−1) − v(t−2)`
/// for the centre party, so a negative value means it lost votes.
pub fn build_panel(
    similarities: &[SimilarityRecord],
    corpus: &Corpus,
    history: &[VoteRecord],
) -> Result<Vec<PanelRow>, PanelError> {
    let mut last_seen: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    for r in history {
        if let Some(prev) = last_seen.get(r.party_id.as_str()) {
            if r.election_date <= *prev {
                return Err(PanelError::UnorderedHistory {
                    party_id: r.party_id.clone(),
                    date: r.election_date,
                });
            }
        }
        last_seen.insert(&r.party_id, r.election_date);
    }

    let mut votes: BTreeMap<(String, NaiveDate), f64> = BTreeMap::new();
    let mut seq: BTreeMap<String, BTreeSet<NaiveDate>> = BTreeMap::new();
    let sources = history
        .iter()
        .map(|r| (&r.party_id, &r.country, r.election_date, Some(r.vote_share_pct)))
        .chain(
            corpus
                .manifestos
                .iter()
                .map(|m| (&m.party_id, &m.country, m.election_date, m.vote_share_pct)),
        );
    for (party, country, date, share) in sources {
        seq.entry(country.clone()).or_default().insert(date);
        let Some(share) = share else { continue };
        match votes.get(&(party.clone(), date)) {
            Some(&old) if old != share => {
                return Err(PanelError::ConflictingVoteShare {
                    party_id: party.clone(),
                    date,
                    first: old,
                    second: share,
                })
            }
            _ => {
                votes.insert((party.clone(), date), share);
            }
        }
    }

    let mut rows = Vec::new();
    let mut keys: BTreeSet<(String, String)> = BTreeSet::new();
    for rec in similarities {
        let record = format!("{}:{}:{}", rec.election_id, rec.centre_doc_id, rec.rr_doc_id);
        let lookup = |doc: &str| {
            corpus.get(doc).ok_or_else(|| PanelError::UnknownDocument {
                record: record.clone(),
                doc_id: String::from(doc),
            })
        };
        let centre = lookup(&rec.centre_doc_id)?;
        let rr = lookup(&rec.rr_doc_id)?;
        let t = centre.election_date;
        let dates: Vec<NaiveDate> = seq[&centre.country].range(..t).rev().take(2).copied().collect();
        let vote = |party: &str, d: Option<&NaiveDate>| d.and_then(|d| votes.get(&(String::from(party), *d)).copied());
        let rr_support_lag1 = vote(&rr.party_id, dates.first());
        let centre_vote_diff = match (vote(&centre.party_id, dates.first()), vote(&centre.party_id, dates.get(1))) {
            (Some(v1), Some(v2)) => Some(v1 - v2),
            _ => None,
        };
        let eid = election_id(&centre.country, t);
        if !keys.insert((centre.party_id.clone(), eid.clone())) {
            return Err(PanelError::DuplicateRow {
                party_id: centre.party_id.clone(),
                election_id: eid,
            });
        }
        rows.push(PanelRow {
            party_id: centre.party_id.clone(),
            family: centre.party_family,
            country: centre.country.clone(),
            election_id: eid.clone(),
            election_date: t,
            rr_party_id: rr.party_id.clone(),
            similarity: rec.similarity,
            rr_support_lag1,
            centre_vote_diff,
            gov_party: centre.in_government_prior.map(u8::from),
            centre_vote_share: centre.vote_share_pct,
            cluster_id: eid,
        });
    }
    rows.sort_by(|a, b| {
        a.election_date
            .cmp(&b.election_date)
            .then_with(|| a.country.cmp(&b.country))
            .then_with(|| a.party_id.cmp(&b.party_id))
    });
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    RrSupportLag1,
    CentreVoteDiff,
    /// `rr_support_lag1 × centre_vote_diff`
    RrSupportXVoteDiff,
    GovParty,
    CentreVoteShare,
}

impl Term {
    pub const ALL: [Term; 5] = [
        Term::RrSupportLag1,
        Term::CentreVoteDiff,
        Term::RrSupportXVoteDiff,
        Term::GovParty,
        Term::CentreVoteShare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::RrSupportLag1 => "rr_support_lag1",
            Term::CentreVoteDiff => "centre_vote_diff",
            Term::RrSupportXVoteDiff => "rr_support_lag1:centre_vote_diff",
            Term::GovParty => "gov_party",
            Term::CentreVoteShare => "centre_vote_share",
        }
    }

    pub fn value(self, row: &PanelRow) -> Option<f64> {
        match self {
            Term::RrSupportLag1 => row.rr_support_lag1,
            Term::CentreVoteDiff => row.centre_vote_diff,
            Term::RrSupportXVoteDiff => Some(row.rr_support_lag1? * row.centre_vote_diff?),
            Term::GovParty => row.gov_party.map(f64::from),
            Term::CentreVoteShare => row.centre_vote_share,
        }
    }
}

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub terms: Vec<Term>,
    pub party_fe: bool,
}

/// The three specifications: RR support, centre vote difference, and both
/// with their interaction; each with government status, vote share and party
/// fixed effects.
pub fn standard_specs() -> Vec<ModelSpec> {
    let spec = |name: &str, terms: &[Term]| ModelSpec {
        name: String::from(name),
        terms: terms.to_vec(),
        party_fe: true,
    };
    vec![
        spec("(1)", &[Term::RrSupportLag1, Term::GovParty, Term::CentreVoteShare]),
        spec("(2)", &[Term::CentreVoteDiff, Term::GovParty, Term::CentreVoteShare]),
        spec(
            "(3)",
            &[
                Term::RrSupportLag1,
                Term::CentreVoteDiff,
                Term::RrSupportXVoteDiff,
                Term::GovParty,
                Term::CentreVoteShare,
            ],
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub model: String,
    pub estimates: Vec<Estimate>,
    pub fixed_effect_terms: Vec<String>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub r2: f64,
    pub adj_r2: f64,
    /// Classical (non-robust) overall F statistic.
    pub f_stat: f64,
    pub df_model: usize,
    pub df_resid: usize,
    pub rss: f64,
    pub tss: f64,
}

impl OlsFit {
    pub fn get(&self, term: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.term == term)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OlsError {
    #[error("{n} observations cannot identify {k} parameters")]
    TooFewObservations { n: usize, k: usize },
    #[error("clustered errors need at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("design matrix is rank deficient: column {column} is linearly dependent")]
    RankDeficiency { column: String },
}

/// OLS of `y` on `x` with CR1 cluster-robust standard errors. The first
/// column of `x` must be the intercept for R² and F to be meaningful.
pub fn ols(model: &str, names: &[String], x: &Matrix, y: &[f64], clusters: &[String]) -> Result<OlsFit, OlsError> {
    let (n, k) = (x.rows, x.cols);
    if n <= k {
        return Err(OlsError::TooFewObservations { n, k });
    }
    let labels: BTreeSet<&String> = clusters.iter().collect();
    if labels.len() < 2 {
        return Err(OlsError::TooFewClusters(labels.len()));
    }
    let index: BTreeMap<&String, usize> = labels.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    let cl: Vec<usize> = clusters.iter().map(|c| index[c]).collect();
    let ls = least_squares(x, y).map_err(|DependentColumn(j)| OlsError::RankDeficiency {
        column: names[j].clone(),
    })?;
    let cov = cluster_covariance(x, &ls.residuals, &ls.xtx_inv, &cl);
    let rss: f64 = ls.residuals.iter().map(|e| e * e).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let df_model = k - 1;
    let df_resid = n - k;
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_resid as f64;
    let f_stat = if df_model == 0 {
        f64::NAN
    } else if rss == 0.0 {
        f64::INFINITY
    } else {
        ((tss - rss) / df_model as f64) / (rss / df_resid as f64)
    };
    let estimates = names
        .iter()
        .enumerate()
        .map(|(j, name)| Estimate {
            term: name.clone(),
            estimate: ls.beta[j],
            std_error: libm::sqrt(cov.get(j, j).max(0.0)),
        })
        .collect();
    Ok(OlsFit {
        model: String::from(model),
        estimates,
        fixed_effect_terms: Vec::new(),
        n_obs: n,
        n_clusters: index.len(),
        r2,
        adj_r2,
        f_stat,
        df_model,
        df_resid,
        rss,
        tss,
    })
}

/// Rows with every value the specification needs.
pub fn listwise<'a>(panel: &'a [PanelRow], spec: &ModelSpec) -> Vec<&'a PanelRow> {
    panel
        .iter()
        .filter(|r| r.similarity.is_finite() && spec.terms.iter().all(|t| t.value(r).is_some()))
        .collect()
}

pub fn fe_term(party_id: &str) -> String {
    format!("party[{party_id}]")
}

/// Design matrix for `spec`: intercept, terms, then one dummy per party
/// except the lexicographically first.
pub fn design(rows: &[&PanelRow], spec: &ModelSpec) -> (Vec<String>, Vec<String>, Matrix, Vec<f64>) {
    let parties: BTreeSet<&str> = rows.iter().map(|r| r.party_id.as_str()).collect();
    let dummies: Vec<&str> = if spec.party_fe {
        parties.into_iter().skip(1).collect()
    } else {
        Vec::new()
    };
    let mut names = vec![String::from(INTERCEPT)];
    names.extend(spec.terms.iter().map(|t| String::from(t.name())));
    let fe_names: Vec<String> = dummies.iter().map(|p| fe_term(p)).collect();
    names.extend(fe_names.iter().cloned());
    let k = names.len();
    let mut x = Matrix::zeros(rows.len(), k);
    for (i, r) in rows.iter().enumerate() {
        x.set(i, 0, 1.0);
        for (j, t) in spec.terms.iter().enumerate() {
            x.set(i, 1 + j, t.value(r).expect("listwise-complete row"));
        }
        for (j, p) in dummies.iter().enumerate() {
            if r.party_id == *p {
                x.set(i, 1 + spec.terms.len() + j, 1.0);
            }
        }
    }
    let y = rows.iter().map(|r| r.similarity).collect();
    (names, fe_names, x, y)
}

/// Pooled OLS with party dummies and election-clustered standard errors,
/// after listwise deletion.
pub fn fit_ols_fe(panel: &[PanelRow], spec: &ModelSpec) -> Result<OlsFit, OlsError> {
    let rows = listwise(panel, spec);
    let (names, fe, x, y) = design(&rows, spec);
    let clusters: Vec<String> = rows.iter().map(|r| r.cluster_id.clone()).collect();
    let mut fit = ols(&spec.name, &names, &x, &y, &clusters)?;
    fit.fixed_effect_terms = fe;
    Ok(fit)
}
