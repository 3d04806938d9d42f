use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::ExtractionResult;
use crate::digest::sha256_hex;
use crate::embedding::EmbeddingVector;
use crate::esf::{Classifier, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    LlmExplicit,
    LlmImplicit,
}

impl CandidateSource {
    fn tag(self) -> &'static str {
        match self {
            CandidateSource::LlmExplicit => "llm_explicit",
            CandidateSource::LlmImplicit => "llm_implicit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("candidate {candidate_id} is already {current:?}")]
pub struct StatusError {
    pub candidate_id: String,
    pub current: ReviewStatus,
}

/// A phrase proposed by the model, pooled over the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub candidate_id: String,
    pub surface_phrase: String,
    pub source: CandidateSource,
    pub sentence_ids: BTreeSet<String>,
    pub occurrence_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    #[serde(default)]
    pub verdicts: BTreeMap<Classifier, Verdict>,
    pub review_status: ReviewStatus,
}

impl CandidateGroup {
    pub fn id_for(phrase: &str, source: CandidateSource) -> String {
        let h = sha256_hex(format!("{}\u{0}{}", source.tag(), phrase).as_bytes());
        format!("cand-{}", &h[..12])
    }

    /// Moves a pending candidate to accepted or rejected.
    pub fn decide(&mut self, to: ReviewStatus) -> Result<(), StatusError> {
        if self.review_status != ReviewStatus::Pending || to == ReviewStatus::Pending {
            return Err(StatusError {
                candidate_id: self.candidate_id.clone(),
                current: self.review_status,
            });
        }
        self.review_status = to;
        Ok(())
    }
}

/// Pools explicit and implicit phrases by `(phrase, source)`.
///
/// Order: descending occurrence count, then phrase, then source.
pub fn aggregate(results: &[ExtractionResult]) -> Vec<CandidateGroup> {
    let mut pooled: BTreeMap<(String, CandidateSource), (BTreeSet<String>, usize)> = BTreeMap::new();
    for r in results {
        let tagged = r
            .explicit_groups
            .iter()
            .map(|p| (p, CandidateSource::LlmExplicit))
            .chain(r.implicit_groups.iter().map(|p| (p, CandidateSource::LlmImplicit)));
        for (phrase, source) in tagged {
            let e = pooled.entry((phrase.clone(), source)).or_default();
            e.0.insert(r.sentence_id.clone());
            e.1 += 1;
        }
    }
    let mut out: Vec<CandidateGroup> = pooled
        .into_iter()
        .map(|((phrase, source), (sentence_ids, count))| CandidateGroup {
            candidate_id: CandidateGroup::id_for(&phrase, source),
            surface_phrase: phrase,
            source,
            sentence_ids,
            occurrence_count: count,
            embedding: None,
            verdicts: BTreeMap::new(),
            review_status: ReviewStatus::Pending,
        })
        .collect();
    out.sort_by(|a, b| {
        b.occurrence_count
            .cmp(&a.occurrence_count)
            .then_with(|| a.surface_phrase.cmp(&b.surface_phrase))
            .then_with(|| a.source.cmp(&b.source))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::ExtractionMeta;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn result(sid: &str, explicit: &[&str], implicit: &[&str]) -> ExtractionResult {
        ExtractionResult {
            sentence_id: sid.into(),
            explicit_groups: explicit.iter().map(|s| s.to_string()).collect(),
            implicit_groups: implicit.iter().map(|s| s.to_string()).collect(),
            others: vec![],
            raw_response: String::new(),
            salvage_applied: false,
            meta: ExtractionMeta {
                instruction_id: "t".into(),
                temperature: 0.0,
                max_tokens: 256,
                attempts: 1,
            },
        }
    }

    #[test]
    fn dedups_across_sentences() {
        let c = aggregate(&[result("a:0", &["bauern"], &[]), result("a:1", &["bauern"], &[])]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].occurrence_count, 2);
        assert_eq!(c[0].sentence_ids.len(), 2);
        assert_eq!(c[0].review_status, ReviewStatus::Pending);
    }

    #[test]
    fn source_is_part_of_key() {
        let c = aggregate(&[result("a:0", &["bauern"], &[]), result("a:1", &[], &["bauern"])]);
        assert_eq!(c.len(), 2);
        assert_ne!(c[0].source, c[1].source);
        assert_ne!(c[0].candidate_id, c[1].candidate_id);
    }

    #[test]
    fn empty_input() {
        assert!(aggregate(&[]).is_empty());
    }

    #[test]
    fn ordering_is_by_count_then_phrase() {
        let c = aggregate(&[
            result("a:0", &["zeta", "alpha"], &[]),
            result("a:1", &["zeta"], &[]),
            result("a:2", &["beta"], &[]),
        ]);
        let phrases: Vec<&str> = c.iter().map(|g| g.surface_phrase.as_str()).collect();
        assert_eq!(phrases, vec!["zeta", "alpha", "beta"]);
    }

    #[test]
    fn status_transitions_only_from_pending() {
        let mut c = aggregate(&[result("a:0", &["bauern"], &[])]).remove(0);
        c.decide(ReviewStatus::Accepted).unwrap();
        assert!(c.decide(ReviewStatus::Rejected).is_err());
        assert_eq!(c.review_status, ReviewStatus::Accepted);
    }

    proptest! {
        #[test]
        fn counts_sum_to_pairs(rows in prop::collection::vec(
            (prop::collection::vec("[a-c]{1,2}", 0..4), prop::collection::vec("[a-c]{1,2}", 0..4)), 0..12)
        ) {
            let results: Vec<ExtractionResult> = rows.iter().enumerate().map(|(i, (e, m))| {
                let mut e = e.clone(); e.sort(); e.dedup();
                let mut m = m.clone(); m.sort(); m.dedup();
                let er: Vec<&str> = e.iter().map(String::as_str).collect();
                let mr: Vec<&str> = m.iter().map(String::as_str).collect();
                result(&alloc::format!("d:{i}"), &er, &mr)
            }).collect();
            let pairs: usize = results.iter().map(|r| r.explicit_groups.len() + r.implicit_groups.len()).sum();
            let total: usize = aggregate(&results).iter().map(|c| c.occurrence_count).sum();
            prop_assert_eq!(total, pairs);
        }
    }
}
