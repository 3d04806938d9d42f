//! Group salience per manifesto, the dyadic similarity index and keyness
//! contrasts between pooled group counts.

mod keyness;

pub use keyness::{g2, keyness, Direction, KeynessError, KeynessRow};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Manifesto, PartyFamily, Sentence};
use crate::diag::Warnings;
use crate::lexicon::GroupMention;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceProfile {
    pub doc_id: String,
    pub total_sentences: usize,
    /// Sentences with at least one group mention.
    pub denominator_sentences: usize,
    /// Per group: number of sentences mentioning it.
    pub group_sentences: BTreeMap<String, u64>,
    pub raw_salience: BTreeMap<String, f64>,
    pub share: BTreeMap<String, f64>,
}

impl SalienceProfile {
    pub fn is_empty(&self) -> bool {
        self.denominator_sentences == 0
    }
}

/// Salience of each group in one document. Mentions whose sentence is not in
/// `sentences` are ignored.
pub fn salience(doc_id: &str, mentions: &[GroupMention], sentences: &[Sentence]) -> SalienceProfile {
    let known: BTreeSet<&str> = sentences
        .iter()
        .filter(|s| s.doc_id == doc_id)
        .map(|s| s.sentence_id.as_str())
        .collect();
    let mut pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut with_mention: BTreeSet<&str> = BTreeSet::new();
    for m in mentions {
        if known.contains(m.sentence_id.as_str()) {
            pairs.insert((m.group_id.as_str(), m.sentence_id.as_str()));
            with_mention.insert(m.sentence_id.as_str());
        }
    }
    let mut group_sentences: BTreeMap<String, u64> = BTreeMap::new();
    for (g, _) in &pairs {
        *group_sentences.entry(String::from(*g)).or_default() += 1;
    }
    let denominator = with_mention.len();
    let pair_total = pairs.len() as f64;
    let mut raw_salience = BTreeMap::new();
    let mut share = BTreeMap::new();
    if denominator > 0 {
        for (g, &c) in &group_sentences {
            raw_salience.insert(g.clone(), c as f64 / denominator as f64);
            share.insert(g.clone(), c as f64 / pair_total);
        }
    }
    SalienceProfile {
        doc_id: String::from(doc_id),
        total_sentences: known.len(),
        denominator_sentences: denominator,
        group_sentences,
        raw_salience,
        share,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// L1 distance between the share vectors over the combined share mass.
    #[default]
    ShareRenormalized,
    /// Half the L1 distance between raw saliences, clamped to [0, 1].
    RawSentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub election_id: String,
    pub centre_doc_id: String,
    pub rr_doc_id: String,
    pub dissimilarity: f64,
    pub similarity: f64,
    pub mode: SimilarityMode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("similarity undefined: {a} or {b} has no group mentions")]
    UndefinedSimilarity { a: String, b: String },
}

/// `Σ_g |v_a(g) − v_b(g)| / 2` over the union of groups.
pub fn dissimilarity(
    a: &SalienceProfile,
    b: &SalienceProfile,
    mode: SimilarityMode,
    warnings: &mut Warnings,
) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::UndefinedSimilarity {
            a: a.doc_id.clone(),
            b: b.doc_id.clone(),
        });
    }
    let (va, vb) = match mode {
        SimilarityMode::ShareRenormalized => (&a.share, &b.share),
        SimilarityMode::RawSentence => (&a.raw_salience, &b.raw_salience),
    };
    let groups: BTreeSet<&String> = va.keys().chain(vb.keys()).collect();
    let mut sum = 0.0;
    let mut mass = 0.0;
    for g in groups {
        let x = va.get(g).copied().unwrap_or(0.0);
        let y = vb.get(g).copied().unwrap_or(0.0);
        sum += libm::fabs(x - y);
        mass += x + y;
    }
    // Shares sum to 1 only up to rounding; dividing by the summed mass keeps
    // disjoint profiles at exactly 1.
    let d = match mode {
        SimilarityMode::ShareRenormalized => sum / mass,
        SimilarityMode::RawSentence => sum / 2.0,
    };
    if d > 1.0 {
        if mode == SimilarityMode::RawSentence {
            warnings.similarity_clamped += 1;
            warnings.push(format!(
                "dissimilarity {d} between {} and {} clamped to 1",
                a.doc_id, b.doc_id
            ));
        }
        return Ok(1.0);
    }
    Ok(d)
}

pub fn similarity(
    election_id: &str,
    centre: &SalienceProfile,
    rr: &SalienceProfile,
    mode: SimilarityMode,
    warnings: &mut Warnings,
) -> Result<SimilarityRecord, MetricsError> {
    let d = dissimilarity(centre, rr, mode, warnings)?;
    Ok(SimilarityRecord {
        election_id: String::from(election_id),
        centre_doc_id: centre.doc_id.clone(),
        rr_doc_id: rr.doc_id.clone(),
        dissimilarity: d,
        similarity: 100.0 * (1.0 - d),
        mode,
    })
}

/// A centre party paired with the radical-right competitor of one election.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dyad {
    pub election_id: String,
    pub family: PartyFamily,
    pub centre_doc_id: String,
    pub rr_doc_id: String,
}

fn strongest<'a>(ms: &[&'a Manifesto], family: PartyFamily) -> Option<&'a Manifesto> {
    ms.iter()
        .copied()
        .filter(|m| m.party_family == family)
        .max_by(|a, b| {
            let va = a.vote_share_pct.unwrap_or(f64::NEG_INFINITY);
            let vb = b.vote_share_pct.unwrap_or(f64::NEG_INFINITY);
            // On equal shares the smaller doc_id wins.
            va.total_cmp(&vb).then_with(|| b.doc_id.cmp(&a.doc_id))
        })
}

/// Per election, the strongest centre-left and centre-right manifestos (by
/// vote share) each paired with the strongest radical-right manifesto.
/// Elections without a radical-right party yield no dyads.
pub fn select_dyads(corpus: &Corpus) -> alloc::vec::Vec<Dyad> {
    let mut by_election: BTreeMap<String, alloc::vec::Vec<&Manifesto>> = BTreeMap::new();
    for m in &corpus.manifestos {
        by_election.entry(m.election_id()).or_default().push(m);
    }
    let mut out = alloc::vec::Vec::new();
    for (eid, ms) in by_election {
        let Some(rr) = strongest(&ms, PartyFamily::RadicalRight) else { continue };
        for family in [PartyFamily::CentreLeft, PartyFamily::CentreRight] {
            if let Some(c) = strongest(&ms, family) {
                out.push(Dyad {
                    election_id: eid.clone(),
                    family,
                    centre_doc_id: c.doc_id.clone(),
                    rr_doc_id: rr.doc_id.clone(),
                });
            }
        }
    }
    out
}

/// Sums per-group sentence counts over several profiles.
pub fn pool_counts<'a>(profiles: impl IntoIterator<Item = &'a SalienceProfile>) -> BTreeMap<String, u64> {
    let mut out: BTreeMap<String, u64> = BTreeMap::new();
    for p in profiles {
        for (g, &c) in &p.group_sentences {
            *out.entry(g.clone()).or_default() += c;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sentence_id;
    use crate::lexicon::MentionMethod;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn sentences(doc: &str, n: usize) -> Vec<Sentence> {
        (0..n)
            .map(|i| Sentence {
                sentence_id: sentence_id(doc, i),
                doc_id: doc.into(),
                index: i,
                text: format!("s{i}"),
            })
            .collect()
    }

    fn mention(doc: &str, i: usize, g: &str) -> GroupMention {
        GroupMention {
            sentence_id: sentence_id(doc, i),
            group_id: g.into(),
            matched_surface: g.into(),
            char_span: [0, 1],
            method: MentionMethod::Dictionary,
        }
    }

    fn profile(doc: &str, shares: &[(&str, f64)]) -> SalienceProfile {
        SalienceProfile {
            doc_id: doc.into(),
            total_sentences: 1,
            denominator_sentences: 1,
            group_sentences: BTreeMap::new(),
            raw_salience: shares.iter().map(|(g, v)| (String::from(*g), *v)).collect(),
            share: shares.iter().map(|(g, v)| (String::from(*g), *v)).collect(),
        }
    }

    fn manifesto(doc: &str, family: PartyFamily, year: i32, share: Option<f64>) -> Manifesto {
        Manifesto {
            doc_id: doc.into(),
            party_id: doc.split('-').next().unwrap().into(),
            party_family: family,
            country: "de".into(),
            election_date: chrono::NaiveDate::from_ymd_opt(year, 9, 1).unwrap(),
            language: "de".into(),
            vote_share_pct: share,
            in_government_prior: None,
            full_text: String::new(),
        }
    }

    #[test]
    fn dyads_pick_strongest_per_family() {
        let mut manifestos = alloc::vec![
            manifesto("a-2000", PartyFamily::CentreLeft, 2000, Some(30.0)),
            manifesto("b-2000", PartyFamily::CentreLeft, 2000, Some(10.0)),
            manifesto("c-2000", PartyFamily::CentreRight, 2000, None),
            manifesto("r-2000", PartyFamily::RadicalRight, 2000, Some(5.0)),
            manifesto("s-2000", PartyFamily::RadicalRight, 2000, Some(7.0)),
            manifesto("a-2004", PartyFamily::CentreLeft, 2004, Some(30.0)),
        ];
        manifestos.sort_by(|x, y| x.doc_id.cmp(&y.doc_id));
        let d = select_dyads(&Corpus { manifestos });
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].centre_doc_id.as_str(), d[0].rr_doc_id.as_str()), ("a-2000", "s-2000"));
        assert_eq!((d[1].centre_doc_id.as_str(), d[1].family), ("c-2000", PartyFamily::CentreRight));
    }

    #[test]
    fn workers_and_farmers() {
        let s = sentences("d", 10);
        // workers in 0..4, farmers in 3..5: sentence 3 mentions both
        let mut m: Vec<GroupMention> = (0..4).map(|i| mention("d", i, "workers")).collect();
        m.extend((3..5).map(|i| mention("d", i, "farmers")));
        // a repeated mention in the same sentence counts once
        m.push(mention("d", 0, "workers"));
        let p = salience("d", &m, &s);
        assert_eq!(p.denominator_sentences, 5);
        assert_eq!(p.raw_salience["workers"], 4.0 / 5.0);
        assert_eq!(p.raw_salience["farmers"], 2.0 / 5.0);
        assert_eq!(p.share["workers"], 4.0 / 6.0);
        assert_eq!(p.share["farmers"], 2.0 / 6.0);
    }

    #[test]
    fn single_group_everywhere() {
        let s = sentences("d", 3);
        let m: Vec<GroupMention> = (0..3).map(|i| mention("d", i, "g")).collect();
        let p = salience("d", &m, &s);
        assert_eq!(p.raw_salience["g"], 1.0);
        assert_eq!(p.share["g"], 1.0);
    }

    #[test]
    fn no_mentions_gives_empty_profile() {
        let p = salience("d", &[], &sentences("d", 4));
        assert!(p.is_empty());
        assert!(p.raw_salience.is_empty() && p.share.is_empty());
        let q = profile("e", &[("g", 1.0)]);
        let err = dissimilarity(&p, &q, SimilarityMode::ShareRenormalized, &mut Warnings::new()).unwrap_err();
        assert_eq!(err, MetricsError::UndefinedSimilarity { a: "d".into(), b: "e".into() });
    }

    #[test]
    fn worked_similarities() {
        let mut w = Warnings::new();
        let a = profile("a", &[("g1", 0.5), ("g2", 0.5)]);
        let b = profile("b", &[("g1", 1.0)]);
        let c = profile("c", &[("g2", 1.0)]);
        let r = similarity("e", &a, &b, SimilarityMode::ShareRenormalized, &mut w).unwrap();
        assert_eq!((r.dissimilarity, r.similarity), (0.5, 50.0));
        let r = similarity("e", &b, &c, SimilarityMode::ShareRenormalized, &mut w).unwrap();
        assert_eq!((r.dissimilarity, r.similarity), (1.0, 0.0));
        let r = similarity("e", &a, &a, SimilarityMode::ShareRenormalized, &mut w).unwrap();
        assert_eq!(r.similarity, 100.0);
        assert!(w.is_empty());
    }

    #[test]
    fn raw_mode_clamps_with_warning() {
        let s = sentences("a", 2);
        // both sentences mention both groups: raw saliences 1 and 1
        let m = [mention("a", 0, "x"), mention("a", 0, "y"), mention("a", 1, "x"), mention("a", 1, "y")];
        let a = salience("a", &m, &s);
        let t = sentences("b", 1);
        let b = salience("b", &[mention("b", 0, "z")], &t);
        let mut w = Warnings::new();
        let d = dissimilarity(&a, &b, SimilarityMode::RawSentence, &mut w).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(w.similarity_clamped, 1);
        let d = dissimilarity(&a, &b, SimilarityMode::ShareRenormalized, &mut w).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(w.similarity_clamped, 1);
    }

    fn arb_profile(doc: &'static str) -> impl Strategy<Value = SalienceProfile> {
        prop::collection::btree_map(0u8..12, 1u64..50, 1..8).prop_map(move |counts| {
            let total: u64 = counts.values().sum();
            let denominator = *counts.values().max().unwrap() as usize;
            SalienceProfile {
                doc_id: doc.into(),
                total_sentences: total as usize,
                denominator_sentences: denominator,
                group_sentences: counts.iter().map(|(g, c)| (format!("g{g}"), *c)).collect(),
                raw_salience: counts.iter().map(|(g, c)| (format!("g{g}"), *c as f64 / denominator as f64)).collect(),
                share: counts.iter().map(|(g, c)| (format!("g{g}"), *c as f64 / total as f64)).collect(),
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn similarity_bounds_symmetry_triangle(a in arb_profile("a"), b in arb_profile("b"), c in arb_profile("c")) {
            let mut w = Warnings::new();
            let m = SimilarityMode::ShareRenormalized;
            let ab = dissimilarity(&a, &b, m, &mut w).unwrap();
            let ba = dissimilarity(&b, &a, m, &mut w).unwrap();
            let bc = dissimilarity(&b, &c, m, &mut w).unwrap();
            let ac = dissimilarity(&a, &c, m, &mut w).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            let s = similarity("e", &a, &b, m, &mut w).unwrap().similarity;
            prop_assert!((0.0..=100.0).contains(&s));
            prop_assert!(ac <= ab + bc + 1e-12);
            let share_sum: f64 = a.share.values().sum();
            prop_assert!((share_sum - 1.0).abs() <= 1e-9);
            prop_assert_eq!(w.similarity_clamped, 0);
        }
    }
}
