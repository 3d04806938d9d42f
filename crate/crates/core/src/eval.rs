//! Precision, recall and F1 of group detection against hand-coded labels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub sentence_id: String,
    pub has_group: bool,
    #[serde(default)]
    pub groups: BTreeSet<String>,
    /// A group is present but it is not in the lexicon.
    #[serde(default)]
    pub extra_group: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Two classes, `group` and `no_group`, from whether the set is empty.
    Binary,
    /// Multi-label scoring per group id.
    PerGroup,
}

pub const GROUP_CLASS: &str = "group";
pub const NO_GROUP_CLASS: &str = "no_group";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold positives.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub granularity: Granularity,
    pub n_sentences: usize,
    pub per_class: BTreeMap<String, ClassScore>,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Classes (or `micro`/`macro`) where a ratio had a zero denominator and
    /// was reported as 0.
    pub zero_division: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction for {} gold sentence(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("gold label {0} has has_group = false but lists groups or extra_group")]
    InconsistentGold(String),
}

struct Ratios {
    precision: f64,
    recall: f64,
    f1: f64,
    zero_division: bool,
}

fn ratios(tp: u64, fp: u64, fn_: u64) -> Ratios {
    let mut zero_division = false;
    let mut div = |a: u64, b: u64| {
        if b == 0 {
            zero_division = true;
            0.0
        } else {
            a as f64 / b as f64
        }
    };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ratios {
        precision,
        recall,
        f1,
        zero_division,
    }
}

/// Scores predictions (sentence id → predicted group ids) against gold.
pub fn score_detection(
    predictions: &BTreeMap<String, BTreeSet<String>>,
    gold: &[GoldLabel],
    granularity: Granularity,
) -> Result<EvalReport, EvalError> {
    let missing: Vec<String> = gold
        .iter()
        .filter(|g| !predictions.contains_key(&g.sentence_id))
        .map(|g| g.sentence_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }
    if let Some(bad) = gold.iter().find(|g| !g.has_group && (!g.groups.is_empty() || g.extra_group)) {
        return Err(EvalError::InconsistentGold(bad.sentence_id.clone()));
    }

    let mut counts: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    let mut bump = |class: &str, which: usize| {
        let e = counts.entry(String::from(class)).or_default();
        match which {
            0 => e.0 += 1,
            1 => e.1 += 1,
            _ => e.2 += 1,
        }
    };
    for g in gold {
        let pred = &predictions[&g.sentence_id];
        match granularity {
            Granularity::Binary => {
                let truth = if g.has_group { GROUP_CLASS } else { NO_GROUP_CLASS };
                let guess = if pred.is_empty() { NO_GROUP_CLASS } else { GROUP_CLASS };
                if truth == guess {
                    bump(truth, 0);
                } else {
                    bump(guess, 1);
                    bump(truth, 2);
                }
            }
            Granularity::PerGroup => {
                for c in pred.union(&g.groups) {
                    match (pred.contains(c), g.groups.contains(c)) {
                        (true, true) => bump(c, 0),
                        (true, false) => bump(c, 1),
                        _ => bump(c, 2),
                    }
                }
            }
        }
    }
    if granularity == Granularity::Binary {
        counts.entry(String::from(GROUP_CLASS)).or_default();
        counts.entry(String::from(NO_GROUP_CLASS)).or_default();
    }

    let mut zero_division = BTreeSet::new();
    let mut per_class = BTreeMap::new();
    let (mut stp, mut sfp, mut sfn) = (0u64, 0u64, 0u64);
    let (mut mp, mut mr, mut mf, mut m) = (0.0, 0.0, 0.0, 0usize);
    for (class, (tp, fp, fn_)) in counts {
        let r = ratios(tp, fp, fn_);
        let support = tp + fn_;
        if r.zero_division {
            zero_division.insert(class.clone());
        }
        stp += tp;
        sfp += fp;
        sfn += fn_;
        if support > 0 {
            mp += r.precision;
            mr += r.recall;
            mf += r.f1;
            m += 1;
        }
        per_class.insert(
            class,
            ClassScore {
                tp,
                fp,
                fn_,
                precision: r.precision,
                recall: r.recall,
                f1: r.f1,
                support,
            },
        );
    }
    let micro = ratios(stp, sfp, sfn);
    if micro.zero_division {
        zero_division.insert(String::from("micro"));
    }
    let (macro_precision, macro_recall, macro_f1) = if m == 0 {
        zero_division.insert(String::from("macro"));
        (0.0, 0.0, 0.0)
    } else {
        (mp / m as f64, mr / m as f64, mf / m as f64)
    };
    Ok(EvalReport {
        granularity,
        n_sentences: gold.len(),
        per_class,
        micro_precision: micro.precision,
        micro_recall: micro.recall,
        micro_f1: micro.f1,
        macro_precision,
        macro_recall,
        macro_f1,
        zero_division,
    })
}
