//! Signed log-likelihood (G²) keyness on 2×2 tables.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TargetTypical,
    ReferenceTypical,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TargetTypical => "target_typical",
            Direction::ReferenceTypical => "reference_typical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeynessRow {
    pub group_id: String,
    pub target_count: u64,
    pub target_total: u64,
    pub reference_count: u64,
    pub reference_total: u64,
    /// Positive when the group is relatively more frequent in the target.
    pub g2: f64,
    pub direction: Direction,
}

impl KeynessRow {
    pub fn target_rel_freq(&self) -> f64 {
        self.target_count as f64 / self.target_total as f64
    }

    pub fn reference_rel_freq(&self) -> f64 {
        self.reference_count as f64 / self.reference_total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeynessError {
    #[error("keyness needs non-zero totals (target {target}, reference {reference})")]
    ZeroTotal { target: u64, reference: u64 },
}

fn term(o: f64, e: f64) -> f64 {
    if o > 0.0 {
        o * libm::log(o / e)
    } else {
        0.0
    }
}

/// Unsigned G² for the table `[[a, b], [c, d]]`, where `a` is the group count
/// in the target, `b` in the reference, and `c`, `d` the remaining counts.
pub fn g2(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    let n = a + b + c + d;
    if n == 0.0 {
        return 0.0;
    }
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let col2 = b + d;
    let s = term(a, row1 * col1 / n) + term(b, row1 * col2 / n) + term(c, row2 * col1 / n) + term(d, row2 * col2 / n);
    (2.0 * s).max(0.0)
}

/// One row per group present on either side, sorted by descending |G²| and
/// then group id. Ties in relative frequency count as target-typical.
pub fn keyness(
    target: &BTreeMap<String, u64>,
    reference: &BTreeMap<String, u64>,
) -> Result<Vec<KeynessRow>, KeynessError> {
    let tt: u64 = target.values().sum();
    let rt: u64 = reference.values().sum();
    if tt == 0 || rt == 0 {
        return Err(KeynessError::ZeroTotal { target: tt, reference: rt });
    }
    let groups: BTreeSet<&String> = target.keys().chain(reference.keys()).collect();
    let mut rows: Vec<KeynessRow> = groups
        .into_iter()
        .filter_map(|g| {
            let a = target.get(g).copied().unwrap_or(0);
            let b = reference.get(g).copied().unwrap_or(0);
            if a == 0 && b == 0 {
                return None;
            }
            let value = g2(a, b, tt - a, rt - b);
            // Compare a/tt with b/rt without division.
            let direction = if (a as u128) * (rt as u128) >= (b as u128) * (tt as u128) {
                Direction::TargetTypical
            } else {
                Direction::ReferenceTypical
            };
            let signed = match direction {
                Direction::TargetTypical => value,
                Direction::ReferenceTypical => -value,
            };
            Some(KeynessRow {
                group_id: g.clone(),
                target_count: a,
                target_total: tt,
                reference_count: b,
                reference_total: rt,
                g2: signed,
                direction,
            })
        })
        .collect();
    rows.sort_by(|x, y| {
        libm::fabs(y.g2)
            .total_cmp(&libm::fabs(x.g2))
            .then_with(|| x.group_id.cmp(&y.group_id))
    });
    Ok(rows)
}
