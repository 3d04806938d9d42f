mod oracles;

use std::collections::BTreeMap;

use groupscope_core::metrics::{g2, keyness, Direction, KeynessError};
use proptest::prelude::*;

fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(g, c)| (g.to_string(), *c)).collect()
}

#[test]
fn equal_relative_frequency_is_zero() {
    assert!(g2(10, 20, 90, 180).abs() < 1e-12);
}

#[test]
fn ten_of_hundred_vs_five_of_two_hundred() {
    let expected = oracles::g2_four_cell(10.0, 5.0, 90.0, 195.0);
    let got = g2(10, 5, 90, 195);
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    // Frozen from the four-cell oracle.
    assert!((got - 7.329811674221491).abs() < 1e-12, "{got}");
    let rows = keyness(&counts(&[("g", 10), ("rest", 90)]), &counts(&[("g", 5), ("rest", 195)])).unwrap();
    let g = rows.iter().find(|r| r.group_id == "g").unwrap();
    assert_eq!(g.direction, Direction::TargetTypical);
    assert!(g.g2 > 0.0);
}

#[test]
fn absent_in_target_is_reference_typical() {
    let rows = keyness(&counts(&[("a", 5)]), &counts(&[("a", 5), ("b", 3)])).unwrap();
    let b = rows.iter().find(|r| r.group_id == "b").unwrap();
    assert_eq!(b.direction, Direction::ReferenceTypical);
    assert!(b.g2 < 0.0);
}

#[test]
fn zero_totals_are_rejected() {
    assert_eq!(
        keyness(&counts(&[]), &counts(&[("a", 1)])),
        Err(KeynessError::ZeroTotal { target: 0, reference: 1 })
    );
}

fn arb_counts() -> impl Strategy<Value = BTreeMap<String, u64>> {
    prop::collection::btree_map("[a-f]", 0u64..200, 1..6)
        .prop_filter("non-zero total", |m| m.values().sum::<u64>() > 0)
}

proptest! {
    #[test]
    fn matches_oracle_and_is_antisymmetric(t in arb_counts(), r in arb_counts()) {
        let rows = keyness(&t, &r).unwrap();
        let back = keyness(&r, &t).unwrap();
        let tt: u64 = t.values().sum();
        let rt: u64 = r.values().sum();
        for row in &rows {
            let a = row.target_count as f64;
            let b = row.reference_count as f64;
            let o = oracles::g2_four_cell(a, b, tt as f64 - a, rt as f64 - b);
            prop_assert!((row.g2.abs() - o).abs() <= 1e-9 * (1.0 + o));
            let rf = row.target_rel_freq() - row.reference_rel_freq();
            if rf != 0.0 {
                prop_assert_eq!(rf > 0.0, row.direction == Direction::TargetTypical);
            }
            let mirror = back.iter().find(|x| x.group_id == row.group_id).unwrap();
            prop_assert!((mirror.g2.abs() - row.g2.abs()).abs() <= 1e-9 * (1.0 + row.g2.abs()));
            if rf != 0.0 {
                prop_assert_ne!(mirror.direction, row.direction);
            }
        }
        for w in rows.windows(2) {
            prop_assert!(w[0].g2.abs() >= w[1].g2.abs());
        }
        let mut tp = t.clone();
        let mut rp = r.clone();
        tp.insert("zz".into(), 0);
        rp.insert("zz".into(), 0);
        prop_assert_eq!(keyness(&tp, &rp).unwrap(), rows);
    }
}
