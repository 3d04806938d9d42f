//! End-to-end run of the bundled fixture against frozen outputs.
//!
//! Set `GROUPSCOPE_BLESS=1` to rewrite `tests/golden/` after an intended
//! change in output.

mod common;

use std::collections::BTreeMap;

use common::{fixture_config, golden_dir, pipeline, snapshot};
use groupscope_core::digest::sha256_hex;

/// Reports small enough to keep verbatim so a diff is readable.
const VERBATIM: [&str; 7] = [
    "regression.txt",
    "eval.txt",
    "similarity.csv",
    "keyness_rr_vs_cr.csv",
    "keyness_rr_vs_cl.csv",
    "panel.csv",
    "manifest.json",
];

fn digests(files: &BTreeMap<String, Vec<u8>>) -> String {
    files.iter().map(|(name, bytes)| format!("{}  {name}\n", sha256_hex(bytes))).collect()
}

#[test]
fn fixture_run_matches_golden_outputs() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(fixture_config(dir.path())).run_all().unwrap();
    let files = snapshot(dir.path());
    let golden = golden_dir();

    if std::env::var_os("GROUPSCOPE_BLESS").is_some() {
        std::fs::create_dir_all(&golden).unwrap();
        std::fs::write(golden.join("SHA256SUMS"), digests(&files)).unwrap();
        for name in VERBATIM {
            std::fs::write(golden.join(name), &files[name]).unwrap();
        }
        return;
    }

    for name in VERBATIM {
        let want = std::fs::read_to_string(golden.join(name)).unwrap();
        let got = String::from_utf8(files[name].clone()).unwrap();
        assert_eq!(got, want, "{name} differs from golden");
    }
    let want = std::fs::read_to_string(golden.join("SHA256SUMS")).unwrap();
    let got = digests(&files);
    let mismatched: Vec<&str> = got
        .lines()
        .zip(want.lines())
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.split_whitespace().last().unwrap_or(""))
        .collect();
    assert!(mismatched.is_empty(), "differs from golden: {mismatched:?}");
    assert_eq!(got.lines().count(), want.lines().count(), "output file set changed");
}

#[test]
fn two_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(fixture_config(a.path())).run_all().unwrap();
    pipeline(fixture_config(b.path())).run_all().unwrap();
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (name, bytes) in &sa {
        assert!(bytes == &sb[name], "{name}");
    }
}

#[test]
fn fixture_run_has_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(fixture_config(dir.path())).run_all().unwrap();
    let read = |n: &str| std::fs::read_to_string(dir.path().join(n)).unwrap();

    // one broken corpus row
    assert_eq!(read("rejections.jsonl").lines().count(), 1);
    assert_eq!(read("corpus.jsonl").lines().count(), 18);
    assert_eq!(read("extraction_errors.jsonl"), "");

    // two centre parties and one radical-right party in each of six elections
    let sim = read("similarity.csv");
    assert_eq!(sim.lines().count(), 1 + 12);
    for line in sim.lines().skip(1) {
        let s: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=100.0).contains(&s), "{line}");
    }
    let table = read("regression.txt");
    for label in ["RR support (t-1)", "Centre vote change", "Party fixed effects", "Adj. R2"] {
        assert!(table.contains(label), "{label}");
    }
    assert!(!table.contains("not estimated"), "{table}");
}
