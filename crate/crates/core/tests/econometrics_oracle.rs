mod oracles;

use oracles::fixtures::{fixture_20_rows, FIXTURE_20};

use chrono::NaiveDate;
use groupscope_core::corpus::{Corpus, Manifesto, PartyFamily};
use groupscope_core::econometrics::{
    build_panel, design, fit_ols_fe, listwise, ols, standard_specs, Matrix, ModelSpec, PanelError, Term, VoteRecord,
    INTERCEPT,
};
use groupscope_core::metrics::{SimilarityMode, SimilarityRecord};
use nalgebra::{DMatrix, DVector};

fn fixture_design() -> (Vec<String>, Matrix, Vec<f64>, Vec<String>) {
    let names: Vec<String> = [INTERCEPT, "x1", "x2", "x3", "party[b]", "party[c]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = fixture_20_rows();
    let y = FIXTURE_20.iter().map(|r| r.5).collect();
    let clusters = FIXTURE_20.iter().map(|r| r.1.to_string()).collect();
    (names, Matrix::from_rows(&rows), y, clusters)
}

fn to_nalgebra(x: &Matrix, y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    (
        DMatrix::from_row_slice(x.rows, x.cols, &x.data),
        DVector::from_column_slice(y),
    )
}

fn cluster_index(labels: &[String]) -> Vec<usize> {
    let mut uniq = labels.to_vec();
    uniq.sort();
    uniq.dedup();
    labels.iter().map(|l| uniq.iter().position(|u| u == l).unwrap()).collect()
}

#[test]
fn fixture_matches_normal_equations_and_sandwich() {
    let (names, x, y, clusters) = fixture_design();
    let fit = ols("f", &names, &x, &y, &clusters).unwrap();
    let (xn, yn) = to_nalgebra(&x, &y);
    let oracle = oracles::ols_normal_equations(&xn, &yn, &cluster_index(&clusters));
    for (j, name) in names.iter().enumerate() {
        let e = fit.get(name).unwrap();
        assert!((e.estimate - oracle.beta[j]).abs() < 1e-8, "{name}: {} vs {}", e.estimate, oracle.beta[j]);
        assert!(
            (e.std_error - oracle.cluster_se[j]).abs() < 1e-8,
            "{name}: se {} vs {}",
            e.std_error,
            oracle.cluster_se[j]
        );
    }
    assert_eq!((fit.n_obs, fit.n_clusters, fit.df_resid), (20, 5, 14));
    let rss: f64 = oracle.residuals.iter().map(|e| e * e).sum();
    assert!((fit.rss - rss).abs() < 1e-8);
}

#[test]
fn fixed_effects_equal_demeaned_slopes() {
    let (names, x, y, _) = fixture_design();
    let fit = ols("f", &names, &x, &y, &FIXTURE_20.iter().map(|r| r.1.to_string()).collect::<Vec<_>>()).unwrap();
    // Within-party demeaning of y and the three slope regressors.
    let parties = ["a", "b", "c"];
    let mut xd = DMatrix::<f64>::zeros(20, 3);
    let mut yd = DVector::<f64>::zeros(20);
    for p in parties {
        let idx: Vec<usize> = (0..20).filter(|&i| FIXTURE_20[i].0 == p).collect();
        let m = idx.len() as f64;
        let mean = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&i| f(i)).sum::<f64>() / m;
        let my = mean(&|i| FIXTURE_20[i].5);
        let mx = [mean(&|i| FIXTURE_20[i].2), mean(&|i| FIXTURE_20[i].3), mean(&|i| FIXTURE_20[i].4)];
        for &i in &idx {
            yd[i] = FIXTURE_20[i].5 - my;
            xd[(i, 0)] = FIXTURE_20[i].2 - mx[0];
            xd[(i, 1)] = FIXTURE_20[i].3 - mx[1];
            xd[(i, 2)] = FIXTURE_20[i].4 - mx[2];
        }
    }
    let beta = (xd.transpose() * &xd).try_inverse().unwrap() * xd.transpose() * yd;
    for (j, name) in ["x1", "x2", "x3"].iter().enumerate() {
        let e = fit.get(name).unwrap().estimate;
        assert!((e - beta[j]).abs() < 1e-8, "{name}: {e} vs {}", beta[j]);
    }
}

#[test]
fn singleton_clusters_reduce_to_hc1() {
    let (names, x, y, _) = fixture_design();
    let own: Vec<String> = (0..20).map(|i| format!("row{i:02}")).collect();
    let fit = ols("f", &names, &x, &y, &own).unwrap();
    let (xn, yn) = to_nalgebra(&x, &y);
    let hc1 = oracles::hc1_se(&xn, &yn);
    for (j, name) in names.iter().enumerate() {
        assert!((fit.get(name).unwrap().std_error - hc1[j]).abs() < 1e-8);
    }
}

#[test]
fn cluster_relabeling_and_dv_shift() {
    let (names, x, y, clusters) = fixture_design();
    let base = ols("f", &names, &x, &y, &clusters).unwrap();
    let relabeled: Vec<String> = clusters
        .iter()
        .map(|c| match c.as_str() {
            "e1" => "z9",
            "e2" => "k3",
            "e3" => "a0",
            "e4" => "q7",
            _ => "m5",
        }
        .to_string())
        .collect();
    let other = ols("f", &names, &x, &y, &relabeled).unwrap();
    for (a, b) in base.estimates.iter().zip(&other.estimates) {
        assert_eq!(a.estimate, b.estimate);
        assert!((a.std_error - b.std_error).abs() <= 1e-12 * (1.0 + a.std_error));
    }
    let shifted: Vec<f64> = y.iter().map(|v| v + 17.5).collect();
    let moved = ols("f", &names, &x, &shifted, &clusters).unwrap();
    for name in ["x1", "x2", "x3", "party[b]", "party[c]"] {
        assert!((moved.get(name).unwrap().estimate - base.get(name).unwrap().estimate).abs() < 1e-10);
    }
    assert!((moved.get(INTERCEPT).unwrap().estimate - base.get(INTERCEPT).unwrap().estimate - 17.5).abs() < 1e-10);
}

#[test]
fn fit_statistics_follow_sums_of_squares() {
    let (names, x, y, clusters) = fixture_design();
    let fit = ols("f", &names, &x, &y, &clusters).unwrap();
    let mean = y.iter().sum::<f64>() / 20.0;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = 1.0 - fit.rss / tss;
    assert!((fit.r2 - r2).abs() < 1e-12);
    assert!((fit.adj_r2 - (1.0 - (1.0 - r2) * 19.0 / 14.0)).abs() < 1e-12);
    assert!((fit.f_stat - ((tss - fit.rss) / 5.0) / (fit.rss / 14.0)).abs() < 1e-9);
}

// Panel fixture: one country, four elections, centre-left, centre-right and
// radical-right parties. Expected lags worked out by hand:
//
// election   party  rr_lag1  vote_diff
// 2001       cl     -        -
// 2001       cr     -        -
// 2005       cl     5        -
// 2005       cr     5        -
// 2009       cl     8        30-35 = -5
// 2009       cr     8        33-30 = 3
// 2013       cl     12       28-30 = -2
// 2013       cr     12       29-33 = -4
const DATES: [(i32, u32, u32); 4] = [(2001, 9, 23), (2005, 9, 18), (2009, 9, 27), (2013, 9, 22)];
const SHARES: [(&str, PartyFamily, [f64; 4]); 3] = [
    ("cl", PartyFamily::CentreLeft, [35.0, 30.0, 28.0, 31.0]),
    ("cr", PartyFamily::CentreRight, [30.0, 33.0, 29.0, 27.0]),
    ("rr", PartyFamily::RadicalRight, [5.0, 8.0, 12.0, 10.0]),
];

fn date(i: usize) -> NaiveDate {
    let (y, m, d) = DATES[i];
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn panel_corpus() -> Corpus {
    let mut manifestos = Vec::new();
    for (party, family, shares) in SHARES {
        for (i, share) in shares.iter().enumerate() {
            manifestos.push(Manifesto {
                doc_id: format!("{party}-{}", DATES[i].0),
                party_id: party.into(),
                party_family: family,
                country: "xx".into(),
                election_date: date(i),
                language: "en".into(),
                vote_share_pct: Some(*share),
                in_government_prior: Some((party == "cl") == (i % 2 == 0)),
                full_text: String::new(),
            });
        }
    }
    manifestos.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Corpus { manifestos }
}

fn panel_similarities() -> Vec<SimilarityRecord> {
    let mut out = Vec::new();
    for i in 0..4 {
        for (k, centre) in ["cl", "cr"].iter().enumerate() {
            out.push(SimilarityRecord {
                election_id: format!("xx-{}", date(i).format("%Y-%m-%d")),
                centre_doc_id: format!("{centre}-{}", DATES[i].0),
                rr_doc_id: format!("rr-{}", DATES[i].0),
                dissimilarity: 0.5,
                similarity: 30.0 + 5.0 * i as f64 + k as f64,
                mode: SimilarityMode::ShareRenormalized,
            });
        }
    }
    out
}

#[test]
fn panel_lags_match_hand_table() {
    let panel = build_panel(&panel_similarities(), &panel_corpus(), &[]).unwrap();
    assert_eq!(panel.len(), 8);
    let expected: [(&str, usize, Option<f64>, Option<f64>); 8] = [
        ("cl", 0, None, None),
        ("cr", 0, None, None),
        ("cl", 1, Some(5.0), None),
        ("cr", 1, Some(5.0), None),
        ("cl", 2, Some(8.0), Some(-5.0)),
        ("cr", 2, Some(8.0), Some(3.0)),
        ("cl", 3, Some(12.0), Some(-2.0)),
        ("cr", 3, Some(12.0), Some(-4.0)),
    ];
    for (row, (party, i, lag, diff)) in panel.iter().zip(expected) {
        assert_eq!(row.party_id, party);
        assert_eq!(row.election_date, date(i));
        assert_eq!(row.rr_support_lag1, lag, "{party} {i}");
        assert_eq!(row.centre_vote_diff, diff, "{party} {i}");
        assert_eq!(row.cluster_id, row.election_id);
        assert_eq!(row.rr_party_id, "rr");
    }
    let ns: Vec<usize> = standard_specs().iter().map(|s| listwise(&panel, s).len()).collect();
    assert_eq!(ns, vec![6, 4, 4]);
}

#[test]
fn earlier_history_fills_first_lags() {
    let history = vec![
        VoteRecord { party_id: "cl".into(), country: "xx".into(), election_date: NaiveDate::from_ymd_opt(1998, 9, 27).unwrap(), vote_share_pct: 40.0 },
        VoteRecord { party_id: "rr".into(), country: "xx".into(), election_date: NaiveDate::from_ymd_opt(1998, 9, 27).unwrap(), vote_share_pct: 3.0 },
    ];
    let panel = build_panel(&panel_similarities(), &panel_corpus(), &history).unwrap();
    assert_eq!(panel[0].rr_support_lag1, Some(3.0));
    // cl at 2005: v(2001) − v(1998) = 35 − 40
    assert_eq!(panel[2].centre_vote_diff, Some(-5.0));
    assert_eq!(panel[3].centre_vote_diff, None);
}

#[test]
fn panel_errors() {
    let d = |y| NaiveDate::from_ymd_opt(y, 1, 1).unwrap();
    let rec = |y, v| VoteRecord { party_id: "cl".into(), country: "xx".into(), election_date: d(y), vote_share_pct: v };
    assert!(matches!(
        build_panel(&panel_similarities(), &panel_corpus(), &[rec(1999, 1.0), rec(1995, 2.0)]),
        Err(PanelError::UnorderedHistory { .. })
    ));
    let mut sims = panel_similarities();
    sims[3].rr_doc_id = "nope".into();
    match build_panel(&sims, &panel_corpus(), &[]) {
        Err(PanelError::UnknownDocument { doc_id, record }) => {
            assert_eq!(doc_id, "nope");
            assert!(record.contains("cr-2005"));
        }
        other => panic!("{other:?}"),
    }
    let mut sims = panel_similarities();
    sims.push(sims[0].clone());
    assert!(matches!(build_panel(&sims, &panel_corpus(), &[]), Err(PanelError::DuplicateRow { .. })));
}

#[test]
fn fe_design_uses_first_party_as_reference() {
    let panel = build_panel(&panel_similarities(), &panel_corpus(), &[]).unwrap();
    let spec = ModelSpec { name: "s".into(), terms: vec![Term::RrSupportLag1], party_fe: true };
    let rows = listwise(&panel, &spec);
    let (names, fe, _, _) = design(&rows, &spec);
    assert_eq!(names, vec![INTERCEPT, "rr_support_lag1", "party[cr]"]);
    assert_eq!(fe, vec!["party[cr]"]);
    let fit = fit_ols_fe(&panel, &spec).unwrap();
    assert_eq!(fit.n_obs, 6);
    assert_eq!(fit.n_clusters, 3);
}
