//! CSV tables and the plain-text regression and evaluation reports.

use std::path::Path;

use groupscope_core::econometrics::{OlsFit, PanelRow, INTERCEPT};
use groupscope_core::eval::{EvalReport, Granularity};
use groupscope_core::metrics::KeynessRow;
use groupscope_core::metrics::SalienceProfile;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn to_csv<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("row serializes");
    }
    w.into_inner().expect("in-memory writer")
}

fn write_records(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory writer");
    for r in rows {
        w.write_record(&r).expect("in-memory writer");
    }
    w.into_inner().expect("in-memory writer")
}

/// One row per (document, group) with a non-zero count.
pub fn salience_csv(profiles: &[SalienceProfile]) -> Vec<u8> {
    let rows = profiles.iter().flat_map(|p| {
        p.raw_salience.iter().map(move |(g, raw)| {
            vec![
                p.doc_id.clone(),
                g.clone(),
                format!("{raw:?}"),
                format!("{:?}", p.share.get(g).copied().unwrap_or(0.0)),
            ]
        })
    });
    write_records(&["doc_id", "group_id", "raw_salience", "share"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCsvRow {
    pub election_id: String,
    pub centre_party_id: String,
    pub rr_party_id: String,
    pub family: String,
    pub similarity: f64,
}

pub fn keyness_csv(rows: &[KeynessRow]) -> Vec<u8> {
    let rows = rows.iter().map(|r| {
        vec![
            r.group_id.clone(),
            format!("{:?}", r.g2),
            r.direction.as_str().to_string(),
            format!("{:?}", r.target_rel_freq()),
            format!("{:?}", r.reference_rel_freq()),
        ]
    });
    write_records(&["group_id", "g2", "direction", "target_rel_freq", "reference_rel_freq"], rows)
}

pub fn read_panel_csv(path: &Path) -> Result<Vec<PanelRow>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| format!("{}: row {}: {e}", path.display(), i + 1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<OlsFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const TABLE_TERMS: [(&str, &str); 6] = [
    ("rr_support_lag1", "RR support (t-1)"),
    ("centre_vote_diff", "Centre vote change"),
    ("rr_support_lag1:centre_vote_diff", "RR support x vote change"),
    ("gov_party", "Government party"),
    ("centre_vote_share", "Centre vote share"),
    (INTERCEPT, "Intercept"),
];

/// Two-sided p-value of `estimate / se` under Student's t with `df`.
pub fn p_value(estimate: f64, se: f64, df: usize) -> Option<f64> {
    if !(se.is_finite() && se > 0.0) || df == 0 {
        return None;
    }
    let t = StudentsT::new(0.0, 1.0, df as f64).ok()?;
    Some(2.0 * t.sf((estimate / se).abs()))
}

pub fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

fn fixed3(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Estimate with stars and its standard error, or `None` when the term is
/// not in the model or its standard error is unusable.
pub fn cell(fit: &OlsFit, term: &str) -> Option<(String, String)> {
    let e = fit.get(term)?;
    if !e.std_error.is_finite() {
        return None;
    }
    let p = p_value(e.estimate, e.std_error, fit.df_resid);
    Some((format!("{}{}", fixed3(e.estimate), stars(p)), format!("({})", fixed3(e.std_error))))
}

pub fn regression_text(models: &[ModelResult]) -> String {
    const LABEL_W: usize = 26;
    const COL_W: usize = 14;
    let mut out = String::new();
    let line = |cells: &[String]| {
        let mut s = format!("{:<LABEL_W$}", cells[0]);
        for c in &cells[1..] {
            s.push_str(&format!("{c:>COL_W$}"));
        }
        s.trim_end().to_string() + "\n"
    };
    let mut head = vec![String::new()];
    head.extend(models.iter().map(|m| m.model.clone()));
    let rule = "-".repeat(LABEL_W + COL_W * models.len()) + "\n";
    out.push_str(&line(&head));
    out.push_str(&rule);
    for (term, label) in TABLE_TERMS {
        let cells: Vec<Option<(String, String)>> =
            models.iter().map(|m| m.fit.as_ref().and_then(|f| cell(f, term))).collect();
        let mut est = vec![label.to_string()];
        let mut se = vec![String::new()];
        for c in &cells {
            let (a, b) = c.clone().unwrap_or_default();
            est.push(a);
            se.push(b);
        }
        out.push_str(&line(&est));
        out.push_str(&line(&se));
    }
    out.push_str(&rule);
    type Stat = fn(&OlsFit) -> String;
    let footer: [(&str, Stat); 5] = [
        ("Party fixed effects", |_| "Yes".into()),
        ("N", |f| f.n_obs.to_string()),
        ("R2", |f| fixed3(f.r2)),
        ("Adj. R2", |f| fixed3(f.adj_r2)),
        ("F", |f| fixed3(f.f_stat)),
    ];
    for (label, get) in footer {
        let mut row = vec![label.to_string()];
        row.extend(models.iter().map(|m| m.fit.as_ref().map(get).unwrap_or_default()));
        out.push_str(&line(&row));
    }
    out.push_str(&rule);
    out.push_str("Cluster-robust (CR1) standard errors, clustered by election, in parentheses.\n");
    out.push_str("* p<0.05, ** p<0.01, *** p<0.001\n");
    for m in models {
        if let Some(e) = &m.error {
            out.push_str(&format!("{}: not estimated ({e})\n", m.model));
        }
    }
    out
}

pub fn regression_csv(models: &[ModelResult]) -> Vec<u8> {
    let mut rows = Vec::new();
    for m in models {
        let Some(f) = &m.fit else { continue };
        for e in &f.estimates {
            let p = p_value(e.estimate, e.std_error, f.df_resid);
            rows.push(vec![
                m.model.clone(),
                e.term.clone(),
                format!("{:?}", e.estimate),
                format!("{:?}", e.std_error),
                p.map(|p| format!("{p:?}")).unwrap_or_default(),
                f.n_obs.to_string(),
            ]);
        }
    }
    write_records(&["model", "term", "estimate", "std_error", "p_value", "n_obs"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub method: String,
    pub report: EvalReport,
}

pub fn eval_text(entries: &[EvalEntry]) -> String {
    let mut out = format!(
        "{:<12}{:<11}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
        "method", "level", "micro_p", "micro_r", "micro_f1", "macro_p", "macro_r", "macro_f1"
    );
    for e in entries {
        let r = &e.report;
        let level = match r.granularity {
            Granularity::Binary => "binary",
            Granularity::PerGroup => "per_group",
        };
        out.push_str(&format!(
            "{:<12}{:<11}{:>10.3}{:>10.3}{:>10.3}{:>10.3}{:>10.3}{:>10.3}\n",
            e.method,
            level,
            r.micro_precision,
            r.micro_recall,
            r.micro_f1,
            r.macro_precision,
            r.macro_recall,
            r.macro_f1
        ));
    }
    out
}
