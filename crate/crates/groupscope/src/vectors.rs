//! Tab-separated vector files: phrase, then the vector components.

use std::fmt::Write as _;
use std::path::Path;

use groupscope_core::embedding::{EmbedError, EmbeddingStore};

use crate::fsio::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum VectorFileError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: vector file has no rows")]
    EmptyStore { path: String },
    #[error("{path}:{line}: expected {expected} components, found {got}")]
    Width {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}:{line}: component {column} is not a number: {value:?}")]
    NonNumeric {
        path: String,
        line: usize,
        column: usize,
        value: String,
    },
    #[error("{path}:{line}: {source}")]
    Invalid {
        path: String,
        line: usize,
        source: EmbedError,
    },
    #[error("{path}:{line}: phrase {phrase:?} already appeared on line {first}")]
    Duplicate {
        path: String,
        line: usize,
        first: usize,
        phrase: String,
    },
}

pub fn load_store(path: &Path, backend_id: &str) -> Result<EmbeddingStore, VectorFileError> {
    let text = fsio::read_to_string(path)?;
    parse_store(&text, &path.display().to_string(), backend_id)
}

/// Parses TSV text. The first row fixes the dimension.
pub fn parse_store(text: &str, path: &str, backend_id: &str) -> Result<EmbeddingStore, VectorFileError> {
    let mut store = EmbeddingStore::new(backend_id);
    let mut expected: Option<usize> = None;
    let mut first_seen = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let phrase = cols.next().unwrap_or_default();
        let mut vector = Vec::new();
        for (j, c) in cols.enumerate() {
            let v: f64 = c.trim().parse().map_err(|_| VectorFileError::NonNumeric {
                path: path.into(),
                line: line_no,
                column: j + 1,
                value: c.into(),
            })?;
            vector.push(v);
        }
        let d = *expected.get_or_insert(vector.len());
        if vector.len() != d {
            return Err(VectorFileError::Width {
                path: path.into(),
                line: line_no,
                expected: d,
                got: vector.len(),
            });
        }
        let key = groupscope_core::text::normalize(phrase);
        if let Some(first) = first_seen.insert(key.clone(), line_no) {
            return Err(VectorFileError::Duplicate {
                path: path.into(),
                line: line_no,
                first,
                phrase: key,
            });
        }
        store.insert(phrase, vector).map_err(|source| VectorFileError::Invalid {
            path: path.into(),
            line: line_no,
            source,
        })?;
    }
    if store.is_empty() {
        return Err(VectorFileError::EmptyStore { path: path.into() });
    }
    Ok(store)
}

/// Shortest round-trip formatting, so reading the file back is exact.
pub fn format_rows<'a>(rows: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
    let mut out = String::new();
    for (phrase, v) in rows {
        out.push_str(phrase);
        for x in v {
            write!(out, "\t{x:?}").expect("string write");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize, d: usize) -> String {
        (0..n)
            .map(|i| {
                let comps: Vec<String> = (0..d).map(|j| format!("{}", (i * d + j) as f64 / 7.0)).collect();
                format!("phrase {i}\t{}", comps.join("\t"))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn five_by_eight() {
        let s = parse_store(&rows(5, 8), "t.tsv", "file").unwrap();
        assert_eq!(s.dimension(), 8);
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn short_row_names_its_line() {
        let mut text = rows(5, 8);
        text.push_str("\nbad\t1\t2\t3\t4\t5\t6\t7");
        match parse_store(&text, "t.tsv", "file") {
            Err(VectorFileError::Width { line, expected, got, .. }) => {
                assert_eq!((line, expected, got), (6, 8, 7));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_names_its_line() {
        let text = "a\t1\t2\nb\t1\tx\n";
        assert!(matches!(
            parse_store(text, "t.tsv", "file"),
            Err(VectorFileError::NonNumeric { line: 2, column: 2, .. })
        ));
    }

    #[test]
    fn empty_file() {
        assert!(matches!(parse_store("\n\n", "t.tsv", "file"), Err(VectorFileError::EmptyStore { .. })));
    }

    #[test]
    fn duplicate_after_normalization() {
        assert!(matches!(
            parse_store("Frauen\t1\t0\nfrauen\t0\t1\n", "t.tsv", "file"),
            Err(VectorFileError::Duplicate { line: 2, first: 1, .. })
        ));
    }

    #[test]
    fn format_round_trip_is_exact() {
        let v = [0.1f64 + 0.2, -1e-300, 1.0 / 3.0];
        let text = format_rows([("x", &v[..]), ("y", &v[..])]);
        let s = parse_store(&text, "t", "file").unwrap();
        assert_eq!(s.get("x").unwrap(), &v[..]);
    }
}
