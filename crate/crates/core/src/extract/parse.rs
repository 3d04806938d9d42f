//! Tolerant parsing of the model's JSON answer.
//!
//! Strategy ladder: the whole string as a JSON object, then the first
//! balanced `{...}` substring, then failure. Keys are matched
//! case-insensitively against alias sets; values may be a list or a single
//! string.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde_json::{Map, Value};

use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedResponse {
    pub explicit_groups: Vec<String>,
    pub implicit_groups: Vec<String>,
    pub others: Vec<String>,
    pub salvage_applied: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unparseable response: {reason}")]
pub struct ParseFailure {
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bucket {
    Explicit,
    Implicit,
    Others,
}

const EXPLICIT_KEYS: &[&str] = &[
    "explizit",
    "explicit",
    "explizite",
    "explizite gruppen",
    "explizite soziale gruppen",
    "explizit genannt",
    "explizit genannte gruppen",
    "explicit groups",
    "explicit social groups",
    "explicitly mentioned",
    "explicitly mentioned groups",
];
const IMPLICIT_KEYS: &[&str] = &[
    "implizit",
    "implicit",
    "implizite",
    "implizite gruppen",
    "implizite soziale gruppen",
    "implicit groups",
    "implicit social groups",
    "implied",
    "implied groups",
];
const OTHERS_KEYS: &[&str] = &[
    "sonstige",
    "sonstiges",
    "others",
    "other",
    "andere",
    "andere begriffe",
    "andere nomen oder begriffe",
    "other terms",
    "other nouns or terms",
];

fn classify_key(key: &str) -> Option<Bucket> {
    let k: String = key
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect();
    let k = normalize(&k);
    if EXPLICIT_KEYS.contains(&k.as_str()) {
        Some(Bucket::Explicit)
    } else if IMPLICIT_KEYS.contains(&k.as_str()) {
        Some(Bucket::Implicit)
    } else if OTHERS_KEYS.contains(&k.as_str()) {
        Some(Bucket::Others)
    } else {
        None
    }
}

/// First balanced `{...}` substring, skipping braces inside string literals.
pub fn first_balanced_object(s: &str) -> Option<&str> {
    let start = s.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s[start..].char_indices() {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn collect_items(key: &str, value: &Value, out: &mut Vec<String>, warnings: &mut Vec<String>) {
    match value {
        Value::String(s) => out.push(s.clone()),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::String(s) => out.push(s.clone()),
                    other => warnings.push(format!("{key}[{i}]: dropped non-string item {other}")),
                }
            }
        }
        Value::Null => {}
        other => warnings.push(format!("{key}: dropped non-list value {other}")),
    }
}

fn from_object(obj: &Map<String, Value>, salvage_applied: bool) -> Result<ParsedResponse, ParseFailure> {
    let mut raw: [Vec<String>; 3] = Default::default();
    let mut warnings = Vec::new();
    let mut recognized = false;
    for (key, value) in obj {
        let idx = match classify_key(key) {
            Some(Bucket::Explicit) => 0,
            Some(Bucket::Implicit) => 1,
            Some(Bucket::Others) => 2,
            None => {
                warnings.push(format!("ignored key {key:?}"));
                continue;
            }
        };
        recognized = true;
        collect_items(key, value, &mut raw[idx], &mut warnings);
    }
    if !recognized {
        return Err(ParseFailure {
            reason: String::from("object has no explicit/implicit/others key"),
        });
    }
    // Dedup within each list, then across lists: an earlier bucket keeps a
    // phrase and later buckets drop it.
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut buckets: [Vec<String>; 3] = Default::default();
    for (idx, items) in raw.iter().enumerate() {
        for item in items {
            let n = normalize(item);
            if !n.is_empty() && seen.insert(n.clone()) {
                buckets[idx].push(n);
            }
        }
    }
    let [explicit_groups, implicit_groups, others] = buckets;
    Ok(ParsedResponse {
        explicit_groups,
        implicit_groups,
        others,
        salvage_applied,
        warnings,
    })
}

/// Parses a raw model answer. Never panics on any input.
pub fn parse_response(raw: &str) -> Result<ParsedResponse, ParseFailure> {
    if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(raw.trim()) {
        return from_object(&obj, false);
    }
    let candidate = first_balanced_object(raw).ok_or_else(|| ParseFailure {
        reason: String::from("no balanced JSON object"),
    })?;
    match serde_json::from_str::<Value>(candidate) {
        Ok(Value::Object(obj)) => from_object(&obj, true),
        Ok(_) => Err(ParseFailure {
            reason: String::from("embedded value is not an object"),
        }),
        Err(e) => Err(ParseFailure {
            reason: format!("embedded object is not valid JSON: {e}"),
        }),
    }
}
