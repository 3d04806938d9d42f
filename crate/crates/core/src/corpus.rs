//! Manifesto records and the rule-based sentence splitter.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diag::Warnings;
use crate::text::collapse_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartyFamily {
    #[serde(alias = "centre_left", alias = "centre-left")]
    CentreLeft,
    #[serde(alias = "centre_right", alias = "centre-right")]
    CentreRight,
    #[serde(alias = "radical_right", alias = "radical-right")]
    RadicalRight,
    #[serde(alias = "other")]
    Other,
}

impl PartyFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            PartyFamily::CentreLeft => "CentreLeft",
            PartyFamily::CentreRight => "CentreRight",
            PartyFamily::RadicalRight => "RadicalRight",
            PartyFamily::Other => "Other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "centreleft" | "centerleft" => Some(PartyFamily::CentreLeft),
            "centreright" | "centerright" => Some(PartyFamily::CentreRight),
            "radicalright" => Some(PartyFamily::RadicalRight),
            "other" => Some(PartyFamily::Other),
            _ => None,
        }
    }

    pub fn is_centre(self) -> bool {
        matches!(self, PartyFamily::CentreLeft | PartyFamily::CentreRight)
    }
}

/// One party manifesto with the election metadata used downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifesto {
    pub doc_id: String,
    pub party_id: String,
    pub party_family: PartyFamily,
    pub country: String,
    pub election_date: NaiveDate,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_share_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_government_prior: Option<bool>,
    pub full_text: String,
}

impl Manifesto {
    /// Elections are identified by country and date, e.g. `de-2017-09-24`.
    pub fn election_id(&self) -> String {
        election_id(&self.country, self.election_date)
    }
}

pub fn election_id(country: &str, date: NaiveDate) -> String {
    format!("{}-{}", country, date.format("%Y-%m-%d"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub doc_id: String,
    pub index: usize,
    pub text: String,
}

pub fn sentence_id(doc_id: &str, index: usize) -> String {
    format!("{doc_id}:{index}")
}

/// An unvalidated record as it arrives from a JSONL line or CSV row.
///
/// Every field is kept as a loose JSON value so that CSV strings and JSON
/// scalars go through the same validation.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawManifesto {
    pub doc_id: Option<Value>,
    pub party_id: Option<Value>,
    pub party_family: Option<Value>,
    pub country: Option<Value>,
    pub election_date: Option<Value>,
    pub language: Option<Value>,
    pub vote_share_pct: Option<Value>,
    pub in_government_prior: Option<Value>,
    pub full_text: Option<Value>,
}

fn required_str(v: &Option<Value>, field: &str) -> Result<String, String> {
    match v {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(Value::String(_)) | None | Some(Value::Null) => Err(format!("missing {field}")),
        Some(other) => Err(format!("{field} must be a string, got {other}")),
    }
}

fn blank(v: &Option<Value>) -> bool {
    match v {
        None | Some(Value::Null) => true,
        Some(Value::String(s)) => s.trim().is_empty(),
        _ => false,
    }
}

impl RawManifesto {
    pub fn validate(&self) -> Result<Manifesto, String> {
        let doc_id = required_str(&self.doc_id, "doc_id")?;
        let party_id = required_str(&self.party_id, "party_id")?;
        let family_raw = required_str(&self.party_family, "party_family")?;
        let party_family = PartyFamily::parse(&family_raw)
            .ok_or_else(|| format!("unknown party_family {family_raw:?}"))?;

        let country = required_str(&self.country, "country")?;
        if country.len() != 2 || !country.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(format!("country {country:?} is not an ISO 3166-1 alpha-2 code"));
        }
        let country = country.to_ascii_lowercase();

        let date_raw = required_str(&self.election_date, "election_date")?;
        let election_date = NaiveDate::parse_from_str(&date_raw, "%Y-%m-%d")
            .map_err(|_| format!("election_date {date_raw:?} is not a YYYY-MM-DD date"))?;

        let language = required_str(&self.language, "language")?;
        if language.len() != 2 || !language.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(format!("language {language:?} is not an ISO 639-1 code"));
        }
        let language = language.to_ascii_lowercase();

        let vote_share_pct = if blank(&self.vote_share_pct) {
            None
        } else {
            let v = match &self.vote_share_pct {
                Some(Value::Number(n)) => n.as_f64(),
                Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
                _ => None,
            }
            .filter(|v| v.is_finite())
            .ok_or_else(|| "vote_share_pct is not a number".to_string())?;
            if !(0.0..=100.0).contains(&v) {
                return Err(format!("vote_share_pct {v} outside [0,100]"));
            }
            Some(v)
        };

        let in_government_prior = if blank(&self.in_government_prior) {
            None
        } else {
            let b = match &self.in_government_prior {
                Some(Value::Bool(b)) => Some(*b),
                Some(Value::Number(n)) => match n.as_i64() {
                    Some(0) => Some(false),
                    Some(1) => Some(true),
                    _ => None,
                },
                Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
                    "true" | "1" | "yes" => Some(true),
                    "false" | "0" | "no" => Some(false),
                    _ => None,
                },
                _ => None,
            };
            Some(b.ok_or_else(|| "in_government_prior is not a boolean".to_string())?)
        };

        let full_text = match &self.full_text {
            Some(Value::String(s)) => s.clone(),
            None | Some(Value::Null) => String::new(),
            Some(_) => return Err("full_text must be a string".to_string()),
        };

        Ok(Manifesto {
            doc_id,
            party_id,
            party_family,
            country,
            election_date,
            language,
            vote_share_pct,
            in_government_prior,
            full_text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    /// Sorted by `doc_id`.
    pub manifestos: Vec<Manifesto>,
}

impl Corpus {
    pub fn get(&self, doc_id: &str) -> Option<&Manifesto> {
        self.manifestos
            .binary_search_by(|m| m.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.manifestos[i])
    }

    pub fn len(&self) -> usize {
        self.manifestos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifestos.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate doc_id {doc_id:?} on lines {first_line} and {second_line}")]
    DuplicateDocId {
        doc_id: String,
        first_line: usize,
        second_line: usize,
    },
}

/// Validates numbered raw records into a corpus plus a rejection report.
///
/// A duplicate `doc_id` among otherwise valid rows is fatal.
pub fn assemble_corpus(
    records: impl IntoIterator<Item = (usize, RawManifesto)>,
) -> Result<(Corpus, Vec<Rejection>), CorpusError> {
    let mut seen: BTreeMap<String, (usize, Manifesto)> = BTreeMap::new();
    let mut rejections = Vec::new();
    for (line_no, raw) in records {
        match raw.validate() {
            Ok(m) => {
                if let Some((first_line, _)) = seen.get(&m.doc_id) {
                    return Err(CorpusError::DuplicateDocId {
                        doc_id: m.doc_id,
                        first_line: *first_line,
                        second_line: line_no,
                    });
                }
                seen.insert(m.doc_id.clone(), (line_no, m));
            }
            Err(reason) => rejections.push(Rejection { line_no, reason }),
        }
    }
    let manifestos = seen.into_values().map(|(_, m)| m).collect();
    Ok((Corpus { manifestos }, rejections))
}

const ABBREV_COMMON: &[&str] = &["dr", "prof", "nr", "vs", "ca", "st", "art", "abs"];
const ABBREV_DE: &[&str] = &[
    "bzw", "usw", "vgl", "ggf", "inkl", "evtl", "ca", "sog", "dipl", "ing", "hr", "fr", "mio",
    "mrd", "str", "abs", "bspw", "zzgl", "etc",
];
const ABBREV_EN: &[&str] = &[
    "mr", "mrs", "ms", "etc", "e.g", "i.e", "approx", "dept", "govt", "jr", "sr", "inc", "ltd",
    "mt", "cf",
];
const ABBREV_FR: &[&str] = &["mme", "mlle", "etc", "cf", "env", "av"];
const ABBREV_NL: &[&str] = &["dhr", "mevr", "bijv", "enz", "ca", "o.a", "m.b.t"];

fn is_listed_abbreviation(token: &str, language: &str) -> bool {
    let lang_list: &[&str] = match language {
        "de" => ABBREV_DE,
        "en" => ABBREV_EN,
        "fr" => ABBREV_FR,
        "nl" => ABBREV_NL,
        _ => &[],
    };
    ABBREV_COMMON.contains(&token) || lang_list.contains(&token)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_closer(c: char) -> bool {
    matches!(
        c,
        '"' | '\'' | '”' | '“' | '’' | '»' | '«' | ')' | ']' | '›'
    )
}

fn is_bullet_line(line: &str) -> bool {
    let t = line.trim_start();
    let mut chars = t.chars();
    match chars.next() {
        Some('-' | '*' | '•' | '–' | '—' | '·' | '▪' | '◦' | '‣') => {
            matches!(chars.next(), Some(c) if c.is_whitespace())
        }
        Some(c) if c.is_ascii_digit() => {
            let rest = t.trim_start_matches(|c: char| c.is_ascii_digit());
            let mut r = rest.chars();
            matches!(r.next(), Some('.' | ')')) && matches!(r.next(), Some(c) if c.is_whitespace())
        }
        _ => false,
    }
}

/// Byte ranges of blocks separated by blank lines or bullet-point lines.
fn blocks(text: &str) -> Vec<(usize, usize)> {
    let mut lines: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if c == '\n' {
            lines.push((start, i));
            start = i + 1;
        }
    }
    lines.push((start, text.len()));

    let mut out = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut prev_bullet = false;
    for (s, e) in lines {
        let line = &text[s..e];
        if line.trim().is_empty() {
            if let Some(b) = current.take() {
                out.push(b);
            }
            prev_bullet = false;
            continue;
        }
        let bullet = is_bullet_line(line);
        current = match current {
            Some((bs, _)) if !bullet && !prev_bullet => Some((bs, e)),
            Some(b) => {
                out.push(b);
                Some((s, e))
            }
            None => Some((s, e)),
        };
        prev_bullet = bullet;
    }
    if let Some(b) = current {
        out.push(b);
    }
    out
}

/// Decides whether a lone period closes a sentence, given the token it ends.
fn period_ends_sentence(token: &str, language: &str) -> bool {
    let token = token.trim_start_matches(|c: char| !c.is_alphanumeric());
    if token.is_empty() {
        return true;
    }
    // Initials and dotted forms: "z. B.", "U.S.", "M."
    let last_segment = token.rsplit('.').next().unwrap_or(token);
    if last_segment.chars().count() == 1 && last_segment.chars().all(char::is_alphabetic) {
        return false;
    }
    let lower = token.to_lowercase();
    let last_part = lower.rsplit(['.', '-']).next().unwrap_or(&lower);
    if is_listed_abbreviation(&lower, language) || is_listed_abbreviation(last_part, language) {
        return false;
    }
    // German ordinals: "1. Mai"
    if language == "de" && token.len() <= 2 && token.chars().all(|c| c.is_ascii_digit()) {
        return false;
    }
    true
}

fn split_block(block: &str, language: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = block.char_indices().collect();
    let mut seg_start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        let lone_period = j - run_start == 1 && c == '.';
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let end_byte = if j < chars.len() { chars[j].0 } else { block.len() };
        if j < chars.len() && !chars[j].1.is_whitespace() {
            i = j.max(i + 1);
            continue;
        }
        let next_visible = chars[j..].iter().map(|&(_, c)| c).find(|c| !c.is_whitespace());
        let mut ends = match next_visible {
            None => true,
            Some(n) => !n.is_lowercase(),
        };
        if ends && lone_period {
            let before = &block[seg_start..chars[run_start].0];
            let token = before.rsplit(char::is_whitespace).next().unwrap_or("");
            ends = period_ends_sentence(token, language);
        }
        if ends {
            let sentence = collapse_whitespace(&block[seg_start..end_byte]);
            if !sentence.is_empty() {
                out.push(sentence);
            }
            seg_start = end_byte;
        }
        i = j;
    }
    let tail = collapse_whitespace(&block[seg_start..]);
    if !tail.is_empty() {
        out.push(tail);
    }
}

/// Splits text into sentences on terminal punctuation, blank lines and
/// bullet-point lines. Sentence texts have whitespace collapsed; joining them
/// with single spaces reproduces the collapsed source.
pub fn split_text(text: &str, language: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (s, e) in blocks(text) {
        split_block(&text[s..e], language, &mut out);
    }
    out
}

pub fn split_sentences(m: &Manifesto, warnings: &mut Warnings) -> Vec<Sentence> {
    let texts = split_text(&m.full_text, &m.language);
    if texts.is_empty() {
        warnings.empty_documents += 1;
        warnings.push(format!("document {} has no text", m.doc_id));
    }
    texts
        .into_iter()
        .enumerate()
        .map(|(index, text)| Sentence {
            sentence_id: sentence_id(&m.doc_id, index),
            doc_id: m.doc_id.clone(),
            index,
            text,
        })
        .collect()
}
