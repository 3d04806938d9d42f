//! The seed dictionary of social groups, its expansion journal and
//! dictionary matching.
//!
//! A [`GroupLexicon`] is an immutable snapshot. Expansion decisions are
//! [`ExpansionEvent`]s; applying one produces a new snapshot, and replaying
//! the journal from the seed reproduces the current lexicon exactly.

mod expansion;
mod matching;

pub use expansion::{apply_expansion, replay, Decision, ExpansionEvent};
pub use matching::{match_sentence, GroupMention, Matcher, MentionMethod};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::text::normalize;

/// The lexicon that ships with the crate: 22 socio-demographic groups with
/// German and English synonyms.
pub const SEED_LEXICON_JSON: &str = include_str!("../../data/seed_lexicon.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Age,
    Gender,
    Education,
    Religion,
    Income,
    Employment,
    Place,
    Migration,
    Family,
    Occupation,
    Student,
    Entrepreneur,
    Other,
}

fn default_label_language() -> String {
    String::from("en")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub group_id: String,
    pub canonical_label: String,
    /// Language whose synonym set contains the canonical label.
    #[serde(default = "default_label_language")]
    pub label_language: String,
    pub category: Category,
    /// Normalized phrases per ISO 639-1 language code.
    pub synonyms: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupLexicon {
    pub entries: BTreeMap<String, GroupEntry>,
    pub version: u64,
    pub provenance_journal: Vec<ExpansionEvent>,
}

/// On-disk layout: `{version, entries: [...]}`. The journal is stored
/// separately as JSONL.
#[derive(Debug, Serialize, Deserialize)]
struct LexiconFile {
    version: u64,
    entries: Vec<GroupEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LexiconError {
    #[error("malformed lexicon file: {0}")]
    Format(String),
    #[error("group_id must be non-empty")]
    EmptyGroupId,
    #[error("duplicate group_id {0:?}")]
    DuplicateGroup(String),
    #[error("phrase {phrase:?} ({language}) already belongs to {existing:?}; cannot assign it to {requested:?}")]
    Collision {
        phrase: String,
        language: String,
        existing: String,
        requested: String,
    },
    #[error("unknown group_id {0:?}")]
    UnknownGroup(String),
    #[error("group {0:?} already exists")]
    GroupExists(String),
    #[error("canonical label of {0:?} missing from its own synonym set")]
    LabelNotInSynonyms(String),
    #[error("empty phrase in group {0:?}")]
    EmptyPhrase(String),
    #[error("event {event_id} is out of order (previous event {previous})")]
    OutOfOrder { event_id: u64, previous: u64 },
    #[error("event {0} accepts a synonym without target_group_id")]
    MissingTarget(u64),
    #[error("replay aborted at event {event_id}: {source}")]
    Replay {
        event_id: u64,
        source: alloc::boxed::Box<LexiconError>,
    },
}

impl GroupLexicon {
    pub fn seed() -> Self {
        Self::from_json(SEED_LEXICON_JSON).expect("bundled seed lexicon is valid")
    }

    /// Parses the lexicon file format, normalizes every phrase and checks the
    /// lexicon invariants.
    pub fn from_json(s: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile =
            serde_json::from_str(s).map_err(|e| LexiconError::Format(alloc::format!("{e}")))?;
        let mut entries = BTreeMap::new();
        for mut e in file.entries {
            if e.group_id.trim().is_empty() {
                return Err(LexiconError::EmptyGroupId);
            }
            for set in e.synonyms.values_mut() {
                let normalized: BTreeSet<String> = set.iter().map(|p| normalize(p)).collect();
                *set = normalized;
            }
            if entries.contains_key(&e.group_id) {
                return Err(LexiconError::DuplicateGroup(e.group_id));
            }
            entries.insert(e.group_id.clone(), e);
        }
        let lex = GroupLexicon {
            entries,
            version: file.version,
            provenance_journal: Vec::new(),
        };
        lex.validate()?;
        Ok(lex)
    }

    /// Serializes the `{version, entries}` file. Output is deterministic.
    pub fn to_json(&self) -> String {
        let file = LexiconFile {
            version: self.version,
            entries: self.entries.values().cloned().collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("lexicon serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), LexiconError> {
        let mut owners: BTreeMap<(&str, &str), &str> = BTreeMap::new();
        for (id, e) in &self.entries {
            if id.trim().is_empty() {
                return Err(LexiconError::EmptyGroupId);
            }
            let label = normalize(&e.canonical_label);
            if !e
                .synonyms
                .get(&e.label_language)
                .is_some_and(|s| s.contains(&label))
            {
                return Err(LexiconError::LabelNotInSynonyms(id.clone()));
            }
            for (lang, set) in &e.synonyms {
                for phrase in set {
                    if phrase.is_empty() {
                        return Err(LexiconError::EmptyPhrase(id.clone()));
                    }
                    if let Some(existing) = owners.insert((lang, phrase), id) {
                        return Err(LexiconError::Collision {
                            phrase: phrase.clone(),
                            language: lang.clone(),
                            existing: String::from(existing),
                            requested: id.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Group owning a normalized phrase in `language`, if any.
    pub fn owner_of(&self, phrase: &str, language: &str) -> Option<&str> {
        self.entries
            .values()
            .find(|e| e.synonyms.get(language).is_some_and(|s| s.contains(phrase)))
            .map(|e| e.group_id.as_str())
    }

    pub fn languages(&self) -> BTreeSet<&str> {
        self.entries
            .values()
            .flat_map(|e| e.synonyms.iter())
            .filter(|(_, s)| !s.is_empty())
            .map(|(l, _)| l.as_str())
            .collect()
    }

    /// Every distinct normalized phrase across groups and languages, sorted.
    /// This is the whitelist the embedding-space filter is fitted on.
    pub fn whitelist_phrases(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self
            .entries
            .values()
            .flat_map(|e| e.synonyms.values())
            .flatten()
            .collect();
        set.into_iter().cloned().collect()
    }

    pub fn synonym_count(&self) -> usize {
        self.entries
            .values()
            .flat_map(|e| e.synonyms.values())
            .map(BTreeSet::len)
            .sum()
    }
}
