use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use serde::{Deserialize, Serialize};

use super::{Category, GroupEntry, GroupLexicon, LexiconError};
use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptAsSynonym,
    AcceptAsNewGroup,
    Reject,
}

/// A reviewer decision about one surface phrase. Journal entries are
/// ordered by strictly increasing `event_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionEvent {
    pub event_id: u64,
    pub timestamp: String,
    pub surface_phrase: String,
    pub language: String,
    pub decision: Decision,
    /// Existing group for synonyms; optional requested id for new groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_group_id: Option<String>,
    pub reviewer: String,
}

/// Group id derived from a phrase: normalized, spaces replaced by `_`.
fn derived_group_id(phrase: &str) -> String {
    normalize(phrase)
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

/// Applies one reviewed decision and returns the next snapshot.
///
/// Accept decisions bump the version by one; rejections only extend the
/// journal.
pub fn apply_expansion(
    lex: &GroupLexicon,
    event: &ExpansionEvent,
) -> Result<GroupLexicon, LexiconError> {
    if let Some(last) = lex.provenance_journal.last() {
        if event.event_id <= last.event_id {
            return Err(LexiconError::OutOfOrder {
                event_id: event.event_id,
                previous: last.event_id,
            });
        }
    }
    let phrase = normalize(&event.surface_phrase);
    let mut next = lex.clone();
    match event.decision {
        Decision::Reject => {}
        Decision::AcceptAsSynonym => {
            let target = event
                .target_group_id
                .as_ref()
                .ok_or(LexiconError::MissingTarget(event.event_id))?;
            if phrase.is_empty() {
                return Err(LexiconError::EmptyPhrase(target.clone()));
            }
            if !lex.entries.contains_key(target) {
                return Err(LexiconError::UnknownGroup(target.clone()));
            }
            if let Some(owner) = lex.owner_of(&phrase, &event.language) {
                if owner != target {
                    return Err(LexiconError::Collision {
                        phrase,
                        language: event.language.clone(),
                        existing: String::from(owner),
                        requested: target.clone(),
                    });
                }
            }
            next.entries
                .get_mut(target)
                .expect("checked above")
                .synonyms
                .entry(event.language.clone())
                .or_default()
                .insert(phrase);
            next.version += 1;
        }
        Decision::AcceptAsNewGroup => {
            let group_id = event
                .target_group_id
                .clone()
                .unwrap_or_else(|| derived_group_id(&event.surface_phrase));
            if group_id.trim().is_empty() || phrase.is_empty() {
                return Err(LexiconError::EmptyGroupId);
            }
            if lex.entries.contains_key(&group_id) {
                return Err(LexiconError::GroupExists(group_id));
            }
            if let Some(owner) = lex.owner_of(&phrase, &event.language) {
                return Err(LexiconError::Collision {
                    phrase,
                    language: event.language.clone(),
                    existing: String::from(owner),
                    requested: group_id,
                });
            }
            let mut synonyms = BTreeMap::new();
            synonyms.insert(event.language.clone(), BTreeSet::from([phrase]));
            next.entries.insert(
                group_id.clone(),
                GroupEntry {
                    group_id,
                    canonical_label: String::from(event.surface_phrase.trim()),
                    label_language: event.language.clone(),
                    category: Category::Other,
                    synonyms,
                },
            );
            next.version += 1;
        }
    }
    next.provenance_journal.push(event.clone());
    Ok(next)
}

/// Rebuilds a lexicon from its seed and journal. Aborts on the first event
/// that fails validation, including an out-of-order `event_id`.
pub fn replay<'a>(
    seed: &GroupLexicon,
    journal: impl IntoIterator<Item = &'a ExpansionEvent>,
) -> Result<GroupLexicon, LexiconError> {
    let mut lex = seed.clone();
    for event in journal {
        lex = apply_expansion(&lex, event).map_err(|e| LexiconError::Replay {
            event_id: event.event_id,
            source: Box::new(e),
        })?;
    }
    Ok(lex)
}
