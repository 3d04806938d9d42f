use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::GroupLexicon;
use crate::corpus::Sentence;
use crate::diag::Warnings;
use crate::text::is_letter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionMethod {
    Dictionary,
    LlmEsf,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupMention {
    pub sentence_id: String,
    pub group_id: String,
    pub matched_surface: String,
    /// `[start, end)` in Unicode scalar offsets into the sentence text.
    pub char_span: [usize; 2],
    pub method: MentionMethod,
}

/// Lexicon phrases for one language, ready to scan sentences.
///
/// Phrases are sorted so that scanning is deterministic for a given lexicon
/// version.
#[derive(Debug, Clone)]
pub struct Matcher {
    phrases: Vec<(String, String)>,
}

/// A sentence in normalized form with a map back to original char offsets.
struct NormalizedText {
    text: String,
    /// For every char of `text`, the `[start, end)` original char range.
    origin: Vec<(usize, usize)>,
}

fn normalize_with_map(s: &str) -> NormalizedText {
    let chars: Vec<char> = s.chars().collect();
    let mut text = String::with_capacity(s.len());
    let mut origin = Vec::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        if chars[i].is_whitespace() {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            text.push(' ');
            origin.push((start, i));
            continue;
        }
        i += 1;
        while i < chars.len() && is_combining_mark(chars[i]) {
            i += 1;
        }
        let unit: String = chars[start..i].iter().collect();
        let composed: String = unit.nfc().collect();
        let lowered = composed.to_lowercase();
        for c in lowered.nfc() {
            text.push(c);
            origin.push((start, i));
        }
    }
    NormalizedText { text, origin }
}

impl Matcher {
    pub fn new(lex: &GroupLexicon, language: &str) -> Self {
        let mut phrases: Vec<(String, String)> = lex
            .entries
            .values()
            .filter_map(|e| e.synonyms.get(language).map(|s| (e, s)))
            .flat_map(|(e, set)| set.iter().map(move |p| (p.clone(), e.group_id.clone())))
            .collect();
        phrases.sort();
        Matcher { phrases }
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Case-insensitive, whitespace-normalized phrase matching at word
    /// boundaries. Where matches overlap the longest one wins; ties go to the
    /// earlier start, then the smaller group id.
    pub fn find(&self, sentence: &Sentence) -> Vec<GroupMention> {
        let norm = normalize_with_map(&sentence.text);
        let norm_chars: Vec<char> = norm.text.chars().collect();
        // byte offset -> char index in the normalized text
        let mut byte_to_char = alloc::vec![0usize; norm.text.len() + 1];
        for (ci, (bi, _)) in norm.text.char_indices().enumerate() {
            byte_to_char[bi] = ci;
        }
        byte_to_char[norm.text.len()] = norm_chars.len();

        // (original length, start, end, group)
        let mut found: Vec<(usize, usize, usize, &str)> = Vec::new();
        for (phrase, group) in &self.phrases {
            let first_letter = phrase.chars().next().is_some_and(is_letter);
            let last_letter = phrase.chars().last().is_some_and(is_letter);
            for (b, m) in norm.text.match_indices(phrase.as_str()) {
                let cs = byte_to_char[b];
                let ce = byte_to_char[b + m.len()];
                if first_letter && cs > 0 && is_letter(norm_chars[cs - 1]) {
                    continue;
                }
                if last_letter && ce < norm_chars.len() && is_letter(norm_chars[ce]) {
                    continue;
                }
                let start = norm.origin[cs].0;
                let end = norm.origin[ce - 1].1;
                found.push((end - start, start, end, group.as_str()));
            }
        }
        found.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.3.cmp(b.3)));

        let mut taken: Vec<(usize, usize, &str)> = Vec::new();
        for (_, start, end, group) in found {
            if taken.iter().all(|&(s, e, _)| end <= s || start >= e) {
                taken.push((start, end, group));
            }
        }
        taken.sort();

        let chars: Vec<char> = sentence.text.chars().collect();
        taken
            .into_iter()
            .map(|(start, end, group)| GroupMention {
                sentence_id: sentence.sentence_id.clone(),
                group_id: String::from(group),
                matched_surface: chars[start..end].iter().collect(),
                char_span: [start, end],
                method: MentionMethod::Dictionary,
            })
            .collect()
    }
}

/// Dictionary mentions of lexicon groups in one sentence.
///
/// A language without any synonyms yields no mentions and bumps the
/// `unsupported_language` counter.
pub fn match_sentence(
    sentence: &Sentence,
    lex: &GroupLexicon,
    language: &str,
    warnings: &mut Warnings,
) -> Vec<GroupMention> {
    let matcher = Matcher::new(lex, language);
    if matcher.is_empty() {
        warnings.unsupported_language += 1;
        return Vec::new();
    }
    matcher.find(sentence)
}
