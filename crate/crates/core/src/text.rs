//! Phrase normalization shared by the lexicon, the extractor and the
//! embedding store.

use alloc::string::String;
use unicode_normalization::UnicodeNormalization;

/// Lowercase, NFC-compose and collapse internal whitespace; trims the ends.
///
/// No stemming: inflected variants must be listed explicitly.
pub fn normalize(s: &str) -> String {
    let composed: String = s.nfc().collect();
    let lowered = composed.to_lowercase();
    let recomposed: String = lowered.nfc().collect();
    collapse_whitespace(&recomposed)
}

/// Collapse every whitespace run into a single ASCII space and trim.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Word characters are letters; a word boundary is any letter/non-letter
/// transition.
#[inline]
pub fn is_letter(c: char) -> bool {
    c.is_alphabetic()
}
