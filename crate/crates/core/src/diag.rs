//! Non-fatal diagnostics collected while processing.

use alloc::string::String;
use alloc::vec::Vec;

/// Counters and messages for conditions that are reported but do not abort
/// an operation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Warnings {
    pub empty_documents: usize,
    pub unsupported_language: usize,
    pub dropped_items: usize,
    pub similarity_clamped: usize,
    pub messages: Vec<String>,
}

impl Warnings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.messages.push(msg.into());
    }

    pub fn is_empty(&self) -> bool {
        self.empty_documents == 0
            && self.unsupported_language == 0
            && self.dropped_items == 0
            && self.similarity_clamped == 0
            && self.messages.is_empty()
    }

    pub fn merge(&mut self, other: Warnings) {
        self.empty_documents += other.empty_documents;
        self.unsupported_language += other.unsupported_language;
        self.dropped_items += other.dropped_items;
        self.similarity_clamped += other.similarity_clamped;
        self.messages.extend(other.messages);
    }
}
