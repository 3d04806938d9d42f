//! Core algorithms for detecting social-group appeals in party manifestos.
//!
//! Everything in this crate is pure computation over in-memory values and
//! needs only `alloc`: sentence splitting, seed-lexicon matching and its
//! expansion journal, parsing of LLM extraction responses, embedding-space
//! filtering (semantic center, radial classifiers, one-class SVM), salience,
//! similarity and keyness metrics, the fixed-effects OLS estimator with
//! election-clustered standard errors, and detection scoring.
//!
//! File formats, HTTP backends, the pipeline runner and the review service
//! live in the `groupscope` crate.
#![no_std]
extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod diag;
pub mod digest;
pub mod econometrics;
pub mod embedding;
pub mod esf;
pub mod eval;
pub mod extract;
pub mod lexicon;
pub mod metrics;
pub mod text;

pub use diag::Warnings;
