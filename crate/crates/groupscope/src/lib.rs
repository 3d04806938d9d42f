//! File formats, HTTP backends, the staged pipeline and the review service.

pub mod backends;
pub mod config;
pub mod fsio;
pub mod http;
pub mod ingest;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod review;
pub mod transcripts;
pub mod vectors;
