//! Conversational search assistant: collection ingestion, index storage, the
//! model gateway, the per-turn pipeline, the HTTP session API, batch
//! evaluation and the command line.

pub mod cli;
pub mod collection;
pub mod config;
pub mod eval;
pub mod fixtures;
pub mod gateway;
pub mod pipeline;
pub mod server;
pub mod sessions;
pub mod store;
pub mod stub;
