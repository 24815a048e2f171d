//! Adverse drug event mining: document classification, ADE/Drug entity
//! tagging and drug-reaction relation extraction over pretrained word
//! vectors.

pub mod bundle;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod embed;
mod error;
pub mod eval;
pub mod fcnn;
pub mod ner;
pub mod pipeline;
pub mod relation;
pub mod synth;
pub mod train;

pub use embed::{load_vectors, open_vectors, EmbeddingStore, OovPolicy};
pub use error::{Error, Result};
