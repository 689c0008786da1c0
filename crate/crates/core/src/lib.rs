//! Abstractive summarization with distraction-aware attention.
//!
//! The pipeline: a bi-directional GRU encoder produces per-position
//! annotations; a two-level GRU decoder attends over them with optional
//! history penalties on attention weights and content vectors; beam search
//! can additionally rescore hypotheses by how much each step moved away
//! from its own history; UNK outputs are replaced from the source by
//! attention argmax; ROUGE-1/2/L score the results.
//!
//! Everything differentiable runs on a small reverse-mode tape
//! ([`graph::Graph`]) in 64-bit, verified against central finite
//! differences ([`gradcheck`]).

pub mod checkpoint;
pub mod config;
pub mod control;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kv;
pub mod model;
pub mod rouge;
pub mod search;
pub mod summarize;
pub mod tensor;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
