//! Slide retrieval benchmark engine.
//!
//! Sparse (BM25), dense (cosine) and late-interaction (MaxSim) retrieval over
//! precomputed caption and embedding artifacts, composite and reciprocal-rank
//! fusion, two-stage reranking behind a pluggable scorer, and the evaluation
//! side: NDCG@10, Recall@10, per-stage latency and on-disk storage.
//!
//! Data-parallel inner loops (per-document scoring, per-query batches) go
//! through [`par::Exec`]. With the default `parallel` feature they run on
//! rayon; without it every path is sequential. Results are bit-identical
//! either way.

pub mod bm25;
pub mod contrastive;
pub mod dense;
mod error;
pub mod fusion;
pub mod late;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod ranked;
pub mod store;
pub mod synth;
pub mod trec;

pub use error::{Error, Result};
pub use ranked::{RankedEntry, RankedList};
