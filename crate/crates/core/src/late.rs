//! Late-interaction (MaxSim) retrieval over multi-vector embeddings.
//!
//! `score(Q, D) = sum_i max_j <q_i, d_j>` with plain dot products: encoders
//! emit normalized token vectors, so nothing is re-normalized here. The
//! engine does not care whether rows are image patches or caption tokens.

use crate::dense::dot;
use crate::par::Exec;
use crate::store::{EmbeddingMatrix, EmbeddingStore};
use crate::{Error, RankedList, Result};

/// MaxSim over raw row-major token blocks sharing `dim`.
pub fn maxsim(query: &[f32], doc: &[f32], dim: usize) -> f32 {
    query
        .chunks_exact(dim)
        .map(|q| {
            doc.chunks_exact(dim)
                .map(|d| dot(q, d))
                .fold(f32::NEG_INFINITY, f32::max)
        })
        .sum()
}

pub fn maxsim_score(query: &EmbeddingMatrix, doc: &EmbeddingMatrix) -> Result<f32> {
    if query.dim != doc.dim {
        return Err(Error::DimMismatch {
            expected: doc.dim,
            actual: query.dim,
        });
    }
    Ok(maxsim(&query.values, &doc.values, doc.dim))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiVectorIndex {
    pub dim: usize,
    pub doc_ids: Vec<String>,
    /// Token range of doc `i` is `offsets[i]..offsets[i + 1]` (in rows).
    offsets: Vec<usize>,
    tokens: Vec<f32>,
}

impl MultiVectorIndex {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn doc_tokens(&self, ordinal: usize) -> &[f32] {
        &self.tokens[self.offsets[ordinal] * self.dim..self.offsets[ordinal + 1] * self.dim]
    }
}

/// Loads every matrix into one contiguous in-memory block. Values were
/// widened to f32 by the store reader.
pub fn build_multi(store: &EmbeddingStore) -> Result<MultiVectorIndex> {
    let dim = store.matrices.first().map_or(store.dim, |m| m.dim);
    let mut offsets = Vec::with_capacity(store.len() + 1);
    offsets.push(0);
    let mut tokens = Vec::with_capacity(store.total_rows() * dim);
    let mut doc_ids = Vec::with_capacity(store.len());
    for m in &store.matrices {
        if m.dim != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: m.dim,
            });
        }
        if m.rows == 0 || m.values.len() != m.rows * m.dim {
            return Err(Error::Invalid(format!("`{}`: malformed token matrix", m.doc_id)));
        }
        if m.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("`{}`: non-finite token value", m.doc_id)));
        }
        tokens.extend_from_slice(&m.values);
        offsets.push(offsets.last().unwrap() + m.rows);
        doc_ids.push(m.doc_id.clone());
    }
    Ok(MultiVectorIndex {
        dim,
        doc_ids,
        offsets,
        tokens,
    })
}

pub fn late_search(index: &MultiVectorIndex, query_id: &str, query: &EmbeddingMatrix, k: usize) -> Result<RankedList> {
    late_search_with(index, query_id, query, k, Exec::default())
}

/// Scores every document exhaustively. Per-document scores are identical
/// under both execution policies.
pub fn late_search_with(
    index: &MultiVectorIndex,
    query_id: &str,
    query: &EmbeddingMatrix,
    k: usize,
    exec: Exec,
) -> Result<RankedList> {
    if query.dim != index.dim {
        return Err(Error::DimMismatch {
            expected: index.dim,
            actual: query.dim,
        });
    }
    if query.rows == 0 {
        return Err(Error::Invalid("query has no tokens".into()));
    }
    let scores = exec.map_range(index.len(), |i| maxsim(&query.values, index.doc_tokens(i), index.dim));
    let scored = index
        .doc_ids
        .iter()
        .cloned()
        .zip(scores.into_iter().map(f64::from))
        .collect();
    Ok(RankedList::top_k(query_id, "late", scored, k))
}
