//! Exact cosine top-k over single-vector embeddings.

use crate::par::Exec;
use crate::store::{EmbeddingStore, StoreKind};
use crate::{Error, RankedList, Result};

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Divides by the L2 norm; `None` for a zero vector.
pub fn normalized(v: &[f32]) -> Option<Vec<f32>> {
    let norm = dot(v, v).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| x / norm).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub dim: usize,
    pub doc_ids: Vec<String>,
    /// Unit vectors, row-major.
    vectors: Vec<f32>,
}

impl DenseIndex {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn vector(&self, ordinal: usize) -> &[f32] {
        &self.vectors[ordinal * self.dim..(ordinal + 1) * self.dim]
    }
}

pub fn build_dense(store: &EmbeddingStore) -> Result<DenseIndex> {
    if store.kind != StoreKind::Single {
        return Err(Error::Invalid("dense index needs a single-vector store".into()));
    }
    let mut vectors = Vec::with_capacity(store.len() * store.dim);
    let mut doc_ids = Vec::with_capacity(store.len());
    for m in &store.matrices {
        if m.dim != store.dim {
            return Err(Error::DimMismatch {
                expected: store.dim,
                actual: m.dim,
            });
        }
        if m.rows != 1 {
            return Err(Error::Invalid(format!("`{}` is not a single vector", m.doc_id)));
        }
        let unit = normalized(&m.values).ok_or_else(|| Error::ZeroVector(m.doc_id.clone()))?;
        vectors.extend(unit);
        doc_ids.push(m.doc_id.clone());
    }
    Ok(DenseIndex {
        dim: store.dim,
        doc_ids,
        vectors,
    })
}

pub fn dense_search(index: &DenseIndex, query_id: &str, query: &[f32], k: usize) -> Result<RankedList> {
    dense_search_with(index, query_id, query, k, Exec::default())
}

pub fn dense_search_with(
    index: &DenseIndex,
    query_id: &str,
    query: &[f32],
    k: usize,
    exec: Exec,
) -> Result<RankedList> {
    if query.len() != index.dim {
        return Err(Error::DimMismatch {
            expected: index.dim,
            actual: query.len(),
        });
    }
    let q = normalized(query).ok_or_else(|| Error::ZeroVector(query_id.to_string()))?;
    let scores = exec.map_range(index.len(), |i| dot(&q, index.vector(i)));
    let scored = index
        .doc_ids
        .iter()
        .cloned()
        .zip(scores.into_iter().map(f64::from))
        .collect();
    Ok(RankedList::top_k(query_id, "dense", scored, k))
}
