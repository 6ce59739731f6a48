//! Ranked result lists shared by every stage.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Ordered results for one query, tagged with the stage that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub producer: String,
    pub entries: Vec<RankedEntry>,
}

/// Descending score, then ascending doc id. Scores are finite, so a failed
/// partial comparison only happens for NaN, which no engine emits.
pub(crate) fn by_score_then_id(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

impl RankedList {
    pub fn empty(query_id: impl Into<String>, producer: impl Into<String>) -> Self {
        RankedList {
            query_id: query_id.into(),
            producer: producer.into(),
            entries: Vec::new(),
        }
    }

    /// Builds a list from entries already in final order, assigning ranks 1..n.
    pub fn from_ordered(
        query_id: impl Into<String>,
        producer: impl Into<String>,
        ordered: impl IntoIterator<Item = (String, f64)>,
    ) -> Self {
        let entries = ordered
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RankedEntry {
                doc_id,
                score,
                rank: i + 1,
            })
            .collect();
        RankedList {
            query_id: query_id.into(),
            producer: producer.into(),
            entries,
        }
    }

    /// Keeps the `k` best `(doc_id, score)` pairs by descending score with
    /// ties broken by ascending doc id.
    pub fn top_k(
        query_id: impl Into<String>,
        producer: impl Into<String>,
        mut scored: Vec<(String, f64)>,
        k: usize,
    ) -> Self {
        let cmp = |a: &(String, f64), b: &(String, f64)| by_score_then_id((&a.0, a.1), (&b.0, b.1));
        if k == 0 {
            scored.clear();
        } else if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Self::from_ordered(query_id, producer, scored)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn truncate(&mut self, n: usize) {
        self.entries.truncate(n);
    }

    /// Checks contiguous ranks from 1 and unique doc ids.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.entries.len());
        self.entries
            .iter()
            .enumerate()
            .all(|(i, e)| e.rank == i + 1 && seen.insert(e.doc_id.as_str()))
    }
}
