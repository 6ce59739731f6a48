//! NDCG@k, Recall@k and the benchmark report table.
//!
//! Relevance is binary. DCG discounts rank `i` by `log2(i + 1)`; the ideal
//! DCG places `min(|relevant|, k)` relevant docs at the top. Queries judged
//! in the qrels but absent from a run score zero.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::par::Exec;
use crate::pipeline::TimingLog;
use crate::store::{BenchStorage, QrelSet};
use crate::{Error, RankedList, Result};

pub const DEFAULT_K: usize = 10;

fn judged<'a>(run: &RankedList, qrels: &'a QrelSet) -> Result<&'a std::collections::BTreeSet<String>> {
    qrels
        .relevant(&run.query_id)
        .ok_or_else(|| Error::UnjudgedQuery(run.query_id.clone()))
}

pub fn dcg_discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

pub fn ndcg_at_k(run: &RankedList, qrels: &QrelSet, k: usize) -> Result<f64> {
    let relevant = judged(run, qrels)?;
    let dcg: f64 = run
        .entries
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, e)| relevant.contains(&e.doc_id))
        .map(|(i, _)| dcg_discount(i + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(k)).map(dcg_discount).sum();
    Ok(if ideal > 0.0 { dcg / ideal } else { 0.0 })
}

pub fn recall_at_k(run: &RankedList, qrels: &QrelSet, k: usize) -> Result<f64> {
    let relevant = judged(run, qrels)?;
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let hits = run
        .entries
        .iter()
        .take(k)
        .filter(|e| relevant.contains(&e.doc_id))
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEval {
    pub query_id: String,
    pub ndcg: f64,
    pub recall: f64,
}

/// Means are fractions in `[0, 1]`; the `*_pct` accessors give Table-style
/// percentages.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalResult {
    pub k: usize,
    pub per_query: Vec<QueryEval>,
    pub ndcg: f64,
    pub recall: f64,
}

impl EvalResult {
    pub fn query_count(&self) -> usize {
        self.per_query.len()
    }

    pub fn ndcg_pct(&self) -> f64 {
        100.0 * self.ndcg
    }

    pub fn recall_pct(&self) -> f64 {
        100.0 * self.recall
    }
}

/// Evaluates every judged query (ascending id). Runs for unjudged queries
/// are ignored.
pub fn evaluate(runs: &[RankedList], qrels: &QrelSet, k: usize, exec: Exec) -> EvalResult {
    let by_query: HashMap<&str, &RankedList> = runs.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let qids: Vec<&str> = qrels.query_ids().collect();
    let per_query = exec.map(&qids, |&qid| match by_query.get(qid) {
        Some(run) => QueryEval {
            query_id: qid.to_string(),
            ndcg: ndcg_at_k(run, qrels, k).expect("judged"),
            recall: recall_at_k(run, qrels, k).expect("judged"),
        },
        None => QueryEval {
            query_id: qid.to_string(),
            ndcg: 0.0,
            recall: 0.0,
        },
    });
    let n = per_query.len();
    let mean = |f: fn(&QueryEval) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_query.iter().map(f).sum::<f64>() / n as f64
        }
    };
    EvalResult {
        k,
        ndcg: mean(|q| q.ndcg),
        recall: mean(|q| q.recall),
        per_query,
    }
}

/// One row of the report table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub label: String,
    pub ndcg_pct: f64,
    pub recall_pct: f64,
    pub query_count: usize,
    pub retrieval_s: f64,
    /// `None` when the configuration has no reranking stage.
    pub rerank_s: Option<f64>,
    pub storage_gb: Option<f64>,
}

pub fn aggregate(
    label: &str,
    runs: &[RankedList],
    qrels: &QrelSet,
    timings: Option<&TimingLog>,
    storage: Option<&BenchStorage>,
) -> BenchReport {
    let eval = evaluate(runs, qrels, DEFAULT_K, Exec::default());
    let (retrieval_s, rerank_s) = match timings {
        Some(log) => (log.mean_retrieval_s(), log.reranker.as_ref().map(|_| log.mean_rerank_s())),
        None => (0.0, None),
    };
    BenchReport {
        label: label.to_string(),
        ndcg_pct: eval.ndcg_pct(),
        recall_pct: eval.recall_pct(),
        query_count: eval.query_count(),
        retrieval_s,
        rerank_s,
        storage_gb: storage.map(BenchStorage::total_gb),
    }
}

/// `"0.22 + 0.09"` for reranked configurations, `"0.22"` otherwise.
pub fn latency_cell(retrieval_s: f64, rerank_s: Option<f64>) -> String {
    match rerank_s {
        Some(r) => format!("{retrieval_s:.2} + {r:.2}"),
        None => format!("{retrieval_s:.2}"),
    }
}

impl BenchReport {
    pub fn latency_cell(&self) -> String {
        latency_cell(self.retrieval_s, self.rerank_s)
    }

    pub fn storage_cell(&self) -> String {
        self.storage_gb.map_or_else(|| "-".to_string(), |g| format!("{g:.3}"))
    }

    /// Machine-readable `key=value` lines; [`BenchReport::from_kv`] reads them back.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "label={}", self.label).unwrap();
        writeln!(out, "ndcg@10={:.1}", self.ndcg_pct).unwrap();
        writeln!(out, "recall@10={:.1}", self.recall_pct).unwrap();
        writeln!(out, "queries={}", self.query_count).unwrap();
        writeln!(out, "retrieval_s={}", self.retrieval_s).unwrap();
        if let Some(r) = self.rerank_s {
            writeln!(out, "rerank_s={r}").unwrap();
        }
        if let Some(g) = self.storage_gb {
            writeln!(out, "storage_gb={g}").unwrap();
        }
        out
    }

    pub fn from_kv(text: &str, path: &std::path::Path) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key=value"))?;
            map.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let num = |key: &str| -> Result<Option<f64>> {
            map.get(key)
                .map(|(line, v)| {
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(path, *line, format!("`{key}` is not a number")))
                })
                .transpose()
        };
        let required = |key: &str| -> Result<f64> {
            num(key)?.ok_or_else(|| Error::parse(path, 0, format!("missing `{key}`")))
        };
        Ok(BenchReport {
            label: map
                .get("label")
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::parse(path, 0, "missing `label`"))?,
            ndcg_pct: required("ndcg@10")?,
            recall_pct: required("recall@10")?,
            query_count: required("queries")? as usize,
            retrieval_s: required("retrieval_s")?,
            rerank_s: num("rerank_s")?,
            storage_gb: num("storage_gb")?,
        })
    }
}

/// Text table, one row per configuration ordered by label.
pub fn render_table(reports: &[BenchReport]) -> String {
    let mut rows: Vec<&BenchReport> = reports.iter().collect();
    rows.sort_by(|a, b| a.label.cmp(&b.label));
    let label_w = rows.iter().map(|r| r.label.len()).chain([13]).max().unwrap();
    let mut out = String::new();
    writeln!(
        out,
        "{:<label_w$} | {:>7} | {:>9} | {:>13} | {:>11}",
        "Configuration", "NDCG@10", "Recall@10", "Inf. Time (s)", "Storage (GB)"
    )
    .unwrap();
    writeln!(out, "{}", "-".repeat(label_w + 54)).unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<label_w$} | {:>7.1} | {:>9.1} | {:>13} | {:>11}",
            r.label,
            r.ndcg_pct,
            r.recall_pct,
            r.latency_cell(),
            r.storage_cell()
        )
        .unwrap();
    }
    out.push_str("Inf. Time is mean seconds per query (retrieval + reranking); GB = 2^30 bytes.\n");
    out
}
