//! Experimental configurations end to end: one or more first-stage
//! retrievers, optional fusion, optional reranking, with per-stage timing.
//!
//! With a reranker each retriever returns `candidates_k` (100 by default)
//! and the scorer reorders them down to `final_n` (10). Without one every
//! retriever returns `final_n` directly.

mod external;
mod scorer;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::bm25::{bm25_search, InvertedIndex};
use crate::dense::{dense_search, DenseIndex};
use crate::fusion::{FusionMethod, FusionSpec};
use crate::late::{late_search, MultiVectorIndex};
use crate::store::{CorpusManifest, EmbeddingMatrix, EmbeddingStore, Query, SlideDoc};
use crate::{Error, RankedList, Result};

pub use external::{ExternalScorer, DEFAULT_TIMEOUT};
pub use scorer::{
    builtin_scorer, lexical_overlap, Candidate, ConstantScorer, DocScore, LexicalOverlapScorer, OracleScorer,
    Scorer, ScorerRequest, ScorerResponse, BUILTIN_SCORERS,
};

pub const DEFAULT_CANDIDATES_K: usize = 100;
pub const DEFAULT_FINAL_N: usize = 10;

pub enum Engine {
    Bm25(InvertedIndex),
    Dense(DenseIndex),
    Late(MultiVectorIndex),
}

/// A named first-stage engine plus the precomputed query embeddings it
/// needs (empty for BM25).
pub struct Retriever {
    pub name: String,
    pub engine: Engine,
    query_embeddings: HashMap<String, EmbeddingMatrix>,
}

impl Retriever {
    pub fn bm25(name: impl Into<String>, index: InvertedIndex) -> Self {
        Retriever {
            name: name.into(),
            engine: Engine::Bm25(index),
            query_embeddings: HashMap::new(),
        }
    }

    pub fn dense(name: impl Into<String>, index: DenseIndex, queries: EmbeddingStore) -> Self {
        Self::with_queries(name, Engine::Dense(index), queries)
    }

    pub fn late(name: impl Into<String>, index: MultiVectorIndex, queries: EmbeddingStore) -> Self {
        Self::with_queries(name, Engine::Late(index), queries)
    }

    fn with_queries(name: impl Into<String>, engine: Engine, queries: EmbeddingStore) -> Self {
        Retriever {
            name: name.into(),
            engine,
            query_embeddings: queries.matrices.into_iter().map(|m| (m.doc_id.clone(), m)).collect(),
        }
    }

    fn embedding(&self, query_id: &str) -> Result<&EmbeddingMatrix> {
        self.query_embeddings
            .get(query_id)
            .ok_or_else(|| Error::MissingQueryEmbedding {
                engine: self.name.clone(),
                query_id: query_id.to_string(),
            })
    }

    pub fn retrieve(&self, query: &Query, k: usize) -> Result<RankedList> {
        let mut list = match &self.engine {
            Engine::Bm25(index) => bm25_search(index, &query.query_id, &query.text, k),
            Engine::Dense(index) => {
                let q = self.embedding(&query.query_id)?;
                if q.rows != 1 {
                    return Err(Error::Invalid(format!(
                        "dense query `{}` has {} rows",
                        query.query_id, q.rows
                    )));
                }
                dense_search(index, &query.query_id, &q.values, k)?
            }
            Engine::Late(index) => late_search(index, &query.query_id, self.embedding(&query.query_id)?, k)?,
        };
        list.producer = self.name.clone();
        Ok(list)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub retrievers: Vec<String>,
    pub fusion: Option<FusionMethod>,
    /// Label of the reranking stage; the scorer itself is passed to
    /// [`run_pipeline`].
    pub reranker: Option<String>,
    pub candidates_k: usize,
    pub final_n: usize,
}

impl PipelineConfig {
    /// Budgets default to k = 100 candidates when reranking and n = 10 results.
    pub fn new(retrievers: Vec<String>, fusion: Option<FusionMethod>, reranker: Option<String>) -> Self {
        let candidates_k = if reranker.is_some() {
            DEFAULT_CANDIDATES_K
        } else {
            DEFAULT_FINAL_N
        };
        PipelineConfig {
            retrievers,
            fusion,
            reranker,
            candidates_k,
            final_n: DEFAULT_FINAL_N,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.final_n == 0 {
            return Err(Error::Config("final_n must be positive".into()));
        }
        if self.final_n > self.candidates_k {
            return Err(Error::Config(format!(
                "final_n ({}) exceeds candidates_k ({})",
                self.final_n, self.candidates_k
            )));
        }
        if self.reranker.is_none() && self.candidates_k != self.final_n {
            return Err(Error::Config(format!(
                "without a reranker candidates_k ({}) must equal final_n ({})",
                self.candidates_k, self.final_n
            )));
        }
        match (self.retrievers.len(), &self.fusion) {
            (0, _) => Err(Error::Config("no retrievers configured".into())),
            (1, None) => Ok(()),
            (n, None) => Err(Error::Config(format!("{n} retrievers need a fusion method"))),
            (1, Some(_)) => Err(Error::Config("fusion needs at least two retrievers".into())),
            (n, Some(FusionMethod::Composite { .. })) if n != 2 => {
                Err(Error::Config("composite fusion takes exactly two retrievers".into()))
            }
            (_, Some(method)) => FusionSpec {
                method: *method,
                target_k: self.candidates_k,
            }
            .validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub query_id: String,
    pub retrieval_s: f64,
    /// Zero when there is no reranking stage.
    pub rerank_s: f64,
    pub wall_s: f64,
}

/// Per-query timings of one pipeline run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimingLog {
    pub reranker: Option<String>,
    pub rows: Vec<StageTiming>,
}

impl TimingLog {
    fn mean(&self, f: fn(&StageTiming) -> f64) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64
        }
    }

    pub fn mean_retrieval_s(&self) -> f64 {
        self.mean(|t| t.retrieval_s)
    }

    pub fn mean_rerank_s(&self) -> f64 {
        self.mean(|t| t.rerank_s)
    }

    /// Tab-separated, preceded by a `# reranker=` line.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# reranker={}\n", self.reranker.as_deref().unwrap_or("none"));
        out.push_str("query_id\tretrieval_s\trerank_s\twall_s\n");
        for t in &self.rows {
            writeln!(out, "{}\t{:.9}\t{:.9}\t{:.9}", t.query_id, t.retrieval_s, t.rerank_s, t.wall_s).unwrap();
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut log = TimingLog::default();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(r) = line.strip_prefix("# reranker=") {
                log.reranker = (r != "none").then(|| r.to_string());
                continue;
            }
            if line.is_empty() || line.starts_with('#') || line.starts_with("query_id\t") {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [qid, retr, rerank, wall] = f[..] else {
                return Err(Error::parse(path, lineno, "expected 4 tab-separated columns"));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| *v >= 0.0 && v.is_finite())
                    .ok_or_else(|| Error::parse(path, lineno, format!("bad seconds `{s}`")))
            };
            log.rows.push(StageTiming {
                query_id: qid.to_string(),
                retrieval_s: num(retr)?,
                rerank_s: num(rerank)?,
                wall_s: num(wall)?,
            });
        }
        Ok(log)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub runs: Vec<RankedList>,
    pub timings: TimingLog,
}

/// Builds the scorer request for `candidates`, in their current order.
pub fn scorer_request(query: &Query, candidates: &RankedList, corpus: &HashMap<&str, &SlideDoc>) -> ScorerRequest {
    ScorerRequest {
        query_id: query.query_id.clone(),
        text: query.text.clone(),
        candidates: candidates
            .entries
            .iter()
            .map(|e| {
                let doc = corpus.get(e.doc_id.as_str());
                Candidate {
                    doc_id: e.doc_id.clone(),
                    caption: doc.map(|d| d.caption.clone()).unwrap_or_default(),
                    ocr_text: doc.and_then(|d| d.ocr_text.clone()),
                    image_path: doc.and_then(|d| d.image_path.clone()),
                }
            })
            .collect(),
    }
}

/// Reorders `candidates` by descending score; equal scores keep their prior
/// order. Output scores are the scorer's.
pub fn rerank(candidates: &RankedList, scores: &[f64], producer: &str, n: usize) -> RankedList {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    RankedList::from_ordered(
        candidates.query_id.clone(),
        producer,
        order
            .into_iter()
            .take(n)
            .map(|i| (candidates.entries[i].doc_id.clone(), scores[i])),
    )
}

/// First stage for one query: retrieve from every retriever, fuse if
/// configured.
pub fn first_stage(config: &PipelineConfig, retrievers: &[&Retriever], query: &Query) -> Result<RankedList> {
    let depth = config.candidates_k;
    let lists = retrievers
        .iter()
        .map(|r| r.retrieve(query, depth))
        .collect::<Result<Vec<_>>>()?;
    match config.fusion {
        Some(method) => FusionSpec { method, target_k: depth }.apply(&lists),
        None => Ok(lists.into_iter().next().expect("validated: one retriever")),
    }
}

/// Runs every query through the configured stages, one query at a time so
/// that a scorer process is fed serially and timings stay attributable.
pub fn run_pipeline(
    config: &PipelineConfig,
    retrievers: &[Retriever],
    corpus: &CorpusManifest,
    queries: &[Query],
    mut scorer: Option<&mut dyn Scorer>,
) -> Result<PipelineOutput> {
    config.validate()?;
    if config.reranker.is_some() != scorer.is_some() {
        return Err(Error::Config("reranker label and scorer must be given together".into()));
    }
    let by_name: HashMap<&str, &Retriever> = retrievers.iter().map(|r| (r.name.as_str(), r)).collect();
    let stage: Vec<&Retriever> = config
        .retrievers
        .iter()
        .map(|n| {
            by_name
                .get(n.as_str())
                .copied()
                .ok_or_else(|| Error::Config(format!("unknown retriever `{n}`")))
        })
        .collect::<Result<_>>()?;
    let docs = corpus.by_id();
    let rerank_tag = config.reranker.as_ref().map(|r| format!("rerank:{r}"));

    let mut runs = Vec::with_capacity(queries.len());
    let mut rows = Vec::with_capacity(queries.len());
    for query in queries {
        let start = Instant::now();
        let candidates = first_stage(config, &stage, query)?;
        let retrieved = Instant::now();
        let mut list = match (scorer.as_deref_mut(), &rerank_tag) {
            (Some(scorer), Some(tag)) => {
                let request = scorer_request(query, &candidates, &docs);
                let scores = scorer.score(&request)?.align(&request)?;
                rerank(&candidates, &scores, tag, config.final_n)
            }
            _ => candidates,
        };
        list.truncate(config.final_n);
        let done = Instant::now();
        rows.push(StageTiming {
            query_id: query.query_id.clone(),
            retrieval_s: (retrieved - start).as_secs_f64(),
            rerank_s: if rerank_tag.is_some() {
                (done - retrieved).as_secs_f64()
            } else {
                0.0
            },
            wall_s: (done - start).as_secs_f64(),
        });
        runs.push(list);
    }
    Ok(PipelineOutput {
        runs,
        timings: TimingLog {
            reranker: config.reranker.clone(),
            rows,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm25::{index_manifest, Bm25Params, TextField};
    use crate::store::{QrelSet, SlideDoc};

    fn corpus() -> CorpusManifest {
        let caps = ["pet food sales", "pet care growth", "coffee sales", "water growth", "pet pet pet"];
        CorpusManifest::new(
            "toy",
            caps.iter()
                .enumerate()
                .map(|(i, c)| SlideDoc {
                    doc_id: format!("s{i}"),
                    deck_id: "d".into(),
                    caption: c.to_string(),
                    ocr_text: None,
                    image_path: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn bm25() -> Retriever {
        Retriever::bm25("bm25", index_manifest(&corpus(), TextField::Caption, Bm25Params::default()).unwrap())
    }

    fn queries() -> Vec<Query> {
        vec![
            Query { query_id: "q1".into(), text: "pet growth".into() },
            Query { query_id: "q2".into(), text: "sales".into() },
        ]
    }

    #[test]
    fn config_validation() {
        let mut c = PipelineConfig::new(vec!["a".into()], None, None);
        assert_eq!((c.candidates_k, c.final_n), (10, 10));
        c.validate().unwrap();
        c.candidates_k = 100;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::new(vec!["a".into()], None, Some("oracle".into()));
        assert_eq!(c.candidates_k, 100);
        c.final_n = 101;
        assert!(c.validate().is_err());
        assert!(PipelineConfig::new(vec!["a".into(), "b".into()], None, None).validate().is_err());
        let three = PipelineConfig::new(
            vec!["a".into(), "b".into(), "c".into()],
            Some(FusionMethod::Composite { pad: Default::default() }),
            None,
        );
        assert!(three.validate().is_err());
    }

    #[test]
    fn bm25_only_has_zero_rerank_time() {
        let cfg = PipelineConfig::new(vec!["bm25".into()], None, None);
        let out = run_pipeline(&cfg, &[bm25()], &corpus(), &queries(), None).unwrap();
        assert_eq!(out.runs.len(), 2);
        assert!(out.timings.rows.iter().all(|t| t.rerank_s == 0.0));
        assert_eq!(out.runs[1], {
            let mut l = bm25().retrieve(&queries()[1], 10).unwrap();
            l.truncate(10);
            l
        });
    }

    #[test]
    fn zero_scorer_keeps_order() {
        let cfg = PipelineConfig {
            final_n: 3,
            ..PipelineConfig::new(vec!["bm25".into()], None, Some("zero".into()))
        };
        let mut zero = ConstantScorer(0.0);
        let out = run_pipeline(&cfg, &[bm25()], &corpus(), &queries(), Some(&mut zero)).unwrap();
        for (q, run) in queries().iter().zip(&out.runs) {
            let plain = bm25().retrieve(q, 3).unwrap();
            assert_eq!(run.doc_ids().collect::<Vec<_>>(), plain.doc_ids().collect::<Vec<_>>());
            assert_eq!(run.producer, "rerank:zero");
        }
    }

    #[test]
    fn oracle_moves_relevant_first() {
        let mut qrels = QrelSet::new();
        qrels.insert("q1", "s3");
        qrels.insert("q2", "s2");
        let cfg = PipelineConfig::new(vec!["bm25".into()], None, Some("oracle".into()));
        let mut oracle = OracleScorer::new(qrels);
        let out = run_pipeline(&cfg, &[bm25()], &corpus(), &queries(), Some(&mut oracle)).unwrap();
        assert_eq!(out.runs[0].entries[0].doc_id, "s3");
        assert_eq!(out.runs[1].entries[0].doc_id, "s2");
    }

    #[test]
    fn missing_query_embedding() {
        let store = EmbeddingStore {
            kind: crate::store::StoreKind::Single,
            dtype: crate::store::DType::F32,
            dim: 2,
            matrices: vec![EmbeddingMatrix::single("s0", vec![1.0, 0.0]).unwrap()],
        };
        let idx = crate::dense::build_dense(&store).unwrap();
        let r = Retriever::dense("dense", idx, store);
        assert!(matches!(
            r.retrieve(&queries()[0], 5),
            Err(Error::MissingQueryEmbedding { .. })
        ));
    }

    #[test]
    fn rerank_ties_keep_prior_rank() {
        let l = RankedList::from_ordered("q", "x", ["a", "b", "c"].map(|d| (d.to_string(), 1.0)));
        let r = rerank(&l, &[0.0, 1.0, 0.0], "t", 3);
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["b", "a", "c"]);
        let r = rerank(&l, &[-1.0, -2.0, -3.0], "t", 2);
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn timing_log_round_trip() {
        let log = TimingLog {
            reranker: Some("oracle".into()),
            rows: vec![StageTiming { query_id: "q".into(), retrieval_s: 0.25, rerank_s: 0.5, wall_s: 0.75 }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        log.write(&p).unwrap();
        assert_eq!(TimingLog::read(&p).unwrap(), log);
    }
}
