//! Second-stage scorers and the request/response objects they exchange.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bm25::query_terms;
use crate::store::QrelSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
}

/// One query and its candidates, in first-stage rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerRequest {
    pub query_id: String,
    pub text: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerResponse {
    pub query_id: String,
    pub scores: Vec<DocScore>,
}

impl ScorerResponse {
    /// Scores in the request's candidate order. The response must cover
    /// exactly the requested candidates, each once, with finite scores.
    pub fn align(&self, req: &ScorerRequest) -> Result<Vec<f64>> {
        let fail = |message: String| Error::Scorer {
            query_id: req.query_id.clone(),
            message,
        };
        if self.query_id != req.query_id {
            return Err(fail(format!("response is for query `{}`", self.query_id)));
        }
        let mut by_doc: HashMap<&str, f64> = HashMap::with_capacity(self.scores.len());
        for s in &self.scores {
            if !s.score.is_finite() {
                return Err(fail(format!("non-finite score for `{}`", s.doc_id)));
            }
            if by_doc.insert(&s.doc_id, s.score).is_some() {
                return Err(fail(format!("duplicate score for `{}`", s.doc_id)));
            }
        }
        let requested: HashSet<&str> = req.candidates.iter().map(|c| c.doc_id.as_str()).collect();
        if let Some(extra) = self.scores.iter().find(|s| !requested.contains(s.doc_id.as_str())) {
            return Err(fail(format!("score for unrequested doc `{}`", extra.doc_id)));
        }
        req.candidates
            .iter()
            .map(|c| {
                by_doc
                    .get(c.doc_id.as_str())
                    .copied()
                    .ok_or_else(|| fail(format!("no score for candidate `{}`", c.doc_id)))
            })
            .collect()
    }
}

pub trait Scorer {
    fn name(&self) -> &str;
    fn score(&mut self, request: &ScorerRequest) -> Result<ScorerResponse>;
}

fn respond(req: &ScorerRequest, f: impl Fn(&Candidate) -> f64) -> ScorerResponse {
    ScorerResponse {
        query_id: req.query_id.clone(),
        scores: req
            .candidates
            .iter()
            .map(|c| DocScore {
                doc_id: c.doc_id.clone(),
                score: f(c),
            })
            .collect(),
    }
}

/// Scores judged-relevant candidates 1 and the rest 0.
pub struct OracleScorer {
    qrels: QrelSet,
}

impl OracleScorer {
    pub fn new(qrels: QrelSet) -> Self {
        OracleScorer { qrels }
    }
}

impl Scorer for OracleScorer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn score(&mut self, req: &ScorerRequest) -> Result<ScorerResponse> {
        Ok(respond(req, |c| {
            if self.qrels.is_relevant(&req.query_id, &c.doc_id) {
                1.0
            } else {
                0.0
            }
        }))
    }
}

/// Fraction of distinct query terms that occur in the caption.
pub struct LexicalOverlapScorer;

pub fn lexical_overlap(query: &str, caption: &str) -> f64 {
    let q = query_terms(query);
    if q.is_empty() {
        return 0.0;
    }
    let c: HashSet<String> = query_terms(caption).into_iter().collect();
    q.iter().filter(|t| c.contains(*t)).count() as f64 / q.len() as f64
}

impl Scorer for LexicalOverlapScorer {
    fn name(&self) -> &str {
        "lexical_overlap"
    }

    fn score(&mut self, req: &ScorerRequest) -> Result<ScorerResponse> {
        Ok(respond(req, |c| lexical_overlap(&req.text, &c.caption)))
    }
}

/// Gives every candidate the same score, so reranking keeps the input order.
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn name(&self) -> &str {
        "zero"
    }

    fn score(&mut self, req: &ScorerRequest) -> Result<ScorerResponse> {
        Ok(respond(req, |_| self.0))
    }
}

pub const BUILTIN_SCORERS: [&str; 3] = ["oracle", "lexical_overlap", "zero"];

pub fn builtin_scorer(name: &str, qrels: Option<&QrelSet>) -> Result<Box<dyn Scorer + Send>> {
    match name {
        "oracle" => {
            let qrels = qrels.ok_or_else(|| Error::Config("the oracle scorer needs qrels".into()))?;
            Ok(Box::new(OracleScorer::new(qrels.clone())))
        }
        "lexical_overlap" => Ok(Box::new(LexicalOverlapScorer)),
        "zero" => Ok(Box::new(ConstantScorer(0.0))),
        other => Err(Error::Config(format!(
            "unknown scorer `{other}` (built-ins: {})",
            BUILTIN_SCORERS.join(", ")
        ))),
    }
}
