//! Tokenization, inverted index and BM25 top-k retrieval.
//!
//! Scoring uses the Lucene-style idf `ln(1 + (N - df + 0.5) / (df + 0.5))`,
//! which is never negative, with `k1 = 1.2` and `b = 0.75` by default.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::par::Exec;
use crate::store::{CorpusManifest, Query};
use crate::{Error, RankedList, Result};

/// Lowercases and splits on every non-alphanumeric scalar. No stemming, no
/// stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Distinct query terms in first-occurrence order.
pub fn query_terms(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenize(text)
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("bm25 params out of range: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextField {
    Caption,
    Ocr,
}

impl TextField {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "caption" => Ok(TextField::Caption),
            "ocr" => Ok(TextField::Ocr),
            other => Err(Error::Config(format!("unknown text field `{other}`"))),
        }
    }
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// The saturated term-frequency factor for one (term, document) pair.
pub fn tf_weight(tf: u32, doc_len: u32, avgdl: f64, params: Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = params.k1 * (1.0 - params.b + params.b * doc_len as f64 / avgdl);
    tf * (params.k1 + 1.0) / (tf + norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub field: TextField,
    pub params: Bm25Params,
    /// Sorted ascending; a doc's ordinal is its position here.
    pub doc_ids: Vec<String>,
    pub doc_lens: Vec<u32>,
    pub avgdl: f64,
    pub postings: BTreeMap<String, Vec<Posting>>,
}

impl InvertedIndex {
    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<u64> {
        let path = path.as_ref();
        let mut body = serde_json::to_string(self).expect("index serializes");
        body.push('\n');
        body.push_str(&format!(
            "#stats docs={} terms={} postings={} avgdl={}\n",
            self.n_docs(),
            self.postings.len(),
            self.postings.values().map(Vec::len).sum::<usize>(),
            self.avgdl
        ));
        fs::write(path, &body).map_err(|e| Error::io(path, e))?;
        Ok(body.len() as u64)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let body = lines.next().ok_or_else(|| Error::parse(path, 1, "empty index file"))?;
        let index: InvertedIndex =
            serde_json::from_str(body).map_err(|e| Error::parse(path, 1, e.to_string()))?;
        let footer = lines.next().unwrap_or_default();
        let expect = format!("#stats docs={} ", index.n_docs());
        if !footer.starts_with(&expect) {
            return Err(Error::parse(path, 2, "missing or inconsistent stats footer"));
        }
        Ok(index)
    }
}

/// Builds an index over `(doc_id, text)` pairs. The result does not depend
/// on input order.
pub fn build_index<I, S, T>(docs: I, field: TextField, params: Bm25Params) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = (S, T)>,
    S: Into<String>,
    T: AsRef<str>,
{
    params.validate()?;
    let mut tokenized: Vec<(String, Vec<String>)> = docs
        .into_iter()
        .map(|(id, text)| (id.into(), tokenize(text.as_ref())))
        .collect();
    if tokenized.is_empty() {
        return Err(Error::Invalid("cannot index an empty corpus".into()));
    }
    tokenized.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = tokenized.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateId(w[0].0.clone()));
    }

    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lens = Vec::with_capacity(tokenized.len());
    let mut doc_ids = Vec::with_capacity(tokenized.len());
    for (ordinal, (id, terms)) in tokenized.into_iter().enumerate() {
        doc_lens.push(terms.len() as u32);
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in terms {
            *counts.entry(t).or_default() += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push(Posting {
                doc: ordinal as u32,
                tf,
            });
        }
        doc_ids.push(id);
    }
    let avgdl = doc_lens.iter().map(|&l| l as f64).sum::<f64>() / doc_lens.len() as f64;
    Ok(InvertedIndex {
        field,
        params,
        doc_ids,
        doc_lens,
        avgdl,
        postings,
    })
}

/// Indexes the chosen text field of every slide; a missing OCR text indexes
/// as empty.
pub fn index_manifest(manifest: &CorpusManifest, field: TextField, params: Bm25Params) -> Result<InvertedIndex> {
    build_index(
        manifest.docs.iter().map(|d| {
            let text = match field {
                TextField::Caption => d.caption.as_str(),
                TextField::Ocr => d.ocr_text.as_deref().unwrap_or(""),
            };
            (d.doc_id.clone(), text)
        }),
        field,
        params,
    )
}

/// Top-k by BM25. Documents matching no query term are not returned.
pub fn bm25_search(index: &InvertedIndex, query_id: &str, query_text: &str, k: usize) -> RankedList {
    let n = index.n_docs();
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for term in query_terms(query_text) {
        let Some(list) = index.postings.get(&term) else {
            continue;
        };
        let w = idf(n, list.len());
        for p in list {
            let s = w * tf_weight(p.tf, index.doc_lens[p.doc as usize], index.avgdl, index.params);
            *acc.entry(p.doc).or_insert(0.0) += s;
        }
    }
    let scored = acc
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(doc, s)| (index.doc_ids[doc as usize].clone(), s))
        .collect();
    RankedList::top_k(query_id, "bm25", scored, k)
}

/// One search per query, in query order.
pub fn bm25_search_batch(index: &InvertedIndex, queries: &[Query], k: usize, exec: Exec) -> Vec<RankedList> {
    exec.map(queries, |q| bm25_search(index, &q.query_id, &q.text, k))
}
