//! Corpus data model and on-disk artifacts.
//!
//! Text artifacts are line-delimited UTF-8:
//!
//! * corpus manifest: one JSON object per line (`doc_id`, `deck_id`,
//!   `caption`, `ocr_text`, `image_path`), optionally preceded by a header
//!   object `{"dataset": ..., "doc_count": ...}`;
//! * queries: one JSON object per line (`query_id`, `text`);
//! * qrels: TREC lines `query_id 0 doc_id relevance`.
//!
//! Embeddings live in the binary `.emb` + `.ids` pair, see [`embedding`].

mod embedding;
mod storage;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use embedding::{read_embeddings, write_embeddings, DType, EmbeddingMatrix, EmbeddingStore, StoreKind};
pub use storage::{storage_report, BenchStorage};

/// One slide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideDoc {
    pub doc_id: String,
    #[serde(default)]
    pub deck_id: String,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
}

impl SlideDoc {
    pub fn has_content(&self) -> bool {
        !self.caption.is_empty() || self.ocr_text.is_some() || self.image_path.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestHeader {
    dataset: String,
    #[serde(default)]
    doc_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusManifest {
    pub dataset: String,
    pub docs: Vec<SlideDoc>,
}

impl CorpusManifest {
    pub fn new(dataset: impl Into<String>, docs: Vec<SlideDoc>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for d in &docs {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(Error::DuplicateId(d.doc_id.clone()));
            }
            if !d.has_content() {
                return Err(Error::Invalid(format!(
                    "doc `{}` has no caption, ocr_text or image_path",
                    d.doc_id
                )));
            }
        }
        Ok(CorpusManifest {
            dataset: dataset.into(),
            docs,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn by_id(&self) -> HashMap<&str, &SlideDoc> {
        self.docs.iter().map(|d| (d.doc_id.as_str(), d)).collect()
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn non_blank_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut dataset = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut declared = None;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, (lineno, line)) in non_blank_lines(&text).enumerate() {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if n == 0 && value.get("dataset").is_some() && value.get("doc_id").is_none() {
            let header: ManifestHeader =
                serde_json::from_value(value).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            dataset = header.dataset;
            declared = header.doc_count;
            continue;
        }
        let doc: SlideDoc =
            serde_json::from_value(value).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if !doc.has_content() {
            return Err(Error::parse(
                path,
                lineno,
                format!("doc `{}` has no caption, ocr_text or image_path", doc.doc_id),
            ));
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateId(doc.doc_id));
        }
        docs.push(doc);
    }
    if let Some(count) = declared {
        if count != docs.len() {
            return Err(Error::parse(
                path,
                1,
                format!("header declares {count} docs, file has {}", docs.len()),
            ));
        }
    }
    Ok(CorpusManifest { dataset, docs })
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &CorpusManifest) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header = ManifestHeader {
        dataset: manifest.dataset.clone(),
        doc_count: Some(manifest.docs.len()),
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for d in &manifest.docs {
        out.push_str(&serde_json::to_string(d).expect("doc serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in non_blank_lines(&text) {
        let q: Query = serde_json::from_str(line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if q.text.trim().is_empty() {
            return Err(Error::parse(path, lineno, format!("query `{}` has empty text", q.query_id)));
        }
        if !seen.insert(q.query_id.clone()) {
            return Err(Error::DuplicateId(q.query_id));
        }
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[Query]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q).expect("query serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Binary relevance judgments: query id to the set of evidence doc ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QrelSet {
    judgments: BTreeMap<String, BTreeSet<String>>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>) {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into());
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.judgments.get(query_id)
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.judgments
            .get(query_id)
            .is_some_and(|s| s.contains(doc_id))
    }

    /// Query ids in ascending order.
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.judgments.iter().map(|(q, s)| (q.as_str(), s))
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Every judged doc id missing from the manifest, as `(query_id, doc_id)`.
    pub fn dangling(&self, manifest: &CorpusManifest) -> Vec<(String, String)> {
        let known: HashSet<&str> = manifest.docs.iter().map(|d| d.doc_id.as_str()).collect();
        self.iter()
            .flat_map(|(q, docs)| {
                docs.iter()
                    .filter(|d| !known.contains(d.as_str()))
                    .map(move |d| (q.to_string(), d.clone()))
            })
            .collect()
    }
}

/// Parses TREC qrels. Relevance 0 lines are accepted and carry no judgment.
pub fn load_qrels(path: impl AsRef<Path>) -> Result<QrelSet> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut qrels = QrelSet::new();
    for (lineno, line) in non_blank_lines(&text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [query_id, _iter, doc_id, rel] = fields[..] else {
            return Err(Error::parse(path, lineno, "expected `query_id 0 doc_id relevance`"));
        };
        match rel {
            "1" => qrels.insert(query_id, doc_id),
            "0" => {}
            other => {
                return Err(Error::parse(path, lineno, format!("relevance must be 0 or 1, got `{other}`")))
            }
        }
    }
    Ok(qrels)
}

pub fn write_qrels(path: impl AsRef<Path>, qrels: &QrelSet) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    for (q, docs) in qrels.iter() {
        for d in docs {
            out.push_str(&format!("{q} 0 {d} 1\n"));
        }
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
