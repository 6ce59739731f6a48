//! Seeded synthetic corpora for tests, benches and the self-test.
//!
//! [`SyntheticDataset`] mimics the shape of a slide benchmark: decks of
//! slides sharing a topic, captions drawn from topic vocabulary, single- and
//! multi-vector embeddings clustered by topic, and queries whose evidence
//! is one to three slides of a deck.

use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::store::{
    write_embeddings, write_manifest, write_qrels, write_queries, CorpusManifest, DType, EmbeddingMatrix, QrelSet,
    Query, SlideDoc, StoreKind,
};
use crate::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Documents over the vocabulary `w0..w{vocab-1}`, lengths `0..=max_len`.
pub fn random_text_corpus(rng: &mut impl Rng, n_docs: usize, vocab: usize, max_len: usize) -> Vec<(String, String)> {
    (0..n_docs)
        .map(|i| {
            let len = rng.random_range(0..=max_len);
            let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect();
            (format!("d{i:04}"), words.join(" "))
        })
        .collect()
}

pub fn random_query(rng: &mut impl Rng, vocab: usize, max_len: usize) -> String {
    let len = rng.random_range(1..=max_len);
    (0..len)
        .map(|_| format!("w{}", rng.random_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

const TOPIC_WORDS: usize = 12;
const GENERIC: [&str; 10] = [
    "slide", "overview", "total", "growth", "chart", "market", "share", "year", "percent", "region",
];

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: CorpusManifest,
    pub queries: Vec<Query>,
    pub qrels: QrelSet,
    pub doc_single: Vec<EmbeddingMatrix>,
    pub doc_multi: Vec<EmbeddingMatrix>,
    pub query_single: Vec<EmbeddingMatrix>,
    pub query_multi: Vec<EmbeddingMatrix>,
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetShape {
    pub decks: usize,
    pub slides_per_deck: usize,
    pub queries: usize,
    pub dim: usize,
    pub max_tokens: usize,
}

impl Default for DatasetShape {
    fn default() -> Self {
        DatasetShape {
            decks: 4,
            slides_per_deck: 3,
            queries: 5,
            dim: 16,
            max_tokens: 6,
        }
    }
}

impl SyntheticDataset {
    pub fn generate(seed: u64, shape: DatasetShape) -> Self {
        let mut rng = rng(seed);
        let DatasetShape {
            decks,
            slides_per_deck,
            queries: n_queries,
            dim,
            max_tokens,
        } = shape;

        let centroids: Vec<Vec<f32>> = (0..decks).map(|_| gaussian(&mut rng, dim)).collect();
        let mut docs = Vec::with_capacity(decks * slides_per_deck);
        let mut doc_single = Vec::new();
        let mut doc_multi = Vec::new();
        let mut doc_offsets = Vec::new();
        for (deck, centroid) in centroids.iter().enumerate() {
            for s in 0..slides_per_deck {
                let id = format!("deck{deck:03}_s{s:02}");
                let mut words: Vec<String> = (0..6)
                    .map(|_| format!("t{deck}x{}", rng.random_range(0..TOPIC_WORDS)))
                    .collect();
                words.extend((0..3).map(|_| GENERIC.choose(&mut rng).unwrap().to_string()));
                words.shuffle(&mut rng);
                let offset = gaussian(&mut rng, dim);
                let single: Vec<f32> = centroid
                    .iter()
                    .zip(&offset)
                    .map(|(c, o)| c + 0.6 * o)
                    .collect();
                let rows = rng.random_range(1..=max_tokens);
                let mut multi = Vec::with_capacity(rows * dim);
                for _ in 0..rows {
                    let noise = gaussian(&mut rng, dim);
                    let tok: Vec<f32> = single.iter().zip(&noise).map(|(c, n)| c + 0.5 * n).collect();
                    multi.extend(unit(&tok));
                }
                doc_single.push(EmbeddingMatrix::single(id.clone(), single.clone()).unwrap());
                doc_multi.push(EmbeddingMatrix::new(id.clone(), rows, dim, multi).unwrap());
                doc_offsets.push((deck, words.clone(), single));
                docs.push(SlideDoc {
                    doc_id: id,
                    deck_id: format!("deck{deck:03}"),
                    caption: words.join(" "),
                    ocr_text: None,
                    image_path: None,
                });
            }
        }

        let mut queries = Vec::new();
        let mut qrels = QrelSet::new();
        let mut query_single = Vec::new();
        let mut query_multi = Vec::new();
        for qi in 0..n_queries {
            let qid = format!("q{qi:03}");
            let deck = rng.random_range(0..decks);
            let hops = rng.random_range(1..=slides_per_deck.min(3));
            let mut slides: Vec<usize> = (0..slides_per_deck).collect();
            slides.shuffle(&mut rng);
            slides.truncate(hops);
            slides.sort_unstable();
            let mut words = Vec::new();
            let mut mean = vec![0.0f32; dim];
            for &s in &slides {
                let idx = deck * slides_per_deck + s;
                let (_, caption_words, vec) = &doc_offsets[idx];
                words.extend(caption_words.choose_multiple(&mut rng, 2).cloned());
                mean.iter_mut().zip(vec).for_each(|(m, v)| *m += v / hops as f32);
                qrels.insert(qid.clone(), docs[idx].doc_id.clone());
            }
            let noise = gaussian(&mut rng, dim);
            let qvec: Vec<f32> = mean.iter().zip(&noise).map(|(m, n)| m + 0.2 * n).collect();
            let qrows = words.len().max(1);
            let mut qmulti = Vec::with_capacity(qrows * dim);
            for _ in 0..qrows {
                let n = gaussian(&mut rng, dim);
                let tok: Vec<f32> = qvec.iter().zip(&n).map(|(c, e)| c + 0.5 * e).collect();
                qmulti.extend(unit(&tok));
            }
            query_single.push(EmbeddingMatrix::single(qid.clone(), qvec).unwrap());
            query_multi.push(EmbeddingMatrix::new(qid.clone(), qrows, dim, qmulti).unwrap());
            queries.push(Query {
                query_id: qid,
                text: words.join(" "),
            });
        }

        SyntheticDataset {
            manifest: CorpusManifest::new("synthetic", docs).expect("unique ids"),
            queries,
            qrels,
            doc_single,
            doc_multi,
            query_single,
            query_multi,
        }
    }

    /// Writes every artifact under `dir` and returns their paths.
    pub fn write_to(&self, dir: &Path) -> Result<DatasetFiles> {
        let files = DatasetFiles {
            manifest: dir.join("corpus.jsonl"),
            queries: dir.join("queries.jsonl"),
            qrels: dir.join("qrels.txt"),
            doc_single: dir.join("caption_dense.emb"),
            doc_multi: dir.join("visual_late.emb"),
            query_single: dir.join("query_dense.emb"),
            query_multi: dir.join("query_late.emb"),
        };
        write_manifest(&files.manifest, &self.manifest)?;
        write_queries(&files.queries, &self.queries)?;
        write_qrels(&files.qrels, &self.qrels)?;
        write_embeddings(&files.doc_single, &self.doc_single, StoreKind::Single, DType::F32)?;
        write_embeddings(&files.doc_multi, &self.doc_multi, StoreKind::Multi, DType::F16)?;
        write_embeddings(&files.query_single, &self.query_single, StoreKind::Single, DType::F32)?;
        write_embeddings(&files.query_multi, &self.query_multi, StoreKind::Multi, DType::F16)?;
        Ok(files)
    }
}

#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub manifest: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
    pub doc_single: PathBuf,
    pub doc_multi: PathBuf,
    pub query_single: PathBuf,
    pub query_multi: PathBuf,
}

fn unit(v: &[f32]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_consistent() {
        let a = SyntheticDataset::generate(7, DatasetShape::default());
        let b = SyntheticDataset::generate(7, DatasetShape::default());
        assert_eq!(a.queries, b.queries);
        assert_eq!(a.manifest.len(), 12);
        assert_eq!(a.qrels.len(), 5);
        assert!(a.qrels.dangling(&a.manifest).is_empty());
        assert!(a.doc_multi.iter().all(|m| m.rows >= 1 && m.dim == 16));
    }
}
