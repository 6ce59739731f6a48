//! Brute-force reference implementations used by the self-test and the
//! test suites. Each one recomputes its answer from raw inputs without
//! going through the engines' index structures.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use crate::bm25::{tokenize, Bm25Params};

fn order(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored
}

/// Evaluates the BM25 formula for every document and sorts.
pub fn bm25_brute(docs: &[(String, String)], query: &str, k: usize, params: Bm25Params) -> Vec<(String, f64)> {
    let tokenized: Vec<(String, Vec<String>)> = {
        let mut v: Vec<_> = docs.iter().map(|(id, t)| (id.clone(), tokenize(t))).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    };
    let n = tokenized.len() as f64;
    let avgdl = tokenized.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
    let mut terms: Vec<String> = Vec::new();
    for t in tokenize(query) {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }
    let df: HashMap<&str, f64> = terms
        .iter()
        .map(|t| {
            let c = tokenized.iter().filter(|(_, toks)| toks.contains(t)).count();
            (t.as_str(), c as f64)
        })
        .collect();
    let mut scored = Vec::new();
    for (id, toks) in &tokenized {
        let dl = toks.len() as f64;
        let mut score = 0.0;
        let mut matched = false;
        for t in &terms {
            let tf = toks.iter().filter(|x| *x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = df[t.as_str()];
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * (tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl)));
        }
        if matched && score > 0.0 {
            scored.push((id.clone(), score));
        }
    }
    order(scored, k)
}

fn unit_f32(v: &[f32]) -> Vec<f32> {
    let mut ss = 0.0f32;
    for x in v {
        ss += x * x;
    }
    let n = ss.sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Cosine of unit-normalized f32 vectors against every document.
pub fn dense_brute(docs: &[(String, Vec<f32>)], query: &[f32], k: usize) -> Vec<(String, f64)> {
    let q = unit_f32(query);
    let scored = docs
        .iter()
        .map(|(id, v)| {
            let d = unit_f32(v);
            let mut s = 0.0f32;
            for i in 0..q.len() {
                s += q[i] * d[i];
            }
            (id.clone(), s as f64)
        })
        .collect();
    order(scored, k)
}

/// Sum over query rows of the best dot product with any document row.
pub fn maxsim_brute(query: &[Vec<f32>], doc: &[Vec<f32>]) -> f32 {
    let mut total = 0.0f32;
    for q in query {
        let mut best = f32::NEG_INFINITY;
        for d in doc {
            let mut s = 0.0f32;
            for i in 0..q.len() {
                s += q[i] * d[i];
            }
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

pub fn late_brute(docs: &[(String, Vec<Vec<f32>>)], query: &[Vec<f32>], k: usize) -> Vec<(String, f64)> {
    let scored = docs
        .iter()
        .map(|(id, rows)| (id.clone(), maxsim_brute(query, rows) as f64))
        .collect();
    order(scored, k)
}

/// NDCG@k with the ideal ranking built by explicitly sorting gains.
pub fn ndcg_brute(ranked: &[&str], relevant: &BTreeSet<String>, k: usize) -> f64 {
    let gains: Vec<f64> = ranked
        .iter()
        .map(|d| if relevant.contains(*d) { 1.0 } else { 0.0 })
        .collect();
    let dcg = |g: &[f64]| -> f64 {
        g.iter()
            .take(k)
            .enumerate()
            .map(|(i, gain)| gain * std::f64::consts::LN_2 / ((i + 2) as f64).ln())
            .sum()
    };
    let mut ideal = vec![1.0; relevant.len()];
    ideal.resize(ideal.len().max(k), 0.0);
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(&gains) / idcg
    }
}

pub fn recall_brute(ranked: &[&str], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let top: BTreeSet<&str> = ranked.iter().take(k).copied().collect();
    relevant.iter().filter(|r| top.contains(r.as_str())).count() as f64 / relevant.len() as f64
}
