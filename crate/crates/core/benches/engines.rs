//! Sequential vs parallel execution of the scoring hot paths.
//!
//! Build with `--no-default-features` to confirm the sequential fallback:
//! `Exec::Parallel` then runs on the calling thread and both series match.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slideret_core::bm25::{bm25_search_batch, build_index, Bm25Params, TextField};
use slideret_core::dense::{build_dense, dense_search_with};
use slideret_core::late::{build_multi, late_search_with};
use slideret_core::metrics::evaluate;
use slideret_core::par::Exec;
use slideret_core::store::{DType, EmbeddingMatrix, EmbeddingStore, Query, QrelSet, StoreKind};
use slideret_core::synth::{gaussian, random_query, random_text_corpus, rng};
use slideret_core::RankedList;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn dense(c: &mut Criterion) {
    let mut r = rng(1);
    let dim = 768;
    let matrices = (0..20_000)
        .map(|i| EmbeddingMatrix::single(format!("d{i:05}"), gaussian(&mut r, dim)).unwrap())
        .collect();
    let store = EmbeddingStore {
        kind: StoreKind::Single,
        dtype: DType::F32,
        dim,
        matrices,
    };
    let index = build_dense(&store).unwrap();
    let q = gaussian(&mut r, dim);
    let mut g = c.benchmark_group("dense_20k_d768");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| dense_search_with(&index, "q", &q, 100, exec).unwrap()));
    }
    g.finish();
}

fn late(c: &mut Criterion) {
    let mut r = rng(2);
    let dim = 128;
    let mut g = c.benchmark_group("maxsim_d128");
    for docs in [500usize, 2000] {
        let matrices = (0..docs)
            .map(|i| {
                let rows = 64;
                EmbeddingMatrix::new(format!("d{i:05}"), rows, dim, gaussian(&mut r, rows * dim)).unwrap()
            })
            .collect();
        let store = EmbeddingStore {
            kind: StoreKind::Multi,
            dtype: DType::F16,
            dim,
            matrices,
        };
        let index = build_multi(&store).unwrap();
        let q = EmbeddingMatrix::new("q", 24, dim, gaussian(&mut r, 24 * dim)).unwrap();
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, docs), &docs, |b, _| {
                b.iter(|| late_search_with(&index, "q", &q, 100, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn bm25(c: &mut Criterion) {
    let mut r = rng(3);
    let docs = random_text_corpus(&mut r, 20_000, 5_000, 40);
    let index = build_index(docs.iter().cloned(), TextField::Caption, Bm25Params::default()).unwrap();
    let queries: Vec<Query> = (0..256)
        .map(|i| Query {
            query_id: format!("q{i:03}"),
            text: random_query(&mut r, 5_000, 8),
        })
        .collect();
    let mut g = c.benchmark_group("bm25_batch_256q");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| bm25_search_batch(&index, &queries, 100, exec)));
    }
    g.finish();
}

fn eval(c: &mut Criterion) {
    let mut qrels = QrelSet::new();
    let mut runs = Vec::new();
    for q in 0..5_000 {
        let qid = format!("q{q:05}");
        for d in 0..5 {
            qrels.insert(qid.clone(), format!("d{}", (q * 7 + d * 13) % 1000));
        }
        runs.push(RankedList::from_ordered(
            qid,
            "bench",
            (0..100).map(|i| (format!("d{}", (q + i * 31) % 1000), 100.0 - i as f64)),
        ));
    }
    let mut g = c.benchmark_group("evaluate_5k_queries");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| evaluate(&runs, &qrels, 10, exec)));
    }
    g.finish();
}

criterion_group!(benches, dense, late, bm25, eval);
criterion_main!(benches);
