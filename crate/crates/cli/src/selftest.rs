//! Oracle and law checks runnable from the command line (`slideret selftest`)
//! and from the acceptance harness. Each check returns a [`Check`] instead of
//! panicking so that a full report can be printed.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use slideret_core::bm25::{bm25_search, build_index, Bm25Params, TextField};
use slideret_core::contrastive::{
    infonce_grad, infonce_loss, rotation_triplets, toy_finetune, ContrastiveConfig, TrainingTriplet,
};
use slideret_core::dense::{build_dense, dense_search_with};
use slideret_core::fusion::{composite_merge, rrf_fuse, PadSource};
use slideret_core::late::{build_multi, late_search_with};
use slideret_core::metrics::{evaluate, latency_cell, ndcg_at_k, recall_at_k};
use slideret_core::oracle::{bm25_brute, dense_brute, late_brute, ndcg_brute, recall_brute};
use slideret_core::par::Exec;
use slideret_core::pipeline::{run_pipeline, OracleScorer, PipelineConfig, Retriever};
use slideret_core::store::{
    read_embeddings, storage_report, write_embeddings, DType, EmbeddingMatrix, EmbeddingStore, QrelSet, StoreKind,
};
use slideret_core::synth::{gaussian, random_query, random_text_corpus, rng, DatasetShape, SyntheticDataset};
use slideret_core::trec::{format_run, parse_run};
use slideret_core::RankedList;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Runs `body` and turns its `Err(reason)` into a failed check; `limit`
/// additionally fails the check when exceeded.
fn check(name: &'static str, limit: Option<Duration>, body: impl FnOnce() -> Result<String, String>) -> Check {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if let Some(limit) = limit.filter(|l| elapsed > *l) {
        passed = false;
        detail = format!("{detail}; exceeded {:.0}s budget", limit.as_secs_f64());
    }
    Check {
        name,
        passed,
        detail,
        elapsed,
    }
}

fn pairs(list: &RankedList) -> Vec<(String, f64)> {
    list.entries.iter().map(|e| (e.doc_id.clone(), e.score)).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// How much work each check does. `Full` is the acceptance workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

impl Scale {
    fn pick(self, quick: usize, full: usize) -> usize {
        match self {
            Scale::Quick => quick,
            Scale::Full => full,
        }
    }
}

pub fn bm25_oracle(scale: Scale) -> Check {
    let corpora = scale.pick(20, 200);
    check("bm25-oracle", Some(Duration::from_secs(10)), || {
        let mut cases = 0;
        for seed in 0..corpora as u64 {
            let mut r = rng(seed);
            let n_docs = r.random_range(1..=200);
            let vocab = r.random_range(1..=30);
            let docs = random_text_corpus(&mut r, n_docs, vocab, 12);
            let index = build_index(docs.iter().cloned(), TextField::Caption, Bm25Params::default())
                .map_err(|e| e.to_string())?;
            for qi in 0..r.random_range(1..=20) {
                // vocab + 2 lets some query terms miss the corpus entirely
                let q = random_query(&mut r, vocab + 2, 5);
                let k = r.random_range(1..=n_docs + 3);
                let got = pairs(&bm25_search(&index, "q", &q, k));
                let want = bm25_brute(&docs, &q, k, Bm25Params::default());
                ensure(got == want, || format!("corpus {seed} query {qi} `{q}` differs"))?;
                cases += 1;
            }
        }
        Ok(format!("{corpora} corpora, {cases} queries identical"))
    })
}

fn single_store(docs: &[(String, Vec<f32>)]) -> EmbeddingStore {
    EmbeddingStore {
        kind: StoreKind::Single,
        dtype: DType::F32,
        dim: docs[0].1.len(),
        matrices: docs
            .iter()
            .map(|(id, v)| EmbeddingMatrix::single(id.clone(), v.clone()).expect("finite"))
            .collect(),
    }
}

fn multi_store(docs: &[(String, Vec<Vec<f32>>)], dim: usize) -> EmbeddingStore {
    EmbeddingStore {
        kind: StoreKind::Multi,
        dtype: DType::F32,
        dim,
        matrices: docs
            .iter()
            .map(|(id, rows)| EmbeddingMatrix::new(id.clone(), rows.len(), dim, rows.concat()).expect("finite"))
            .collect(),
    }
}

/// Dense and MaxSim engines against brute force, including exact-duplicate
/// documents so that tie-breaking is exercised.
pub fn dense_late_oracle(scale: Scale) -> Check {
    let corpora = scale.pick(10, 100);
    check("dense-maxsim-oracle", Some(Duration::from_secs(30)), || {
        for seed in 0..corpora as u64 {
            let mut r = rng(10_000 + seed);
            let n = r.random_range(1..=1000);
            let dim = r.random_range(1..=128);
            let mut docs: Vec<(String, Vec<f32>)> =
                (0..n).map(|i| (format!("d{i:04}"), gaussian(&mut r, dim))).collect();
            for j in 0..n / 20 {
                let v = docs[j].1.clone();
                docs.push((format!("dup{j:03}"), v));
            }
            let index = build_dense(&single_store(&docs)).map_err(|e| e.to_string())?;
            for _ in 0..3 {
                let q = if r.random_bool(0.3) {
                    docs[r.random_range(0..docs.len())].1.clone()
                } else {
                    gaussian(&mut r, dim)
                };
                let k = r.random_range(1..=20);
                let want = dense_brute(&docs, &q, k);
                for exec in [Exec::Sequential, Exec::Parallel] {
                    let got = dense_search_with(&index, "q", &q, k, exec).map_err(|e| e.to_string())?;
                    ensure(pairs(&got) == want, || format!("dense corpus {seed} ({exec:?}) differs"))?;
                }
            }
        }
        for seed in 0..corpora as u64 {
            let mut r = rng(20_000 + seed);
            let n = r.random_range(1..=200);
            let dim = r.random_range(1..=4);
            let rows = |r: &mut rand_chacha::ChaCha8Rng, t: usize| -> Vec<Vec<f32>> {
                (0..t).map(|_| gaussian(r, dim)).collect()
            };
            let mut docs: Vec<(String, Vec<Vec<f32>>)> = (0..n)
                .map(|i| {
                    let t = r.random_range(1..=8);
                    (format!("d{i:03}"), rows(&mut r, t))
                })
                .collect();
            for j in 0..n / 8 {
                let mut perm = docs[j].1.clone();
                perm.reverse();
                docs.push((format!("perm{j:03}"), perm));
            }
            let index = build_multi(&multi_store(&docs, dim)).map_err(|e| e.to_string())?;
            for _ in 0..3 {
                let t = r.random_range(1..=8);
                let qrows = rows(&mut r, t);
                let qm = EmbeddingMatrix::new("q", qrows.len(), dim, qrows.concat()).map_err(|e| e.to_string())?;
                let k = r.random_range(1..=20);
                let want = late_brute(&docs, &qrows, k);
                for exec in [Exec::Sequential, Exec::Parallel] {
                    let got = late_search_with(&index, "q", &qm, k, exec).map_err(|e| e.to_string())?;
                    ensure(pairs(&got) == want, || format!("maxsim corpus {seed} ({exec:?}) differs"))?;
                }
            }
        }
        Ok(format!("{corpora}+{corpora} corpora identical, sequential and parallel"))
    })
}

pub fn rrf_hand_case() -> Check {
    check("rrf-hand-case", None, || {
        let l = |ids: &[&str]| RankedList::from_ordered("q", "t", ids.iter().map(|d| (d.to_string(), 0.0)));
        let fused = rrf_fuse(&[l(&["a", "b", "c"]), l(&["b", "c", "a"])], 60.0, 3).map_err(|e| e.to_string())?;
        let want = [
            ("b", 1.0 / 62.0 + 1.0 / 61.0),
            ("a", 1.0 / 61.0 + 1.0 / 63.0),
            ("c", 1.0 / 63.0 + 1.0 / 62.0),
        ];
        let got = pairs(&fused);
        ensure(got.len() == 3, || format!("got {got:?}"))?;
        for ((gid, gs), (wid, ws)) in got.iter().zip(want) {
            ensure(gid == wid && (gs - ws).abs() < 1e-12, || format!("got {got:?}"))?;
        }
        Ok(format!("[b,a,c] = [{:.7}, {:.7}, {:.7}]", got[0].1, got[1].1, got[2].1))
    })
}

pub fn composite_laws(scale: Scale) -> Check {
    let n_pairs = scale.pick(100, 1000);
    check("composite-laws", None, || {
        let l = |ids: &[&str]| RankedList::from_ordered("q", "t", ids.iter().map(|d| (d.to_string(), 0.0)));
        let ids = |m: &RankedList| m.doc_ids().map(str::to_string).collect::<Vec<_>>();
        let ex1 = composite_merge(&l(&["1", "2", "3", "4"]), &l(&["3", "5", "6", "7"]), 4, PadSource::First)
            .map_err(|e| e.to_string())?;
        ensure(ids(&ex1) == ["1", "2", "3", "5"], || format!("example 1: {:?}", ids(&ex1)))?;
        let ex2 = composite_merge(&l(&["1", "2", "3"]), &l(&["2", "4"]), 4, PadSource::First)
            .map_err(|e| e.to_string())?;
        ensure(ids(&ex2) == ["1", "2", "4", "3"], || format!("example 2: {:?}", ids(&ex2)))?;

        let mut r = rng(31337);
        for p in 0..n_pairs {
            let pool: Vec<String> = (0..40).map(|i| format!("d{i:02}")).collect();
            let draw = |r: &mut rand_chacha::ChaCha8Rng| {
                let mut v = pool.clone();
                v.shuffle(r);
                v.truncate(r.random_range(0..=30));
                v
            };
            let (a, b) = (draw(&mut r), draw(&mut r));
            let k = 2 * r.random_range(1..=15);
            let pad = if r.random_bool(0.5) { PadSource::First } else { PadSource::Second };
            let scored = |ids: &[String], r: &mut rand_chacha::ChaCha8Rng| {
                let mut s: Vec<f64> = (0..ids.len()).map(|_| r.random_range(-5.0..5.0)).collect();
                s.sort_by(|x, y| y.total_cmp(x));
                RankedList::from_ordered("q", "t", ids.iter().cloned().zip(s))
            };
            let (la, lb) = (scored(&a, &mut r), scored(&b, &mut r));
            let m = composite_merge(&la, &lb, k, pad).map_err(|e| e.to_string())?;
            let out = ids(&m);
            let uniq: HashSet<&String> = out.iter().collect();
            ensure(uniq.len() == out.len(), || format!("pair {p}: duplicates"))?;
            let union: HashSet<&String> = a.iter().chain(&b).collect();
            ensure(out.len() == k.min(union.len()), || format!("pair {p}: size {}", out.len()))?;
            for d in a.iter().take(k / 2).chain(b.iter().take(k / 2)) {
                ensure(uniq.contains(d), || format!("pair {p}: top-half doc {d} missing"))?;
            }
            // same orderings, unrelated scores
            let (ra, rb) = (scored(&a, &mut r), scored(&b, &mut r));
            let again = composite_merge(&ra, &rb, k, pad).map_err(|e| e.to_string())?;
            ensure(again == m, || format!("pair {p}: output depends on scores"))?;
        }
        Ok(format!("2 worked examples, {n_pairs} random pairs"))
    })
}

/// Late retrieval of k=100 candidates on a 500-doc corpus, reranked by the
/// oracle down to n=10.
pub fn budget_law() -> Check {
    check("budget-law", None, || {
        let shape = DatasetShape {
            decks: 50,
            slides_per_deck: 10,
            queries: 60,
            dim: 32,
            max_tokens: 6,
        };
        let data = SyntheticDataset::generate(500, shape);
        let e = |err: slideret_core::Error| err.to_string();
        let store = |ms: &[EmbeddingMatrix], kind| EmbeddingStore {
            kind,
            dtype: DType::F32,
            dim: shape.dim,
            matrices: ms.to_vec(),
        };
        let late = Retriever::late(
            "late",
            build_multi(&store(&data.doc_multi, StoreKind::Multi)).map_err(e)?,
            store(&data.query_multi, StoreKind::Multi),
        );
        let cfg = PipelineConfig::new(vec!["late".into()], None, Some("oracle".into()));
        ensure(cfg.candidates_k == 100 && cfg.final_n == 10, || format!("{cfg:?}"))?;
        let first_stage = PipelineConfig::new(vec!["late".into()], None, None);
        let first_stage = PipelineConfig {
            candidates_k: 100,
            final_n: 100,
            ..first_stage
        };
        let candidates = run_pipeline(&first_stage, std::slice::from_ref(&late), &data.manifest, &data.queries, None)
            .map_err(e)?
            .runs;
        let mut oracle = OracleScorer::new(data.qrels.clone());
        let out = run_pipeline(&cfg, std::slice::from_ref(&late), &data.manifest, &data.queries, Some(&mut oracle))
            .map_err(e)?;
        let mut eligible = 0;
        for (cand, run) in candidates.iter().zip(&out.runs) {
            ensure(run.len() == 10.min(cand.len()), || format!("{}: size {}", run.query_id, run.len()))?;
            let rel = data.qrels.relevant(&cand.query_id).cloned().unwrap_or_default();
            let pool: BTreeSet<&str> = cand.doc_ids().collect();
            if rel.len() > 10 || !rel.iter().all(|d| pool.contains(d.as_str())) {
                continue;
            }
            eligible += 1;
            let n = ndcg_at_k(run, &data.qrels, 10).map_err(e)?;
            let rc = recall_at_k(run, &data.qrels, 10).map_err(e)?;
            ensure(n == 1.0 && rc == 1.0, || format!("{}: ndcg {n} recall {rc}", run.query_id))?;
        }
        ensure(eligible > 0, || "no eligible queries".into())?;
        Ok(format!("{eligible}/{} queries eligible, all at R@10 = NDCG@10 = 1", data.queries.len()))
    })
}

pub fn metrics_suite() -> Check {
    check("metrics", None, || {
        let e = |err: slideret_core::Error| err.to_string();
        let mut one = QrelSet::new();
        one.insert("q", "rel");
        let run = RankedList::from_ordered("q", "t", [("x".to_string(), 2.0), ("rel".to_string(), 1.0)]);
        let at2 = ndcg_at_k(&run, &one, 10).map_err(e)?;
        ensure((at2 - 0.6309).abs() < 1e-4, || format!("rank-2 ndcg {at2}"))?;

        let ids: Vec<String> = (0..20).map(|i| format!("d{i}")).collect();
        for n_rel in 1..=15 {
            let mut q = QrelSet::new();
            ids[..n_rel].iter().for_each(|d| q.insert("q", d.clone()));
            let run = RankedList::from_ordered("q", "t", ids.iter().map(|d| (d.clone(), 0.0)));
            let n = ndcg_at_k(&run, &q, 10).map_err(e)?;
            ensure(n == 1.0, || format!("perfect prefix with {n_rel} relevant: {n}"))?;
        }

        let mut r = rng(2020);
        let mut qrels = QrelSet::new();
        let mut runs = Vec::new();
        for q in 0..20 {
            let qid = format!("q{q:02}");
            let mut pool: Vec<String> = (0..50).map(|i| format!("s{i:02}")).collect();
            pool.shuffle(&mut r);
            for d in &pool[..r.random_range(1..=12)] {
                qrels.insert(qid.clone(), d.clone());
            }
            pool.shuffle(&mut r);
            let len = r.random_range(0..=30);
            if q % 7 == 3 {
                continue;
            }
            runs.push(RankedList::from_ordered(
                qid,
                "t",
                pool.into_iter().take(len).enumerate().map(|(i, d)| (d, 100.0 - i as f64)),
            ));
        }
        let parsed = parse_run(&format_run(&runs, "suite"), Path::new("suite.run")).map_err(e)?;
        let eval = evaluate(&parsed, &qrels, 10, Exec::default());
        let (mut n_sum, mut r_sum) = (0.0, 0.0);
        for (qid, rel) in qrels.iter() {
            let ranked: Vec<&str> = parsed
                .iter()
                .find(|l| l.query_id == qid)
                .map(|l| l.doc_ids().collect())
                .unwrap_or_default();
            n_sum += ndcg_brute(&ranked, rel, 10);
            r_sum += recall_brute(&ranked, rel, 10);
        }
        let (dn, dr) = ((eval.ndcg - n_sum / 20.0).abs(), (eval.recall - r_sum / 20.0).abs());
        ensure(eval.query_count() == 20 && dn < 1e-9 && dr < 1e-9, || format!("suite off by {dn:e}/{dr:e}"))?;
        Ok(format!("rank-2 = {at2:.4}, perfect prefix = 1, 20-query suite within {:.1e}", dn.max(dr)))
    })
}

fn random_batch(seed: u64, b: usize, d: usize) -> Vec<TrainingTriplet> {
    let mut r = rng(seed);
    let mut v = || -> Vec<f64> { gaussian(&mut r, d).into_iter().map(f64::from).collect() };
    (0..b)
        .map(|_| TrainingTriplet {
            id: String::new(),
            query: v(),
            positive: v(),
            negative: v(),
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central
/// differences over every coordinate of the batch.
pub fn gradient_error(batch: &[TrainingTriplet], tau: f64) -> Result<f64, String> {
    let h = 1e-5;
    let g = infonce_grad(batch, tau)
        .map_err(|e| e.to_string())?
        .gradients
        .ok_or("no gradients")?;
    let mut worst = 0.0f64;
    for i in 0..batch.len() {
        for role in 0..3 {
            for c in 0..batch[i].query.len() {
                let nudged = |delta: f64| {
                    let mut b = batch.to_vec();
                    let t = &mut b[i];
                    match role {
                        0 => t.query[c] += delta,
                        1 => t.positive[c] += delta,
                        _ => t.negative[c] += delta,
                    }
                    infonce_loss(&b, tau).map_err(|e| e.to_string())
                };
                let numeric = (nudged(h)? - nudged(-h)?) / (2.0 * h);
                let analytic = match role {
                    0 => g.queries[i][c],
                    1 => g.positives[i][c],
                    _ => g.negatives[i][c],
                };
                let err = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
    }
    Ok(worst)
}

pub fn infonce_suite(scale: Scale) -> Check {
    let seeds = scale.pick(10, 100);
    check("infonce", None, || {
        let e = |err: slideret_core::Error| err.to_string();
        // orthogonal pairs give cosine 0, identical pairs cosine 1
        let t = |p: [f64; 2], n: [f64; 2]| TrainingTriplet {
            id: String::new(),
            query: vec![1.0, 0.0],
            positive: p.to_vec(),
            negative: n.to_vec(),
        };
        let sym = infonce_loss(&[t([0.0, 1.0], [0.0, 1.0])], 1.0).map_err(e)?;
        let skew = infonce_loss(&[t([1.0, 0.0], [0.0, 1.0])], 1.0).map_err(e)?;
        ensure((sym - 2f64.ln()).abs() < 1e-9, || format!("symmetric case {sym}"))?;
        ensure((skew - (1.0 + (-1f64).exp()).ln()).abs() < 1e-9, || format!("skewed case {skew}"))?;

        let mut worst = 0.0f64;
        for seed in 0..seeds as u64 {
            let err = gradient_error(&random_batch(seed, 6, 8), 0.07)?;
            ensure(err < 1e-6, || format!("seed {seed}: relative error {err:e}"))?;
            worst = worst.max(err);
        }

        let cfg = ContrastiveConfig::default();
        let fit = toy_finetune(&rotation_triplets(60, 16, 2024), &cfg, 16).map_err(e)?;
        let decreasing = fit.epoch_losses.windows(2).all(|w| w[1] < w[0]);
        ensure(decreasing, || format!("epoch losses {:?}", fit.epoch_losses))?;
        Ok(format!(
            "ln2 and ln(1+e^-1) exact, {seeds} gradchecks < {worst:.1e}, epoch loss {:.6} -> {:.6}",
            fit.epoch_losses[0],
            fit.epoch_losses[fit.epoch_losses.len() - 1]
        ))
    })
}

/// Writes a 100 x 1031 x 128 fp16 multi-vector store under `scratch` and
/// compares its measured size with the payload arithmetic.
pub fn storage_law(scratch: &Path) -> Check {
    check("storage-report", None, || {
        let e = |err: slideret_core::Error| err.to_string();
        let (docs, rows, dim) = (100usize, 1031usize, 128usize);
        let mut r = rng(1031);
        let matrices: Vec<EmbeddingMatrix> = (0..docs)
            .map(|i| EmbeddingMatrix::new(format!("slide{i:03}"), rows, dim, gaussian(&mut r, rows * dim)))
            .collect::<Result<_, _>>()
            .map_err(e)?;
        let path = scratch.join("visual.emb");
        write_embeddings(&path, &matrices, StoreKind::Multi, DType::F16).map_err(e)?;
        let report = storage_report(&[&path]).map_err(e)?;
        let payload = (docs * rows * dim * 2) as f64;
        let measured = report.total_bytes() as f64;
        let rel = (measured - payload) / payload;
        ensure((0.0..0.01).contains(&rel), || format!("measured {measured} vs payload {payload}"))?;
        let back = read_embeddings(&path).map_err(e)?;
        ensure(back.total_rows() == docs * rows, || "row count changed on reload".into())?;
        let cell = latency_cell(0.22, Some(0.09));
        ensure(cell == "0.22 + 0.09", || format!("latency cell `{cell}`"))?;
        let _ = fs::remove_file(&path);
        Ok(format!(
            "{} bytes = payload + {:.4}%, {} GB; cell `{cell}`",
            report.total_bytes(),
            rel * 100.0,
            report.gb_string()
        ))
    })
}

/// Generates a dataset under `scratch`, runs the RRF + oracle configuration
/// twice and compares the run files byte for byte.
pub fn run_determinism(scratch: &Path) -> Check {
    check("run-determinism", None, || {
        let written = crate::cmd_synth(scratch, 7, DatasetShape::default()).map_err(|e| e.to_string())?;
        let config = written
            .iter()
            .find(|p| p.ends_with("rrf_oracle.toml"))
            .ok_or("synth wrote no rrf config")?;
        let (a, b) = (scratch.join("first.run"), scratch.join("second.run"));
        crate::cmd_run(config, Some(&a)).map_err(|e| format!("{e:#}"))?;
        crate::cmd_run(config, Some(&b)).map_err(|e| format!("{e:#}"))?;
        let read = |p: &Path| fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
        let (ba, bb) = (read(&a)?, read(&b)?);
        ensure(!ba.is_empty() && ba == bb, || "run files differ".into())?;
        Ok(format!("{} identical bytes", ba.len()))
    })
}

/// Every check in acceptance order.
pub fn run_all(scale: Scale, scratch: &Path) -> Vec<Check> {
    vec![
        bm25_oracle(scale),
        dense_late_oracle(scale),
        rrf_hand_case(),
        composite_laws(scale),
        budget_law(),
        metrics_suite(),
        infonce_suite(scale),
        storage_law(scratch),
        run_determinism(scratch),
    ]
}
