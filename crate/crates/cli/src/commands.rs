use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use slideret_core::bm25::{index_manifest, Bm25Params, InvertedIndex, TextField};
use slideret_core::contrastive::{read_triplets, rotation_triplets, toy_finetune, ContrastiveConfig, FinetuneResult};
use slideret_core::dense::build_dense;
use slideret_core::late::build_multi;
use slideret_core::metrics::{aggregate, render_table, BenchReport};
use slideret_core::pipeline::{builtin_scorer, run_pipeline, ExternalScorer, Retriever, Scorer, TimingLog, DEFAULT_TIMEOUT};
use slideret_core::store::{
    load_manifest, load_qrels, load_queries, read_embeddings, storage_report, CorpusManifest, EmbeddingStore, Query,
};
use slideret_core::synth::{DatasetShape, SyntheticDataset};
use slideret_core::trec::{read_run, write_run};
use slideret_core::Error;

use crate::config::{EngineKind, EngineSection, ExperimentConfig};

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Default)]
pub struct IngestArgs {
    pub manifest: PathBuf,
    pub qrels: PathBuf,
    pub queries: Option<PathBuf>,
    /// Document stores: every id must be in the manifest.
    pub stores: Vec<PathBuf>,
    /// Query stores: every id must be a known query.
    pub query_stores: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub docs: usize,
    pub queries: usize,
    pub stores: usize,
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ok: {} docs, {} queries, {} stores", self.docs, self.queries, self.stores)
    }
}

/// Cross-checks the dataset files and reports every dangling reference at once.
pub fn cmd_ingest(args: &IngestArgs) -> Result<IngestSummary> {
    let manifest = load_manifest(&args.manifest)?;
    let qrels = load_qrels(&args.qrels)?;
    let queries = args.queries.as_ref().map(load_queries).transpose()?;
    let doc_ids: BTreeSet<&str> = manifest.docs.iter().map(|d| d.doc_id.as_str()).collect();

    let mut problems = Vec::new();
    for (q, d) in qrels.dangling(&manifest) {
        problems.push(format!("{}: query `{q}` judges unknown doc `{d}`", args.qrels.display()));
    }
    if let Some(qs) = &queries {
        let known: BTreeSet<&str> = qs.iter().map(|q| q.query_id.as_str()).collect();
        for q in qrels.query_ids().filter(|q| !known.contains(q)) {
            problems.push(format!("{}: judged query `{q}` is not in the query file", args.qrels.display()));
        }
        for q in known.iter().filter(|q| qrels.relevant(q).is_none()) {
            problems.push(format!("query `{q}` has no relevance judgments"));
        }
    }
    for path in &args.stores {
        let store = read_embeddings(path)?;
        for m in &store.matrices {
            if !doc_ids.contains(m.doc_id.as_str()) {
                problems.push(format!("{}: embedding for unknown doc `{}`", path.display(), m.doc_id));
            }
        }
    }
    let query_ids: BTreeSet<String> = match &queries {
        Some(qs) => qs.iter().map(|q| q.query_id.clone()).collect(),
        None => qrels.query_ids().map(str::to_string).collect(),
    };
    for path in &args.query_stores {
        let store = read_embeddings(path)?;
        for m in &store.matrices {
            if !query_ids.contains(&m.doc_id) {
                problems.push(format!("{}: embedding for unknown query `{}`", path.display(), m.doc_id));
            }
        }
    }
    if !problems.is_empty() {
        let n = problems.len();
        return Err(Error::Invalid(format!("{n} dangling reference(s):\n  {}", problems.join("\n  "))).into());
    }
    Ok(IngestSummary {
        docs: manifest.len(),
        queries: query_ids.len(),
        stores: args.stores.len() + args.query_stores.len(),
    })
}

// ----------------------------------------------------------------- index

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Bm25,
    Dense,
    Late,
}

#[derive(Debug, Clone)]
pub struct IndexArgs {
    pub kind: IndexKind,
    pub manifest: Option<PathBuf>,
    pub field: TextField,
    pub params: Bm25Params,
    pub store: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// BM25 indexes are written to `out`; dense and late stores are validated
/// and loaded, which is all they need. Returns a one-line summary.
pub fn cmd_index(args: &IndexArgs) -> Result<String> {
    match args.kind {
        IndexKind::Bm25 => {
            let manifest = args
                .manifest
                .as_ref()
                .ok_or_else(|| Error::Config("bm25 indexing needs --manifest".into()))?;
            let out = args
                .out
                .as_ref()
                .ok_or_else(|| Error::Config("bm25 indexing needs --out".into()))?;
            let index = index_manifest(&load_manifest(manifest)?, args.field, args.params)?;
            ensure_parent(out)?;
            let bytes = index.save(out)?;
            Ok(format!(
                "bm25: {} docs, {} terms, avgdl {:.3}, {bytes} bytes -> {}",
                index.n_docs(),
                index.postings.len(),
                index.avgdl,
                out.display()
            ))
        }
        IndexKind::Dense | IndexKind::Late => {
            let path = args
                .store
                .as_ref()
                .ok_or_else(|| Error::Config("dense/late indexing needs --store".into()))?;
            let store = read_embeddings(path)?;
            if args.kind == IndexKind::Dense {
                let idx = build_dense(&store)?;
                Ok(format!("dense: {} docs, dim {} ({})", idx.len(), idx.dim, store.dtype.name()))
            } else {
                let idx = build_multi(&store)?;
                Ok(format!(
                    "late: {} docs, {} tokens, dim {} ({})",
                    idx.len(),
                    idx.total_tokens(),
                    idx.dim,
                    store.dtype.name()
                ))
            }
        }
    }
}

// ------------------------------------------------------------------- run

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_path: PathBuf,
    pub timing_path: PathBuf,
    pub queries: usize,
    pub timings: TimingLog,
}

fn store_for(cfg: &ExperimentConfig, field: Option<&PathBuf>) -> Result<EmbeddingStore> {
    let p = field.expect("validated: dense/late engines have stores");
    Ok(read_embeddings(cfg.resolve(p))?)
}

fn build_retriever(cfg: &ExperimentConfig, e: &EngineSection, manifest: &CorpusManifest) -> Result<Retriever> {
    let r = match e.kind {
        EngineKind::Bm25 => {
            let field = e.field.as_deref().map(TextField::parse).transpose()?.unwrap_or(TextField::Caption);
            let index = match &e.index {
                Some(p) => {
                    let idx = InvertedIndex::load(cfg.resolve(p))?;
                    if idx.n_docs() != manifest.len() {
                        return Err(Error::Invalid(format!(
                            "index {} covers {} docs but the manifest has {}",
                            p.display(),
                            idx.n_docs(),
                            manifest.len()
                        ))
                        .into());
                    }
                    idx
                }
                None => index_manifest(manifest, field, cfg.bm25_params(e))?,
            };
            Retriever::bm25(&e.name, index)
        }
        EngineKind::Dense => Retriever::dense(
            &e.name,
            build_dense(&store_for(cfg, e.store.as_ref())?)?,
            store_for(cfg, e.queries.as_ref())?,
        ),
        EngineKind::Late => Retriever::late(
            &e.name,
            build_multi(&store_for(cfg, e.store.as_ref())?)?,
            store_for(cfg, e.queries.as_ref())?,
        ),
    };
    Ok(r)
}

/// TREC tags cannot contain whitespace.
pub fn run_tag(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join("_")
}

fn default_timing_path(run: &Path) -> PathBuf {
    let mut s = run.as_os_str().to_owned();
    s.push(".timing.tsv");
    PathBuf::from(s)
}

/// Executes a configuration end to end and writes the run and timing files.
/// `out` overrides `[output] run`.
pub fn cmd_run(config_path: &Path, out: Option<&Path>) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(config_path)?;
    let manifest = load_manifest(cfg.resolve(&cfg.dataset.manifest)).context("loading corpus")?;
    let queries: Vec<Query> = load_queries(cfg.resolve(&cfg.dataset.queries)).context("loading queries")?;
    let qrels = cfg
        .dataset
        .qrels
        .as_ref()
        .map(|p| load_qrels(cfg.resolve(p)))
        .transpose()
        .context("loading qrels")?;

    let pipeline = cfg.pipeline_config();
    let retrievers = pipeline
        .retrievers
        .iter()
        .map(|name| {
            let e = cfg.engine(name).expect("validated: retriever names resolve");
            build_retriever(&cfg, e, &manifest).with_context(|| format!("building engine `{name}`"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scorer: Option<Box<dyn Scorer + Send>> = match pipeline.reranker.as_deref() {
        None => None,
        Some("external") => {
            let s = cfg.scorer.as_ref().expect("validated: external reranker has a scorer");
            let timeout = s.timeout_secs.map_or(DEFAULT_TIMEOUT, Duration::from_secs_f64);
            Some(Box::new(ExternalScorer::spawn(&s.command, timeout).context("starting scorer")?))
        }
        Some(name) => Some(builtin_scorer(name, qrels.as_ref())?),
    };
    let scorer_ref: Option<&mut dyn Scorer> = match scorer.as_mut() {
        Some(s) => Some(s.as_mut()),
        None => None,
    };
    let output = run_pipeline(&pipeline, &retrievers, &manifest, &queries, scorer_ref).context("stage `run`")?;
    drop(scorer);

    let run_path = match (out, &cfg.output.run) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => return Err(Error::Config("no run path: pass --out or set [output] run".into()).into()),
    };
    let timing_path = match (&cfg.output.timing, out) {
        (Some(p), None) => cfg.resolve(p),
        _ => default_timing_path(&run_path),
    };
    ensure_parent(&run_path)?;
    write_run(&run_path, &output.runs, &run_tag(&cfg.label))?;
    ensure_parent(&timing_path)?;
    output.timings.write(&timing_path)?;
    Ok(RunSummary {
        run_path,
        timing_path,
        queries: output.runs.len(),
        timings: output.timings,
    })
}

// ------------------------------------------------------------------ eval

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub run: PathBuf,
    pub qrels: PathBuf,
    pub timing: Option<PathBuf>,
    pub label: Option<String>,
    /// Index and store artifacts charged to this configuration.
    pub storage: Vec<PathBuf>,
    /// Where to write the `key=value` report.
    pub out: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<BenchReport> {
    let runs = read_run(&args.run)?;
    let qrels = load_qrels(&args.qrels)?;
    let timings = args.timing.as_ref().map(TimingLog::read).transpose()?;
    let storage = if args.storage.is_empty() {
        None
    } else {
        Some(storage_report(&args.storage)?)
    };
    let label = args.label.clone().unwrap_or_else(|| {
        args.run
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let report = aggregate(&label, &runs, &qrels, timings.as_ref(), storage.as_ref());
    if let Some(out) = &args.out {
        write_text(out, &report.to_kv())?;
    }
    Ok(report)
}

// ---------------------------------------------------------------- report

pub fn cmd_report(reports: &[PathBuf], out: Option<&Path>) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Config("no report files given".into()).into());
    }
    let parsed = reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            Ok(BenchReport::from_kv(&text, p)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = render_table(&parsed);
    if let Some(out) = out {
        write_text(out, &table)?;
    }
    Ok(table)
}

// -------------------------------------------------------------- finetune

#[derive(Debug, Clone)]
pub enum TripletSource {
    File(PathBuf),
    /// Generated rotation pairs: count, input dimension, seed.
    Synthetic { count: usize, dim: usize, seed: u64 },
}

pub fn cmd_finetune(
    source: &TripletSource,
    cfg: &ContrastiveConfig,
    out_dim: Option<usize>,
    loss_csv: Option<&Path>,
) -> Result<FinetuneResult> {
    let triplets = match source {
        TripletSource::File(p) => read_triplets(p)?,
        TripletSource::Synthetic { count, dim, seed } => rotation_triplets(*count, *dim, *seed),
    };
    let in_dim = triplets.first().map_or(0, |t| t.query.len());
    let result = toy_finetune(&triplets, cfg, out_dim.unwrap_or(in_dim)).context("stage `finetune`")?;
    if let Some(p) = loss_csv {
        write_text(p, &result.loss_csv())?;
    }
    Ok(result)
}

// ----------------------------------------------------------------- synth

/// Writes a small synthetic dataset plus two ready-to-run configurations.
pub fn cmd_synth(dir: &Path, seed: u64, shape: DatasetShape) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let files = SyntheticDataset::generate(seed, shape).write_to(dir)?;
    let name = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    let header = format!(
        "[dataset]\nmanifest = \"{}\"\nqueries = \"{}\"\nqrels = \"{}\"\n\n\
         [[engine]]\nname = \"bm25\"\nkind = \"bm25\"\nfield = \"caption\"\n\n\
         [[engine]]\nname = \"dense\"\nkind = \"dense\"\nstore = \"{}\"\nqueries = \"{}\"\n\n\
         [[engine]]\nname = \"late\"\nkind = \"late\"\nstore = \"{}\"\nqueries = \"{}\"\n",
        name(&files.manifest),
        name(&files.queries),
        name(&files.qrels),
        name(&files.doc_single),
        name(&files.query_single),
        name(&files.doc_multi),
        name(&files.query_multi),
    );
    let configs = [
        (
            "late.toml",
            "late",
            "[pipeline]\nretrievers = [\"late\"]\n\n[output]\nrun = \"runs/late.run\"\n",
        ),
        (
            "rrf_oracle.toml",
            "rrf(late,dense)+oracle",
            "[pipeline]\nretrievers = [\"late\", \"dense\"]\nfusion = \"rrf\"\nreranker = \"oracle\"\n\
             candidates_k = 100\nfinal_n = 10\n\n[output]\nrun = \"runs/rrf_oracle.run\"\n",
        ),
    ];
    let mut written = vec![files.manifest, files.queries, files.qrels];
    for (file, label, pipeline) in configs {
        let p = dir.join(file);
        write_text(&p, &format!("label = \"{label}\"\n\n{header}\n{pipeline}"))?;
        written.push(p);
    }
    Ok(written)
}
