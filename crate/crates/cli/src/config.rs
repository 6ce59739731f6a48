//! Declarative experiment files (TOML).
//!
//! ```toml
//! label = "rrf(late,dense)+oracle"
//!
//! [dataset]
//! manifest = "corpus.jsonl"
//! queries = "queries.jsonl"
//! qrels = "qrels.txt"
//!
//! [[engine]]
//! name = "late"
//! kind = "late"              # bm25 | dense | late
//! store = "visual_late.emb"
//! queries = "query_late.emb"
//!
//! [pipeline]
//! retrievers = ["late", "dense"]
//! fusion = "rrf"             # rrf | composite
//! reranker = "oracle"        # oracle | lexical_overlap | zero | external
//! candidates_k = 100
//! final_n = 10
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use slideret_core::bm25::{Bm25Params, TextField};
use slideret_core::fusion::{FusionMethod, PadSource, DEFAULT_RRF_KAPPA};
use slideret_core::pipeline::{PipelineConfig, BUILTIN_SCORERS, DEFAULT_CANDIDATES_K, DEFAULT_FINAL_N};
use slideret_core::Error;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub label: String,
    pub dataset: DatasetSection,
    #[serde(rename = "engine")]
    pub engines: Vec<EngineSection>,
    pub pipeline: PipelineSection,
    pub scorer: Option<ScorerSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub manifest: PathBuf,
    pub queries: PathBuf,
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Bm25,
    Dense,
    Late,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub name: String,
    pub kind: EngineKind,
    /// BM25 only.
    pub field: Option<String>,
    /// Prebuilt BM25 index; built from the manifest when absent.
    pub index: Option<PathBuf>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    /// Document store for dense/late engines.
    pub store: Option<PathBuf>,
    /// Query embedding store for dense/late engines, keyed by query id.
    pub queries: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionName {
    Rrf,
    Composite,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub retrievers: Vec<String>,
    pub fusion: Option<FusionName>,
    pub kappa: Option<f64>,
    pub pad: Option<PadSource>,
    pub reranker: Option<String>,
    pub candidates_k: Option<usize>,
    pub final_n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSection {
    pub command: Vec<String>,
    pub timeout_secs: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub run: Option<PathBuf>,
    pub timing: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn engine(&self, name: &str) -> Option<&EngineSection> {
        self.engines.iter().find(|e| e.name == name)
    }

    fn validate(&self) -> Result<(), Error> {
        let mut names = HashSet::new();
        for e in &self.engines {
            if !names.insert(e.name.as_str()) {
                return Err(invalid(format!("engine `{}` defined twice", e.name)));
            }
            match e.kind {
                EngineKind::Bm25 => {
                    if let Some(f) = &e.field {
                        TextField::parse(f)?;
                    }
                    self.bm25_params(e).validate()?;
                    if e.store.is_some() || e.queries.is_some() {
                        return Err(invalid(format!("bm25 engine `{}` takes no embedding stores", e.name)));
                    }
                }
                EngineKind::Dense | EngineKind::Late => {
                    if e.store.is_none() || e.queries.is_none() {
                        return Err(invalid(format!("engine `{}` needs `store` and `queries`", e.name)));
                    }
                }
            }
        }
        for r in &self.pipeline.retrievers {
            if !names.contains(r.as_str()) {
                return Err(invalid(format!("pipeline references unknown engine `{r}`")));
            }
        }
        match self.pipeline.reranker.as_deref() {
            None => {}
            Some("external") => {
                if self.scorer.as_ref().is_none_or(|s| s.command.is_empty()) {
                    return Err(invalid("reranker `external` needs a [scorer] command"));
                }
            }
            Some("oracle") if self.dataset.qrels.is_none() => {
                return Err(invalid("the oracle reranker needs dataset.qrels"));
            }
            Some(name) if !BUILTIN_SCORERS.contains(&name) => {
                return Err(invalid(format!("unknown reranker `{name}`")));
            }
            Some(_) => {}
        }
        self.pipeline_config().validate()
    }

    pub fn bm25_params(&self, e: &EngineSection) -> Bm25Params {
        let d = Bm25Params::default();
        Bm25Params {
            k1: e.k1.unwrap_or(d.k1),
            b: e.b.unwrap_or(d.b),
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let p = &self.pipeline;
        let fusion = p.fusion.map(|f| match f {
            FusionName::Rrf => FusionMethod::Rrf {
                kappa: p.kappa.unwrap_or(DEFAULT_RRF_KAPPA),
            },
            FusionName::Composite => FusionMethod::Composite {
                pad: p.pad.unwrap_or_default(),
            },
        });
        let final_n = p.final_n.unwrap_or(DEFAULT_FINAL_N);
        let candidates_k = p.candidates_k.unwrap_or(if p.reranker.is_some() {
            DEFAULT_CANDIDATES_K
        } else {
            final_n
        });
        PipelineConfig {
            retrievers: p.retrievers.clone(),
            fusion,
            reranker: p.reranker.clone(),
            candidates_k,
            final_n,
        }
    }

    /// Every artifact the configuration's engines read, for storage accounting.
    pub fn artifact_paths(&self) -> Vec<PathBuf> {
        self.engines
            .iter()
            .filter(|e| self.pipeline.retrievers.contains(&e.name))
            .flat_map(|e| [e.index.as_ref(), e.store.as_ref()])
            .flatten()
            .map(|p| self.resolve(p))
            .collect()
    }
}
