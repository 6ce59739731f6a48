use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use slideret::selftest::{self, Scale};
use slideret::{
    cmd_eval, cmd_finetune, cmd_index, cmd_ingest, cmd_report, cmd_run, cmd_synth, exit_code, EvalArgs, IndexArgs,
    IndexKind, IngestArgs, TripletSource,
};
use slideret_core::bm25::{Bm25Params, TextField};
use slideret_core::contrastive::ContrastiveConfig;
use slideret_core::metrics::render_table;
use slideret_core::synth::DatasetShape;

/// Slide retrieval benchmark engine.
#[derive(Parser)]
#[command(name = "slideret", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-check a manifest, qrels, queries and embedding stores.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Document embedding store (repeatable).
        #[arg(long = "store")]
        stores: Vec<PathBuf>,
        /// Query embedding store (repeatable).
        #[arg(long = "query-store")]
        query_stores: Vec<PathBuf>,
    },
    /// Build or validate a retrieval index.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Execute an experiment configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run file path; overrides the config's [output] run.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a run file against qrels.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        timing: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
        /// Artifact charged to this configuration's storage (repeatable).
        #[arg(long)]
        storage: Vec<PathBuf>,
        /// Write the key=value report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render eval reports as one table.
    Report {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle and law checks.
    Selftest {
        /// Smaller workloads.
        #[arg(long)]
        quick: bool,
    },
    /// Train the toy projection head with InfoNCE.
    Finetune {
        /// JSONL triplets; when absent, seeded rotation triplets are generated.
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        synthetic: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        /// Output dimension of the projection (defaults to the input dimension).
        #[arg(long)]
        proj_dim: Option<usize>,
        #[arg(long, default_value_t = 6)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.07)]
        temperature: f64,
        #[arg(long, default_value_t = 3e-5)]
        lr: f64,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Write a synthetic dataset and sample configurations.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        decks: usize,
        #[arg(long, default_value_t = 6)]
        slides_per_deck: usize,
        #[arg(long, default_value_t = 20)]
        queries: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
    },
}

#[derive(Subcommand)]
enum IndexAction {
    Build {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FieldArg::Caption)]
        field: FieldArg,
        #[arg(long, default_value_t = 1.2)]
        k1: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Bm25,
    Dense,
    Late,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Caption,
    Ocr,
}

fn scratch_dir() -> Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("slideret-selftest-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest {
            manifest,
            qrels,
            queries,
            stores,
            query_stores,
        } => {
            let summary = cmd_ingest(&IngestArgs {
                manifest,
                qrels,
                queries,
                stores,
                query_stores,
            })?;
            println!("{summary}");
        }
        Command::Index {
            action:
                IndexAction::Build {
                    kind,
                    manifest,
                    field,
                    k1,
                    b,
                    store,
                    out,
                },
        } => {
            let args = IndexArgs {
                kind: match kind {
                    KindArg::Bm25 => IndexKind::Bm25,
                    KindArg::Dense => IndexKind::Dense,
                    KindArg::Late => IndexKind::Late,
                },
                manifest,
                field: match field {
                    FieldArg::Caption => TextField::Caption,
                    FieldArg::Ocr => TextField::Ocr,
                },
                params: Bm25Params { k1, b },
                store,
                out,
            };
            println!("{}", cmd_index(&args)?);
        }
        Command::Run { config, out } => {
            let s = cmd_run(&config, out.as_deref())?;
            println!(
                "{} queries -> {} (timings {}; mean retrieval {:.4}s, rerank {:.4}s)",
                s.queries,
                s.run_path.display(),
                s.timing_path.display(),
                s.timings.mean_retrieval_s(),
                s.timings.mean_rerank_s()
            );
        }
        Command::Eval {
            run,
            qrels,
            timing,
            label,
            storage,
            out,
        } => {
            let report = cmd_eval(&EvalArgs {
                run,
                qrels,
                timing,
                label,
                storage,
                out,
            })?;
            print!("{}", render_table(std::slice::from_ref(&report)));
        }
        Command::Report { reports, out } => print!("{}", cmd_report(&reports, out.as_deref())?),
        Command::Selftest { quick } => {
            let scratch = scratch_dir()?;
            let scale = if quick { Scale::Quick } else { Scale::Full };
            let checks = selftest::run_all(scale, &scratch);
            let _ = std::fs::remove_dir_all(&scratch);
            for c in &checks {
                println!("{c}");
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
        Command::Finetune {
            triplets,
            synthetic,
            dim,
            proj_dim,
            batch_size,
            temperature,
            lr,
            epochs,
            seed,
            loss_csv,
        } => {
            let source = match triplets {
                Some(p) => TripletSource::File(p),
                None => TripletSource::Synthetic {
                    count: synthetic,
                    dim,
                    seed,
                },
            };
            let cfg = ContrastiveConfig {
                batch_size,
                temperature,
                learning_rate: lr,
                epochs,
                seed,
            };
            let result = cmd_finetune(&source, &cfg, proj_dim, loss_csv.as_deref())?;
            for (epoch, loss) in result.epoch_losses.iter().enumerate() {
                println!("epoch {} mean loss {loss:.6}", epoch + 1);
            }
        }
        Command::Synth {
            out,
            seed,
            decks,
            slides_per_deck,
            queries,
            dim,
        } => {
            let shape = DatasetShape {
                decks,
                slides_per_deck,
                queries,
                dim,
                ..DatasetShape::default()
            };
            for p in cmd_synth(&out, seed, shape)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

