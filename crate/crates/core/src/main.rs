use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use tar_bench::experiment::{self, load_config};
use tar_bench::synthetic::{two_cluster, write_dataset, TwoClusterParams};

#[derive(Parser)]
#[command(
    name = "tar-bench",
    version,
    about = "Active-learning experiments for technology-assisted review"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (topic, strategy, classifier) combination in a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Comma-separated topic ids; overrides the config's filter.
        #[arg(long, value_delimiter = ',')]
        topics: Option<Vec<String>>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and its input files without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Regenerate the summary tables from the per-run traces in a directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a generated two-cluster dataset (corpus.jsonl, qrels.txt).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        docs: usize,
        #[arg(long, default_value_t = 100)]
        relevant: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "synthetic")]
        topic: String,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            parallelism,
            topics,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let prepared = experiment::prepare(&cfg, topics.as_deref())?;
            let matrix = experiment::expand_matrix(&cfg, &prepared.topics())?;
            log::info!("{} runs on {} topics", matrix.len(), prepared.tasks.len());
            let summary = experiment::execute(&cfg, &prepared, &matrix, parallelism)?;
            println!(
                "{} runs, {} failed; results in {}",
                summary.n_runs,
                summary.failed.len(),
                cfg.output_dir.display()
            );
            for id in &summary.failed {
                eprintln!("failed: {id}");
            }
            Ok(if summary.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let prepared = experiment::prepare(&cfg, None)?;
            let matrix = experiment::expand_matrix(&cfg, &prepared.topics())?;
            println!(
                "ok: {} topics ({} skipped), {} runs",
                prepared.tasks.len(),
                prepared.skipped.len(),
                matrix.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { out } => {
            let summary = experiment::report(&out)?;
            println!("{} runs, {} failed", summary.n_runs, summary.failed.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            out,
            docs,
            relevant,
            noise,
            seed,
            topic,
        } => {
            anyhow::ensure!(relevant >= 1 && relevant <= docs, "need 1 <= relevant <= docs");
            anyhow::ensure!((0.0..=1.0).contains(&noise), "noise must be in [0, 1]");
            let params = TwoClusterParams {
                n_docs: docs,
                n_relevant: relevant,
                noise,
                seed,
                topic_id: topic,
                ..TwoClusterParams::default()
            };
            let (corpus, qrels) = two_cluster(&params);
            write_dataset(&out, &corpus, &qrels).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} documents to {}", corpus.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
