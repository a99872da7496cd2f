use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bench;
mod commands;
mod config;

use config::{Overrides, RunConfig};

/// Sparse product quantization: training, encoding, search and evaluation.
#[derive(Debug, Parser)]
#[command(name = "spq", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic standard-normal dataset
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Exact nearest neighbours of each query, written as ivecs
    Groundtruth {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Neighbours per query
        #[arg(long, short, default_value_t = 100)]
        t: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train a codebook (pq, spq) or an empty inverted file (ivfpq, ivfspq)
    Train {
        /// Training vectors
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Encode a gallery with a trained model
    Encode {
        /// Output of `train`
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Search an encoded gallery
    Search {
        /// Output of `encode`
        #[arg(long)]
        index: PathBuf,
        /// PQ centroid file, needed with PQ code files
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        /// Raw gallery, needed for re-ranking
        #[arg(long)]
        gallery: Option<PathBuf>,
        /// Ranked ids per query (ivecs)
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Recall@R and mAP of ranked lists against ground truth
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        groundtruth: PathBuf,
        /// Also write the metrics as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep code lengths and methods, writing a CSV of metrics
    Bench {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the resolved configuration as TOML
    Config,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    cfg.validate()?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    match cli.command {
        Command::GenData { n, d, out } => commands::gen_data(&cfg, n, d, &out),
        Command::Groundtruth { gallery, queries, t, out } => commands::groundtruth(&gallery, &queries, t, &out),
        Command::Train { data, out } => commands::train(&cfg, &data, &out),
        Command::Encode { model, gallery, out } => commands::encode(&cfg, &model, &gallery, &out),
        Command::Search {
            index,
            codebook,
            queries,
            gallery,
            out,
        } => commands::search(&cfg, &index, codebook.as_deref(), &queries, gallery.as_deref(), out.as_deref()),
        Command::Eval {
            results,
            groundtruth,
            csv,
        } => commands::eval(&cfg, &results, &groundtruth, csv.as_deref()),
        Command::Bench { out } => bench::run(&cfg, &out),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
