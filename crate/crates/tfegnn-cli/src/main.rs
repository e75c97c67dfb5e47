//! End-to-end command line for byte-graph traffic classification:
//! preprocess captures into datasets, train and evaluate the model,
//! predict on new inputs, inspect flow-length statistics, and generate
//! synthetic corpora.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tfegnn::ingest::SegmentMode;
use tfegnn::model::Pooling;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tfegnn", version, about = "Byte-level traffic graphs + temporal fusion GNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: GlobalOpts,
}

/// Options shared by all commands; flags override the config file.
#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// JSON run configuration; flags still take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Segment assembly mode.
    #[arg(long, global = true, value_parser = clap::value_parser!(SegmentMode))]
    pub mode: Option<SegmentMode>,
    /// PMI sliding-window size.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Max clean packets kept per segment.
    #[arg(long, global = true)]
    pub max_packets: Option<usize>,
    /// Max payload bytes kept per packet.
    #[arg(long, global = true)]
    pub max_payload: Option<usize>,
    /// Max header bytes kept per packet.
    #[arg(long, global = true)]
    pub max_header: Option<usize>,
    /// Node pooling for graph vectors.
    #[arg(long, global = true, value_parser = clap::value_parser!(Pooling))]
    pub pooling: Option<Pooling>,
    /// Seed for init, splits, shuffles and dropout.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Segments per optimizer step.
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Run training this many times with consecutive seeds.
    #[arg(long, global = true)]
    pub repeat: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a directory of captures (one subdirectory per class) into a
    /// labeled dataset file.
    Preprocess {
        /// Directory with one subdirectory of pcap files per class.
        #[arg(long)]
        input: PathBuf,
        /// Output dataset (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Where to write the preprocessing summary (default: stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Generate a labeled synthetic dataset with disjoint per-class byte
    /// alphabets.
    Synth {
        /// Number of classes (2..=16).
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        segments_per_class: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset and write checkpoint, history and resolved config.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Optional JSON-lines graph cache, built on first use.
        #[arg(long)]
        graph_cache: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset and write a metrics report.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Where to write the metrics report (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict labels for a capture file or dataset; one JSON line per
    /// segment with class probabilities.
    Predict {
        /// A pcap capture or a dataset file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Where to write predictions (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flow-length distribution of a capture file/directory or a dataset.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Where to write the report (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::RunConfig::resolve(&cli.opts)?;
    cfg.echo();
    match cli.command {
        Command::Preprocess { input, out, summary } => {
            commands::preprocess::run(&cfg, &input, &out, summary.as_deref())
        }
        Command::Synth {
            classes,
            segments_per_class,
            out,
        } => commands::synth::run(&cfg, classes, segments_per_class, &out),
        Command::Train {
            dataset,
            out_dir,
            graph_cache,
        } => commands::train::run(
            &cfg,
            &dataset,
            &out_dir,
            graph_cache.as_deref(),
            cli.opts.repeat.unwrap_or(1),
        ),
        Command::Evaluate {
            dataset,
            checkpoint,
            out,
        } => commands::evaluate::run(&cfg, &dataset, &checkpoint, out.as_deref()),
        Command::Predict {
            input,
            checkpoint,
            out,
        } => commands::predict::run(&cfg, &input, &checkpoint, out.as_deref()),
        Command::Stats { input, out } => commands::stats::run(&cfg, &input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
