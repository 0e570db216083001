mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowbert_core::downstream::DownstreamError;
use flowbert_core::pretrain::PretrainError;
use flowbert_core::transformer::ModelError;

/// Invalid flags or run configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "flowbert", version, about = "Data-flow-aware code encoder: pre-training, code search and clone detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the data flow graph of a MiniLang file as JSON.
    ExtractDfg { file: PathBuf },
    /// Print the encoded input layout of a MiniLang file and its mask density.
    Encode {
        file: PathBuf,
        /// Documentation placed in the comment segment.
        #[arg(long, default_value = "")]
        comment: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a synthetic JSONL dataset.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-train an encoder on a documented-function corpus.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        no_edgepred: bool,
        #[arg(long)]
        no_nodealign: bool,
    },
    /// Fine-tune for code search and report validation MRR.
    FinetuneSearch {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Report MRR of a model on a search set.
    EvalSearch {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fine-tune for clone detection and report precision, recall and F1.
    FinetuneClone {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Report precision, recall and F1 of a model on labeled clone pairs.
    EvalClone {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Report how the `[CLS]` attention divides between code and variables.
    AttentionSplit {
        #[command(flatten)]
        run: RunArgs,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Documented functions `{"code","docstring","lang"}`.
    Corpus,
    /// Labeled pairs `{"code_a","code_b","label"}`.
    Clones,
}

/// Flags shared by every run; each overrides the matching `--config` field.
#[derive(Debug, Clone, Default, Args)]
struct RunArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input data (JSONL).
    #[arg(long, alias = "corpus")]
    data: Option<PathBuf>,
    /// Validation data (JSONL).
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Model checkpoint to start from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Vocabulary TSV; defaults to `vocab.tsv` beside the checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Encode code without the variable segment.
    #[arg(long)]
    no_dataflow: bool,
}

#[derive(Debug, Clone, Default, Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        let diverged = matches!(cause.downcast_ref::<PretrainError>(), Some(PretrainError::DivergedLoss { .. }))
            || matches!(cause.downcast_ref::<DownstreamError>(), Some(DownstreamError::DivergedLoss))
            || matches!(cause.downcast_ref::<ModelError>(), Some(ModelError::NonFiniteLoss));
        if diverged {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
