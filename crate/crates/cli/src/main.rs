//! `kwspot`: synthesize data, train, fine-tune, decode, score and evaluate
//! keyword spotters.

mod args;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::args::{
    DecodeArgs, DetArgs, EvalArgs, FuseArgs, MbrArgs, ScoreArgs, SynthArgs, TrainArgs,
};

/// Keyword spotting with a transformer transducer.
///
/// Settings come from flags, then from the matching section of --config
/// (keys are the flag names without the leading dashes), then from the
/// defaults shown in each subcommand's help. Diagnostics go to standard error
/// at the level set by KWSPOT_LOG (error, info or debug; default error).
#[derive(Debug, Parser)]
#[command(name = "kwspot", version)]
struct Cli {
    /// TOML file with one section per subcommand, e.g. [train] or [mbr-finetune]
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for utterance-level work [default: available parallelism]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus and split it into train/valid/test JSONL
    SynthData(SynthArgs),
    /// Train a transducer on keyword-rewritten (kws) or verbatim (asr) transcripts
    Train(TrainArgs),
    /// Fine-tune a kws model with the N-best keyword risk loss
    MbrFinetune(MbrArgs),
    /// Write N-best beam search hypotheses as JSONL
    Decode(DecodeArgs),
    /// Write per-utterance detection scores as CSV
    Score(ScoreArgs),
    /// Report EER and FN rate at 1% and 0.5% FP for each system
    Eval(EvalArgs),
    /// Sum the scores of several systems per utterance
    Fuse(FuseArgs),
    /// Write the DET curve of one system as CSV, optionally SVG
    Det(DetArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            anyhow::bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()?;
    }
    let file = match &cli.config {
        Some(path) => config::load(path)?,
        None => config::ConfigFile::default(),
    };
    match cli.command {
        Command::SynthData(a) => commands::synth_data(a.or(file.synth_data.unwrap_or_default())),
        Command::Train(a) => commands::train(a.or(file.train.unwrap_or_default())),
        Command::MbrFinetune(a) => {
            commands::mbr_finetune(a.or(file.mbr_finetune.unwrap_or_default()))
        }
        Command::Decode(a) => commands::decode(a.or(file.decode.unwrap_or_default())),
        Command::Score(a) => commands::score(a.or(file.score.unwrap_or_default())),
        Command::Eval(a) => commands::eval(a.or(file.eval.unwrap_or_default())),
        Command::Fuse(a) => commands::fuse(a.or(file.fuse.unwrap_or_default())),
        Command::Det(a) => commands::det(a.or(file.det.unwrap_or_default())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KWSPOT_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
