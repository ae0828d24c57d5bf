//! Subcommand parameters. Every field is optional so a value can come from a
//! flag, from the config file section of the same name, or from the built-in
//! default, in that order.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Deserialize;

/// Declares a parameter struct together with `or`, which fills unset fields
/// from another instance.
macro_rules! layered {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $( $(#[$fmeta:meta])* pub $field:ident : Option<$ty:ty>, )*
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, Args, Deserialize)]
        #[serde(deny_unknown_fields, rename_all = "kebab-case")]
        pub struct $name {
            $( $(#[$fmeta])* pub $field: Option<$ty>, )*
        }

        impl $name {
            pub fn or(self, file: Self) -> Self {
                Self { $( $field: self.$field.or(file.$field), )* }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Keyword-rewritten transcripts, `<kw>` confidence scoring.
    Kws,
    /// Verbatim transcripts, bigram edit-distance scoring.
    Asr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 2 blocks, 64/16 dense, 2 heads of 8, 16-dim label encoder, 32-dim joint.
    Desk,
    /// 7 blocks, 128/32 dense, 8 heads of 64; needs 40-dim features.
    Small,
    /// 15 blocks, 1024/256 dense, 8 heads of 64; needs 40-dim features.
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Maximum `<kw>` probability along the greedy path.
    Kw,
    /// exp(-minimum edit distance) of a transcript bigram to any keyword.
    Bigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denominator {
    /// k_ref + epsilon
    Literal,
    /// max(k_ref, 1) + epsilon
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Posterior {
    /// Softmax over the N-best list.
    Normalized,
    /// exp(log_prob) without normalization.
    Raw,
}

layered! {
    pub struct SynthArgs {
        /// Directory receiving train.jsonl, valid.jsonl and test.jsonl (required)
        #[arg(long)]
        pub out_dir: Option<PathBuf>,
        /// Keyword-bearing utterances [default: 1500]
        #[arg(long)]
        pub num_positive: Option<usize>,
        /// Utterances without a keyword [default: 1500]
        #[arg(long)]
        pub num_negative: Option<usize>,
        /// Share of negatives that contain a one-letter corruption of a keyword [default: 0.2]
        #[arg(long)]
        pub confusable_fraction: Option<f64>,
        /// Standard deviation of per-frame Gaussian noise [default: 0.6]
        #[arg(long)]
        pub noise_stddev: Option<f64>,
        /// Raw feature dimension [default: 8]
        #[arg(long)]
        pub base_dim: Option<usize>,
        /// Raw frames per character [default: 3]
        #[arg(long)]
        pub frames_per_token: Option<usize>,
        /// Keyword phrases, comma separated [default: "hey google,okay google"]
        #[arg(long, value_delimiter = ',')]
        pub keywords: Option<Vec<String>>,
        /// Share of utterances held out for validation [default: 0.1]
        #[arg(long)]
        pub valid_fraction: Option<f64>,
        /// Share of utterances held out for testing [default: 0.16]
        #[arg(long)]
        pub test_fraction: Option<f64>,
        /// Random seed [default: 42]
        #[arg(long)]
        pub seed: Option<u64>,
    }
}

layered! {
    pub struct TrainArgs {
        /// Transcripts to learn: kws (keyword-rewritten) or asr (verbatim) [default: kws]
        #[arg(long, value_enum)]
        pub mode: Option<Mode>,
        /// Training set JSONL (required)
        #[arg(long)]
        pub train: Option<PathBuf>,
        /// Validation set JSONL (required)
        #[arg(long)]
        pub valid: Option<PathBuf>,
        /// Output checkpoint of the best validation step (required)
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Metric log CSV [default: none]
        #[arg(long)]
        pub log: Option<PathBuf>,
        /// Keyword phrases for asr-mode validation scoring [default: "hey google,okay google"]
        #[arg(long, value_delimiter = ',')]
        pub keywords: Option<Vec<String>>,
        /// Architecture preset; the dimension flags below override it [default: desk]
        #[arg(long, value_enum)]
        pub preset: Option<Preset>,
        /// Transformer blocks [default: from preset]
        #[arg(long)]
        pub num_blocks: Option<usize>,
        /// Feed-forward hidden width [default: from preset]
        #[arg(long)]
        pub dense1_dim: Option<usize>,
        /// Model width [default: from preset]
        #[arg(long)]
        pub dense2_dim: Option<usize>,
        /// Attention heads [default: from preset]
        #[arg(long)]
        pub num_heads: Option<usize>,
        /// Width per attention head [default: from preset]
        #[arg(long)]
        pub head_dim: Option<usize>,
        /// Dropout on encoder sublayer outputs [default: from preset]
        #[arg(long)]
        pub dropout: Option<f64>,
        /// Label encoder LSTM width [default: from preset]
        #[arg(long)]
        pub label_dim: Option<usize>,
        /// Joint network width [default: from preset]
        #[arg(long)]
        pub joint_dim: Option<usize>,
        /// Joint network activation [default: tanh]
        #[arg(long, value_enum)]
        pub joint_activation: Option<Activation>,
        /// Utterances per step [default: 16]
        #[arg(long)]
        pub batch_size: Option<usize>,
        /// Adam learning rate [default: 0.002]
        #[arg(long)]
        pub learning_rate: Option<f64>,
        /// Adam beta1 [default: 0.9]
        #[arg(long)]
        pub adam_beta1: Option<f64>,
        /// Adam beta2 [default: 0.999]
        #[arg(long)]
        pub adam_beta2: Option<f64>,
        /// Adam epsilon [default: 1e-8]
        #[arg(long)]
        pub adam_eps: Option<f64>,
        /// Optimizer steps [default: 1000]
        #[arg(long)]
        pub max_steps: Option<usize>,
        /// Validate every this many steps [default: 100]
        #[arg(long)]
        pub eval_every: Option<usize>,
        /// Seed for initialization, batching and dropout [default: 42]
        #[arg(long)]
        pub seed: Option<u64>,
        /// Per-frame emission cap during validation decoding [default: 3]
        #[arg(long)]
        pub max_symbols_per_frame: Option<usize>,
    }
}

layered! {
    pub struct MbrArgs {
        /// Warm-start checkpoint from `train --mode kws` (required)
        #[arg(long)]
        pub warm: Option<PathBuf>,
        /// Training set JSONL (required)
        #[arg(long)]
        pub train: Option<PathBuf>,
        /// Validation set JSONL (required)
        #[arg(long)]
        pub valid: Option<PathBuf>,
        /// Output checkpoint of the best validation step (required)
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Metric log CSV [default: none]
        #[arg(long)]
        pub log: Option<PathBuf>,
        /// Per-step loss term CSV (step,mbr_term,rnnt_term,total) [default: none]
        #[arg(long)]
        pub mbr_log: Option<PathBuf>,
        /// Weight of keyword insertions [default: 1.0]
        #[arg(long)]
        pub alpha: Option<f64>,
        /// Weight of keyword deletions [default: 1.0]
        #[arg(long)]
        pub beta: Option<f64>,
        /// Weight of the reference negative log likelihood [default: 0.01]
        #[arg(long)]
        pub lambda: Option<f64>,
        /// Added to the risk denominator [default: 1e-6]
        #[arg(long)]
        pub epsilon: Option<f64>,
        /// Hypotheses per utterance [default: 4]
        #[arg(long)]
        pub n_best: Option<usize>,
        /// Beam width [default: 8]
        #[arg(long)]
        pub beam: Option<usize>,
        /// Risk denominator [default: clamped]
        #[arg(long, value_enum)]
        pub denominator: Option<Denominator>,
        /// Hypothesis probability [default: normalized]
        #[arg(long, value_enum)]
        pub posterior: Option<Posterior>,
        /// Utterances per step [default: 16]
        #[arg(long)]
        pub batch_size: Option<usize>,
        /// Adam learning rate [default: 1e-5]
        #[arg(long)]
        pub learning_rate: Option<f64>,
        /// Adam beta1 [default: 0.9]
        #[arg(long)]
        pub adam_beta1: Option<f64>,
        /// Adam beta2 [default: 0.999]
        #[arg(long)]
        pub adam_beta2: Option<f64>,
        /// Adam epsilon [default: 1e-8]
        #[arg(long)]
        pub adam_eps: Option<f64>,
        /// Optimizer steps [default: 1000]
        #[arg(long)]
        pub max_steps: Option<usize>,
        /// Validate every this many steps [default: 100]
        #[arg(long)]
        pub eval_every: Option<usize>,
        /// Seed for batching and dropout [default: 42]
        #[arg(long)]
        pub seed: Option<u64>,
        /// Per-frame emission cap for beam search and validation [default: 3]
        #[arg(long)]
        pub max_symbols_per_frame: Option<usize>,
    }
}

layered! {
    pub struct DecodeArgs {
        /// Model checkpoint (required)
        #[arg(long)]
        pub model: Option<PathBuf>,
        /// Utterances JSONL (required)
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// N-best JSONL output, one line per hypothesis (required)
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Beam width [default: 8]
        #[arg(long)]
        pub beam: Option<usize>,
        /// Hypotheses per utterance [default: 4]
        #[arg(long)]
        pub n_best: Option<usize>,
        /// Per-frame emission cap [default: 3]
        #[arg(long)]
        pub max_symbols_per_frame: Option<usize>,
    }
}

layered! {
    pub struct ScoreArgs {
        /// Model checkpoint (required)
        #[arg(long)]
        pub model: Option<PathBuf>,
        /// Utterances JSONL (required)
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// Score CSV output (required)
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Scoring method [default: kw]
        #[arg(long, value_enum)]
        pub method: Option<Method>,
        /// Keyword phrases for the bigram method [default: "hey google,okay google"]
        #[arg(long, value_delimiter = ',')]
        pub keywords: Option<Vec<String>>,
        /// System tag written to the CSV [default: tt-kws for kw, asr-bigram for bigram]
        #[arg(long)]
        pub system: Option<String>,
        /// Per-frame emission cap [default: 3]
        #[arg(long)]
        pub max_symbols_per_frame: Option<usize>,
    }
}

layered! {
    pub struct EvalArgs {
        /// Score CSV; repeat for several files, each system is reported separately (required)
        #[arg(long)]
        pub scores: Option<Vec<PathBuf>>,
        /// Report CSV output (required)
        #[arg(long)]
        pub report: Option<PathBuf>,
    }
}

layered! {
    pub struct FuseArgs {
        /// Score CSVs to fuse; repeat the flag, at least one (required)
        #[arg(long)]
        pub scores: Option<Vec<PathBuf>>,
        /// Fused score CSV output (required)
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// System tag of the fused scores [default: fused]
        #[arg(long)]
        pub system: Option<String>,
    }
}

layered! {
    pub struct DetArgs {
        /// Score CSV (required)
        #[arg(long)]
        pub scores: Option<PathBuf>,
        /// DET CSV output: threshold,fp_rate,fn_rate (required)
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Also draw the curve as SVG [default: none]
        #[arg(long)]
        pub svg: Option<PathBuf>,
        /// System to plot when the file holds several [default: the only one]
        #[arg(long)]
        pub system: Option<String>,
    }
}
