use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use rayon::prelude::*;

use kwspot_core::corpus::{load_jsonl, save_jsonl, split_corpus, synthesize_corpus};
use kwspot_core::eval::{
    det_curve, det_svg, system_metrics, write_det_csv, write_report, SystemMetrics,
};
use kwspot_core::mbr::{decode_nbest, DenominatorMode, PosteriorMode};
use kwspot_core::model::{load_checkpoint, save_checkpoint, JointActivation};
use kwspot_core::scoring::{
    fuse_score_sets, read_scores_csv, score_utterance, write_scores_csv, ScoreMethod,
};
use kwspot_core::train::{
    prepare_examples, run_mbr_finetune, train_asr_baseline, train_rnnt, write_mbr_log,
    write_metric_log, Task, TrainConfig, TrainExample,
};
use kwspot_core::transducer::write_nbest_jsonl;
use kwspot_core::{MbrConfig, ModelConfig, Parameters, ScoredUtterance, SynthConfig, Vocabulary};

use crate::args::*;

fn default_keywords() -> Vec<String> {
    SynthConfig::default().keyword_phrases
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("missing required --{flag} (or `{flag}` in the config file)"))
}

fn load_records(path: &Path) -> Result<Vec<kwspot_core::UtteranceRecord>> {
    let recs = load_jsonl(path)?;
    if recs.is_empty() {
        bail!("{} holds no utterances", path.display());
    }
    Ok(recs)
}

fn load_model(path: &Path, vocab: &Vocabulary) -> Result<Parameters> {
    let params = load_checkpoint(path)?;
    if params.config.vocab_size != vocab.len() {
        bail!(
            "{}: model has {} output symbols, vocabulary has {}",
            path.display(),
            params.config.vocab_size,
            vocab.len()
        );
    }
    Ok(params)
}

pub fn synth_data(a: SynthArgs) -> Result<()> {
    let out_dir = required(a.out_dir, "out-dir")?;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        vocab_size: d.vocab_size,
        keyword_phrases: a.keywords.unwrap_or(d.keyword_phrases),
        num_positive: a.num_positive.unwrap_or(d.num_positive),
        num_negative: a.num_negative.unwrap_or(d.num_negative),
        confusable_fraction: a.confusable_fraction.unwrap_or(d.confusable_fraction),
        base_dim: a.base_dim.unwrap_or(d.base_dim),
        frames_per_token: a.frames_per_token.unwrap_or(d.frames_per_token),
        noise_stddev: a.noise_stddev.unwrap_or(d.noise_stddev),
        seed: a.seed.unwrap_or(d.seed),
    };
    let vocab = Vocabulary::desk();
    let records = synthesize_corpus(&cfg, &vocab)?;
    let (train, valid, test) = split_corpus(
        records,
        a.valid_fraction.unwrap_or(0.1),
        a.test_fraction.unwrap_or(0.16),
    )?;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, set) in [("train", &train), ("valid", &valid), ("test", &test)] {
        let path = out_dir.join(format!("{name}.jsonl"));
        save_jsonl(set, &path)?;
        info!("wrote {} utterances to {}", set.len(), path.display());
    }
    Ok(())
}

fn model_config(a: &TrainArgs, base_dim: usize, vocab: &Vocabulary) -> Result<ModelConfig> {
    let preset = match a.preset.unwrap_or(Preset::Desk) {
        Preset::Desk => ModelConfig::desk(base_dim, vocab.len()),
        Preset::Small => ModelConfig::small_preset(vocab.len()),
        Preset::Large => ModelConfig::large_preset(vocab.len()),
    };
    let cfg = ModelConfig {
        num_blocks: a.num_blocks.unwrap_or(preset.num_blocks),
        dense1_dim: a.dense1_dim.unwrap_or(preset.dense1_dim),
        dense2_dim: a.dense2_dim.unwrap_or(preset.dense2_dim),
        num_heads: a.num_heads.unwrap_or(preset.num_heads),
        head_dim: a.head_dim.unwrap_or(preset.head_dim),
        dropout: a.dropout.unwrap_or(preset.dropout),
        label_encoder_dim: a.label_dim.unwrap_or(preset.label_encoder_dim),
        joint_dim: a.joint_dim.unwrap_or(preset.joint_dim),
        joint_activation: match a.joint_activation {
            Some(Activation::Tanh) => JointActivation::Tanh,
            Some(Activation::Relu) => JointActivation::Relu,
            None => preset.joint_activation,
        },
        ..preset
    };
    cfg.validate()?;
    Ok(cfg)
}

struct Optim {
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_eps: Option<f64>,
    max_steps: Option<usize>,
    eval_every: Option<usize>,
    seed: Option<u64>,
    max_symbols_per_frame: Option<usize>,
}

fn train_config(o: Optim, d: TrainConfig) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        batch_size: o.batch_size.unwrap_or(d.batch_size),
        learning_rate: o.learning_rate.unwrap_or(d.learning_rate),
        adam_beta1: o.adam_beta1.unwrap_or(d.adam_beta1),
        adam_beta2: o.adam_beta2.unwrap_or(d.adam_beta2),
        adam_eps: o.adam_eps.unwrap_or(d.adam_eps),
        max_steps: o.max_steps.unwrap_or(d.max_steps),
        eval_every: o.eval_every.unwrap_or(d.eval_every),
        seed: o.seed.unwrap_or(d.seed),
        max_symbols_per_frame: o.max_symbols_per_frame.unwrap_or(d.max_symbols_per_frame),
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

fn prepare(
    path: &Path,
    vocab: &Vocabulary,
    model: &ModelConfig,
    task: &Task,
) -> Result<Vec<TrainExample>> {
    let recs = load_records(path)?;
    prepare_examples(&recs, vocab, model, task)
        .with_context(|| format!("preparing {}", path.display()))
}

fn write_logs(
    outcome: &kwspot_core::train::TrainOutcome,
    log: Option<PathBuf>,
    mbr_log: Option<PathBuf>,
) -> Result<()> {
    if let Some(p) = log {
        write_metric_log(&outcome.log, &p)?;
    }
    if let Some(p) = mbr_log {
        write_mbr_log(&outcome.mbr_log, &p)?;
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let train_path = required(a.train.clone(), "train")?;
    let valid_path = required(a.valid.clone(), "valid")?;
    let out = required(a.out.clone(), "out")?;
    let vocab = Vocabulary::desk();
    let keywords = a.keywords.clone().unwrap_or_else(default_keywords);
    let task = match a.mode.unwrap_or(Mode::Kws) {
        Mode::Kws => Task::Kws,
        Mode::Asr => Task::Asr {
            keywords: keywords.clone(),
        },
    };
    let train_recs = load_records(&train_path)?;
    let base_dim = train_recs[0].features.dim();
    let model = model_config(&a, base_dim, &vocab)?;
    let tc = train_config(
        Optim {
            batch_size: a.batch_size,
            learning_rate: a.learning_rate,
            adam_beta1: a.adam_beta1,
            adam_beta2: a.adam_beta2,
            adam_eps: a.adam_eps,
            max_steps: a.max_steps,
            eval_every: a.eval_every,
            seed: a.seed,
            max_symbols_per_frame: a.max_symbols_per_frame,
        },
        TrainConfig::default(),
    )?;
    let train = prepare_examples(&train_recs, &vocab, &model, &task)
        .with_context(|| format!("preparing {}", train_path.display()))?;
    drop(train_recs);
    let valid = prepare(&valid_path, &vocab, &model, &task)?;
    let outcome = match &task {
        Task::Kws => train_rnnt(&model, &train, &valid, &vocab, &tc)?,
        Task::Asr { .. } => train_asr_baseline(&model, &train, &valid, &vocab, &tc, &keywords)?,
    };
    info!(
        "best step {} with validation {}",
        outcome.best_step, outcome.best_metric
    );
    save_checkpoint(&outcome.best, &out)?;
    write_logs(&outcome, a.log, None)
}

pub fn mbr_finetune(a: MbrArgs) -> Result<()> {
    let warm_path = required(a.warm, "warm")?;
    let train_path = required(a.train, "train")?;
    let valid_path = required(a.valid, "valid")?;
    let out = required(a.out, "out")?;
    let vocab = Vocabulary::desk();
    let warm = load_model(&warm_path, &vocab)?;
    let d = MbrConfig::default();
    let tc = train_config(
        Optim {
            batch_size: a.batch_size,
            learning_rate: a.learning_rate,
            adam_beta1: a.adam_beta1,
            adam_beta2: a.adam_beta2,
            adam_eps: a.adam_eps,
            max_steps: a.max_steps,
            eval_every: a.eval_every,
            seed: a.seed,
            max_symbols_per_frame: a.max_symbols_per_frame,
        },
        TrainConfig::mbr_preset(),
    )?;
    let mbr = MbrConfig {
        alpha: a.alpha.unwrap_or(d.alpha),
        beta: a.beta.unwrap_or(d.beta),
        lambda: a.lambda.unwrap_or(d.lambda),
        epsilon: a.epsilon.unwrap_or(d.epsilon),
        n_best: a.n_best.unwrap_or(d.n_best),
        beam: a.beam.unwrap_or(d.beam),
        denominator_mode: match a.denominator {
            Some(Denominator::Literal) => DenominatorMode::Literal,
            Some(Denominator::Clamped) => DenominatorMode::Clamped,
            None => d.denominator_mode,
        },
        posterior_mode: match a.posterior {
            Some(Posterior::Normalized) => PosteriorMode::Normalized,
            Some(Posterior::Raw) => PosteriorMode::Raw,
            None => d.posterior_mode,
        },
        max_symbols_per_frame: tc.max_symbols_per_frame,
    };
    mbr.validate()?;
    let train = prepare(&train_path, &vocab, &warm.config, &Task::Kws)?;
    let valid = prepare(&valid_path, &vocab, &warm.config, &Task::Kws)?;
    let outcome = run_mbr_finetune(warm, &train, &valid, &vocab, &tc, &mbr)?;
    info!(
        "best step {} with validation {}",
        outcome.best_step, outcome.best_metric
    );
    save_checkpoint(&outcome.best, &out)?;
    write_logs(&outcome, a.log, a.mbr_log)
}

/// Frames features for `params` without touching transcripts, so any
/// utterance file can be decoded or scored.
fn framed(
    params: &Parameters,
    path: &Path,
) -> Result<Vec<(String, kwspot_core::Polarity, kwspot_core::FeatureSequence)>> {
    let recs = load_records(path)?;
    recs.par_iter()
        .map(|r| {
            let f = params
                .config
                .prepare_features(&r.features)
                .with_context(|| format!("utterance {}", r.id))?;
            Ok((r.id.clone(), r.polarity, f))
        })
        .collect()
}

pub fn decode(a: DecodeArgs) -> Result<()> {
    let model_path = required(a.model, "model")?;
    let data = required(a.data, "data")?;
    let out = required(a.out, "out")?;
    let vocab = Vocabulary::desk();
    let params = load_model(&model_path, &vocab)?;
    let d = MbrConfig::default();
    let cfg = MbrConfig {
        beam: a.beam.unwrap_or(d.beam),
        n_best: a.n_best.unwrap_or(d.n_best),
        max_symbols_per_frame: a.max_symbols_per_frame.unwrap_or(d.max_symbols_per_frame),
        ..d
    };
    let utts = framed(&params, &data)?;
    let lists = utts
        .par_iter()
        .map(|(id, polarity, features)| {
            let ex = TrainExample {
                id: id.clone(),
                polarity: *polarity,
                features: features.clone(),
                tokens: Vec::new(),
            };
            decode_nbest(&params, &ex, &cfg).with_context(|| format!("utterance {id}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(file);
    for ((id, _, _), list) in utts.iter().zip(&lists) {
        write_nbest_jsonl(&mut w, id, list, &vocab)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let model_path = required(a.model, "model")?;
    let data = required(a.data, "data")?;
    let out = required(a.out, "out")?;
    let vocab = Vocabulary::desk();
    let params = load_model(&model_path, &vocab)?;
    let method = a.method.unwrap_or(Method::Kw);
    let (method, default_system) = match method {
        Method::Kw => (ScoreMethod::KwConfidence, "tt-kws"),
        Method::Bigram => (
            ScoreMethod::BigramGed {
                keywords: a.keywords.unwrap_or_else(default_keywords),
            },
            "asr-bigram",
        ),
    };
    let system = a.system.unwrap_or_else(|| default_system.to_string());
    let cap = a.max_symbols_per_frame.unwrap_or(3);
    let utts = framed(&params, &data)?;
    let scores = utts
        .par_iter()
        .map(|(id, polarity, features)| {
            let score = score_utterance(&params, features, &vocab, &method, cap)
                .with_context(|| format!("utterance {id}"))?;
            Ok(ScoredUtterance {
                utt_id: id.clone(),
                polarity: *polarity,
                score,
                system: system.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_scores_csv(&scores, &out)?;
    Ok(())
}

/// Groups scores by system, keeping first-appearance order.
fn by_system(scores: Vec<ScoredUtterance>) -> Vec<(String, Vec<ScoredUtterance>)> {
    let mut groups: Vec<(String, Vec<ScoredUtterance>)> = Vec::new();
    for s in scores {
        match groups.iter_mut().find(|(name, _)| *name == s.system) {
            Some((_, g)) => g.push(s),
            None => groups.push((s.system.clone(), vec![s])),
        }
    }
    groups
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let files = required(a.scores, "scores")?;
    let report = required(a.report, "report")?;
    if files.is_empty() {
        bail!("--scores needs at least one file");
    }
    let mut metrics: Vec<SystemMetrics> = Vec::new();
    for path in &files {
        let scores = read_scores_csv(path)?;
        for (system, group) in by_system(scores) {
            if metrics.iter().any(|m| m.system == system) {
                bail!("system {system} appears in more than one score file");
            }
            let curve = det_curve(&group)
                .with_context(|| format!("system {system} in {}", path.display()))?;
            metrics.push(system_metrics(&system, &curve)?);
        }
    }
    write_report(&metrics, &report)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "system,eer,fn_at_1pct_fp,fn_at_0.5pct_fp")?;
    for m in &metrics {
        writeln!(
            out,
            "{},{},{},{}",
            m.system, m.eer, m.fn_at_1pct_fp, m.fn_at_half_pct_fp
        )?;
    }
    Ok(())
}

pub fn fuse(a: FuseArgs) -> Result<()> {
    let files = required(a.scores, "scores")?;
    let out = required(a.out, "out")?;
    if files.is_empty() {
        bail!("--scores needs at least one file");
    }
    let sets = files
        .iter()
        .map(read_scores_csv)
        .collect::<kwspot_core::Result<Vec<_>>>()?;
    let fused = fuse_score_sets(&sets, a.system.as_deref().unwrap_or("fused"))?;
    write_scores_csv(&fused, &out)?;
    Ok(())
}

pub fn det(a: DetArgs) -> Result<()> {
    let path = required(a.scores, "scores")?;
    let out = required(a.out, "out")?;
    let scores = read_scores_csv(&path)?;
    let mut groups = by_system(scores);
    let (system, group) = match a.system {
        Some(name) => groups
            .into_iter()
            .find(|(s, _)| *s == name)
            .ok_or_else(|| anyhow!("system {name} not found in {}", path.display()))?,
        None if groups.len() == 1 => groups.remove(0),
        None => bail!(
            "{} holds {} systems; pick one with --system",
            path.display(),
            groups.len()
        ),
    };
    let curve = det_curve(&group)?;
    write_det_csv(&curve, &out)?;
    if let Some(svg) = a.svg {
        std::fs::write(&svg, det_svg(&[(system, curve)]))
            .with_context(|| format!("writing {}", svg.display()))?;
    }
    Ok(())
}
