//! Transducer training, the verbatim baseline, and risk fine-tuning, with
//! periodic validation and best-checkpoint selection.

mod history;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::history::{
    read_mbr_log, read_metric_log, select_best, write_mbr_log, write_metric_log, MbrRow, MetricRow,
};
pub use self::optim::Adam;
use crate::corpus::{FeatureSequence, Polarity, UtteranceRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{det_curve, eer, fn_at_fp};
use crate::mbr::{mbr_finetune_step, MbrConfig};
use crate::model::{forward_lattice, grad, init_params, ForwardMode, ModelConfig, Parameters};
use crate::scoring::{score_utterance, ScoreMethod, ScoredUtterance};
use crate::transducer::{rnnt_loss_and_grad, rnnt_neg_log_prob, DEFAULT_MAX_SYMBOLS_PER_FRAME};

/// An utterance ready for the model: framed features and target tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub polarity: Polarity,
    pub features: FeatureSequence,
    pub tokens: Vec<u32>,
}

/// Which transcript the model learns to emit.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    /// Keyword-rewritten transcripts, scored by `<kw>` confidence.
    Kws,
    /// Verbatim transcripts, scored by bigram edit distance to the keywords.
    Asr { keywords: Vec<String> },
}

impl Task {
    pub fn score_method(&self) -> ScoreMethod {
        match self {
            Task::Kws => ScoreMethod::KwConfidence,
            Task::Asr { keywords } => ScoreMethod::BigramGed {
                keywords: keywords.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Rnnt,
    Mbr,
}

impl Stage {
    /// Validation metric used for checkpoint selection (lower is better).
    pub fn selection_metric(self) -> &'static str {
        match self {
            Stage::Rnnt => "eer",
            Stage::Mbr => "fn_at_1pct_fp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub max_symbols_per_frame: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 2e-3,
            optimizer: Optimizer::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_steps: 1000,
            eval_every: 100,
            seed: 42,
            max_symbols_per_frame: DEFAULT_MAX_SYMBOLS_PER_FRAME,
        }
    }
}

impl TrainConfig {
    /// Defaults for risk fine-tuning: the preset learning rate.
    pub fn mbr_preset() -> Self {
        Self {
            learning_rate: MbrConfig::PRESET_LEARNING_RATE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 || self.max_symbols_per_frame == 0 {
            return Err(Error::invalid(
                "batch_size, eval_every and max_symbols_per_frame must be positive",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::invalid("adam_eps must be positive"));
        }
        Ok(())
    }

    fn optimizer(&self, params: &Parameters) -> Adam {
        match self.optimizer {
            Optimizer::Adam => Adam::new(
                params,
                self.learning_rate,
                self.adam_beta1,
                self.adam_beta2,
                self.adam_eps,
            ),
        }
    }
}

/// Frames features and tokenizes the transcript the task asks for.
pub fn prepare_examples(
    records: &[UtteranceRecord],
    vocab: &Vocabulary,
    model: &ModelConfig,
    task: &Task,
) -> Result<Vec<TrainExample>> {
    records
        .par_iter()
        .map(|r| {
            let wrap = |e: Error| Error::Utterance {
                utt_id: r.id.clone(),
                message: e.to_string(),
            };
            let text = match task {
                Task::Kws => &r.transcript.text,
                Task::Asr { .. } => &r.verbatim,
            };
            Ok(TrainExample {
                id: r.id.clone(),
                polarity: r.polarity,
                features: model.prepare_features(&r.features).map_err(wrap)?,
                tokens: vocab.tokenize(text).map_err(wrap)?,
            })
        })
        .collect()
}

/// Seeded sampler: each epoch is a fresh shuffle, batches run across epoch
/// boundaries.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new(num_examples: usize, batch_size: usize, seed: u64) -> Self {
        let mut s = Self {
            batch_size: batch_size.min(num_examples.max(1)),
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..num_examples).collect(),
            pos: 0,
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size && !self.order.is_empty() {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            batch.push(self.order[self.pos]);
            self.pos += 1;
        }
        batch
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation step.
    pub best: Parameters,
    pub best_step: usize,
    pub best_metric: f64,
    pub last: Parameters,
    pub log: Vec<MetricRow>,
    /// Per-step loss terms; empty for transducer training.
    pub mbr_log: Vec<MbrRow>,
}

/// Scores every example in order.
pub fn score_examples(
    params: &Parameters,
    examples: &[TrainExample],
    vocab: &Vocabulary,
    method: &ScoreMethod,
    system: &str,
    max_symbols_per_frame: usize,
) -> Result<Vec<ScoredUtterance>> {
    examples
        .par_iter()
        .map(|ex| {
            let score = score_utterance(params, &ex.features, vocab, method, max_symbols_per_frame)
                .map_err(|e| Error::Utterance {
                    utt_id: ex.id.clone(),
                    message: e.to_string(),
                })?;
            Ok(ScoredUtterance {
                utt_id: ex.id.clone(),
                polarity: ex.polarity,
                score,
                system: system.to_string(),
            })
        })
        .collect()
}

/// Mean negative log likelihood per utterance.
pub fn mean_nll(params: &Parameters, examples: &[TrainExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::invalid("no examples"));
    }
    let blank = params.config.blank_id;
    let parts: Vec<Result<f64>> = examples
        .par_iter()
        .map(|ex| {
            rnnt_neg_log_prob(
                &forward_lattice(params, &ex.features, &ex.tokens)?,
                &ex.tokens,
                blank,
            )
        })
        .collect();
    let mut sum = 0.0;
    for p in parts {
        sum += p?;
    }
    Ok(sum / examples.len() as f64)
}

struct Validator<'a> {
    valid: &'a [TrainExample],
    vocab: &'a Vocabulary,
    method: ScoreMethod,
    stage: Stage,
    cap: usize,
}

impl Validator<'_> {
    fn run(&self, params: &Parameters, step: usize, log: &mut Vec<MetricRow>) -> Result<f64> {
        let loss = mean_nll(params, self.valid)?;
        let scores = score_examples(
            params,
            self.valid,
            self.vocab,
            &self.method,
            "valid",
            self.cap,
        )?;
        let curve = det_curve(&scores)?;
        let metric = match self.stage {
            Stage::Rnnt => eer(&curve),
            Stage::Mbr => fn_at_fp(&curve, 0.01)?,
        };
        log::info!(
            "step {step}: valid_loss {loss:.4} {} {metric:.4}",
            self.stage.selection_metric()
        );
        log.push(MetricRow::valid(step, self.stage, "valid_loss", loss));
        log.push(MetricRow::valid(
            step,
            self.stage,
            self.stage.selection_metric(),
            metric,
        ));
        Ok(metric)
    }
}

fn mix_seed(seed: u64, step: usize, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ ((step as u64) << 24) ^ index as u64;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_sets(
    params: &Parameters,
    train: &[TrainExample],
    valid: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    params.config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::invalid(
            "training and validation sets must be non-empty",
        ));
    }
    let ids: std::collections::HashSet<&str> = train.iter().map(|e| e.id.as_str()).collect();
    if let Some(dup) = valid.iter().find(|e| ids.contains(e.id.as_str())) {
        return Err(Error::invalid(format!(
            "utterance {} is in both training and validation sets",
            dup.id
        )));
    }
    Ok(())
}

/// Tracks the best evaluated step; ties go to the later step.
struct Selection {
    best: Parameters,
    step: usize,
    metric: f64,
}

impl Selection {
    fn offer(&mut self, params: &Parameters, step: usize, metric: f64) {
        if metric <= self.metric {
            self.best = params.clone();
            self.step = step;
            self.metric = metric;
        }
    }
}

/// Gradient of the mean negative log likelihood of a batch.
pub fn rnnt_batch_gradient(
    params: &Parameters,
    batch: &[&TrainExample],
    dropout_seed: u64,
) -> Result<(f64, Parameters)> {
    let blank = params.config.blank_id;
    let dropout = params.config.dropout > 0.0;
    let parts: Vec<Result<(f64, Parameters)>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mode = if dropout {
                ForwardMode::Train {
                    dropout_seed: dropout_seed.wrapping_add(i as u64),
                }
            } else {
                ForwardMode::Inference
            };
            grad(params, &ex.features, &ex.tokens, mode, |lat| {
                rnnt_loss_and_grad(lat, &ex.tokens, blank)
            })
        })
        .collect();
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        total.add_scaled(&g, 1.0)?;
    }
    let scale = 1.0 / batch.len() as f64;
    total.scale(scale);
    Ok((loss * scale, total))
}

fn divergence_at(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Divergence { step },
        other => other,
    }
}

/// Trains from `init` on the transcripts selected by `task`.
pub fn train_transducer(
    init: Parameters,
    train: &[TrainExample],
    valid: &[TrainExample],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    task: &Task,
) -> Result<TrainOutcome> {
    check_sets(&init, train, valid, cfg)?;
    let validator = Validator {
        valid,
        vocab,
        method: task.score_method(),
        stage: Stage::Rnnt,
        cap: cfg.max_symbols_per_frame,
    };
    let mut params = init;
    let mut log = Vec::new();
    let metric = validator.run(&params, 0, &mut log)?;
    let mut sel = Selection {
        best: params.clone(),
        step: 0,
        metric,
    };
    let mut opt = cfg.optimizer(&params);
    let mut sampler = BatchSampler::new(train.len(), cfg.batch_size, cfg.seed);
    for step in 1..=cfg.max_steps {
        let batch: Vec<&TrainExample> = sampler
            .next_batch()
            .into_iter()
            .map(|i| &train[i])
            .collect();
        let (loss, grads) = rnnt_batch_gradient(&params, &batch, mix_seed(cfg.seed, step, 0))
            .map_err(divergence_at(step))?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        opt.step(&mut params, &grads)?;
        log.push(MetricRow::train(step, Stage::Rnnt, loss));
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let m = validator.run(&params, step, &mut log)?;
            sel.offer(&params, step, m);
        }
    }
    Ok(TrainOutcome {
        best: sel.best,
        best_step: sel.step,
        best_metric: sel.metric,
        last: params,
        log,
        mbr_log: Vec::new(),
    })
}

/// Keyword-token model trained with the transducer loss from a seeded
/// initialization.
pub fn train_rnnt(
    model: &ModelConfig,
    train: &[TrainExample],
    valid: &[TrainExample],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let init = init_params(model, cfg.seed)?;
    train_transducer(init, train, valid, vocab, cfg, &Task::Kws)
}

/// Same architecture trained on verbatim transcripts; `train`/`valid` must
/// come from [`prepare_examples`] with [`Task::Asr`].
pub fn train_asr_baseline(
    model: &ModelConfig,
    train: &[TrainExample],
    valid: &[TrainExample],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    keywords: &[String],
) -> Result<TrainOutcome> {
    let init = init_params(model, cfg.seed)?;
    let task = Task::Asr {
        keywords: keywords.to_vec(),
    };
    train_transducer(init, train, valid, vocab, cfg, &task)
}

/// Fine-tunes a keyword-token model with the N-best risk loss plus the
/// weighted transducer loss; selects by validation FN rate at 1% FP.
pub fn run_mbr_finetune(
    warm: Parameters,
    train: &[TrainExample],
    valid: &[TrainExample],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    mbr: &MbrConfig,
) -> Result<TrainOutcome> {
    check_sets(&warm, train, valid, cfg)?;
    mbr.validate()?;
    let validator = Validator {
        valid,
        vocab,
        method: ScoreMethod::KwConfidence,
        stage: Stage::Mbr,
        cap: cfg.max_symbols_per_frame,
    };
    let mut params = warm;
    let mut log = Vec::new();
    let mut mbr_log = Vec::new();
    let metric = validator.run(&params, 0, &mut log)?;
    let mut sel = Selection {
        best: params.clone(),
        step: 0,
        metric,
    };
    let mut opt = cfg.optimizer(&params);
    let mut sampler = BatchSampler::new(train.len(), cfg.batch_size, cfg.seed);
    for step in 1..=cfg.max_steps {
        let batch: Vec<&TrainExample> = sampler
            .next_batch()
            .into_iter()
            .map(|i| &train[i])
            .collect();
        let b = mbr_finetune_step(
            &mut params,
            &mut opt,
            &batch,
            vocab,
            mbr,
            mix_seed(cfg.seed, step, 0),
        )
        .map_err(divergence_at(step))?;
        log.push(MetricRow::train(step, Stage::Mbr, b.total));
        mbr_log.push(MbrRow {
            step,
            mbr_term: b.mbr_term,
            rnnt_term: b.rnnt_term,
            total: b.total,
        });
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let m = validator.run(&params, step, &mut log)?;
            sel.offer(&params, step, m);
        }
    }
    Ok(TrainOutcome {
        best: sel.best,
        best_step: sel.step,
        best_metric: sel.metric,
        last: params,
        log,
        mbr_log,
    })
}

#[cfg(test)]
mod tests;
