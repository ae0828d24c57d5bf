//! Expected keyword insertion/deletion risk over N-best lists, regularized
//! by the transducer likelihood of the reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{count_kw_tokens, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{grad_multi, ForwardMode, ModelScorer, Parameters};
use crate::numeric::log_sum_exp_slice;
use crate::train::{Adam, TrainExample};
use crate::transducer::{
    beam_search_nbest, rnnt_loss_and_grad, NBestList, DEFAULT_MAX_SYMBOLS_PER_FRAME,
};

/// How the risk of a hypothesis is normalized by the reference keyword
/// count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenominatorMode {
    /// `k_ref + epsilon`; on negatives this divides by epsilon alone.
    Literal,
    /// `max(k_ref, 1) + epsilon`.
    #[default]
    Clamped,
}

/// What a hypothesis probability means inside the risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorMode {
    /// Softmax over the N-best log probabilities.
    #[default]
    Normalized,
    /// `exp(log_prob)` as is.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MbrConfig {
    /// Weight of keyword insertions.
    pub alpha: f64,
    /// Weight of keyword deletions.
    pub beta: f64,
    /// Weight of the reference negative log likelihood.
    pub lambda: f64,
    pub epsilon: f64,
    pub n_best: usize,
    pub beam: usize,
    pub denominator_mode: DenominatorMode,
    pub posterior_mode: PosteriorMode,
    pub max_symbols_per_frame: usize,
}

impl Default for MbrConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lambda: 0.01,
            epsilon: 1e-6,
            n_best: 4,
            beam: 8,
            denominator_mode: DenominatorMode::Clamped,
            posterior_mode: PosteriorMode::Normalized,
            max_symbols_per_frame: DEFAULT_MAX_SYMBOLS_PER_FRAME,
        }
    }
}

impl MbrConfig {
    /// Fine-tuning learning rate that goes with the default weights.
    pub const PRESET_LEARNING_RATE: f64 = 1e-5;

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.beam == 0 || self.n_best == 0 || self.n_best > self.beam {
            return Err(Error::invalid(format!(
                "need 1 <= n_best <= beam (got n_best={}, beam={})",
                self.n_best, self.beam
            )));
        }
        if self.max_symbols_per_frame == 0 {
            return Err(Error::invalid("max_symbols_per_frame must be positive"));
        }
        Ok(())
    }

    fn denominator(&self, k_ref: usize) -> f64 {
        match self.denominator_mode {
            DenominatorMode::Literal => k_ref as f64 + self.epsilon,
            DenominatorMode::Clamped => k_ref.max(1) as f64 + self.epsilon,
        }
    }

    /// Risk of a hypothesis before weighting by its probability.
    pub fn risk(&self, stats: KwTokenStats) -> f64 {
        (self.alpha * stats.false_pos as f64 + self.beta * stats.false_neg as f64)
            / self.denominator(stats.k_ref)
    }
}

/// Keyword token counts of a hypothesis against its reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KwTokenStats {
    pub k_hyp: usize,
    pub k_ref: usize,
    /// Keyword insertions.
    pub false_pos: usize,
    /// Keyword deletions.
    pub false_neg: usize,
}

impl KwTokenStats {
    pub fn from_counts(k_hyp: usize, k_ref: usize) -> Self {
        Self {
            k_hyp,
            k_ref,
            false_pos: k_hyp.saturating_sub(k_ref),
            false_neg: k_ref.saturating_sub(k_hyp),
        }
    }
}

pub fn kw_stats(hypothesis: &[u32], reference: &[u32], vocab: &Vocabulary) -> KwTokenStats {
    KwTokenStats::from_counts(
        count_kw_tokens(hypothesis, vocab),
        count_kw_tokens(reference, vocab),
    )
}

fn posteriors(log_probs: &[f64], mode: PosteriorMode) -> Result<Vec<f64>> {
    if log_probs.is_empty() {
        return Err(Error::invalid("posteriors need a non-empty N-best list"));
    }
    if log_probs.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
        return Err(Error::invalid(
            "hypothesis log probabilities must be finite",
        ));
    }
    Ok(match mode {
        PosteriorMode::Raw => log_probs.iter().map(|s| s.exp()).collect(),
        PosteriorMode::Normalized => {
            let z = log_sum_exp_slice(log_probs);
            log_probs.iter().map(|s| (s - z).exp()).collect()
        }
    })
}

/// Softmax of the N-best log probabilities.
pub fn hypothesis_posteriors(nbest: &NBestList) -> Result<Vec<f64>> {
    posteriors(&nbest.log_probs(), PosteriorMode::Normalized)
}

pub fn per_sample_loss(posterior: f64, stats: KwTokenStats, cfg: &MbrConfig) -> f64 {
    if posterior == 0.0 || (stats.false_pos == 0 && stats.false_neg == 0) {
        return 0.0;
    }
    posterior * cfg.risk(stats)
}

/// Per-batch loss split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mbr_term: f64,
    /// Summed reference negative log likelihood, before weighting by lambda.
    pub rnnt_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(mbr_term: f64, rnnt_term: f64, lambda: f64) -> Self {
        Self {
            mbr_term,
            rnnt_term,
            total: mbr_term + lambda * rnnt_term,
        }
    }
}

/// Risk of one utterance from its hypothesis scores.
pub fn utterance_risk(log_probs: &[f64], stats: &[KwTokenStats], cfg: &MbrConfig) -> Result<f64> {
    if log_probs.len() != stats.len() {
        return Err(Error::shape("one keyword count per hypothesis is required"));
    }
    let p = posteriors(log_probs, cfg.posterior_mode)?;
    Ok(p.iter()
        .zip(stats)
        .map(|(&p, &s)| per_sample_loss(p, s, cfg))
        .sum())
}

/// Batch loss from precomputed N-best lists, references and reference
/// negative log likelihoods.
pub fn batch_loss(
    batch: &[(&NBestList, &[u32], f64)],
    vocab: &Vocabulary,
    cfg: &MbrConfig,
) -> Result<LossBreakdown> {
    let mut mbr = 0.0;
    let mut nll = 0.0;
    for (nbest, reference, ref_nll) in batch {
        let stats: Vec<_> = nbest
            .hypotheses
            .iter()
            .map(|h| kw_stats(&h.tokens, reference, vocab))
            .collect();
        mbr += utterance_risk(&nbest.log_probs(), &stats, cfg)?;
        nll += ref_nll;
    }
    Ok(LossBreakdown::new(mbr, nll, cfg.lambda))
}

/// Gradient of an utterance risk w.r.t. the hypothesis log probabilities.
pub fn risk_grad(log_probs: &[f64], stats: &[KwTokenStats], cfg: &MbrConfig) -> Result<Vec<f64>> {
    if log_probs.len() != stats.len() {
        return Err(Error::shape("one keyword count per hypothesis is required"));
    }
    let p = posteriors(log_probs, cfg.posterior_mode)?;
    let r: Vec<f64> = stats.iter().map(|&s| cfg.risk(s)).collect();
    Ok(match cfg.posterior_mode {
        PosteriorMode::Raw => p.iter().zip(&r).map(|(p, r)| p * r).collect(),
        PosteriorMode::Normalized => {
            let expected: f64 = p.iter().zip(&r).map(|(p, r)| p * r).sum();
            p.iter().zip(&r).map(|(p, r)| p * (r - expected)).collect()
        }
    })
}

/// Gradient of the N-best risk w.r.t. each hypothesis log probability, with
/// the token sequences held fixed.
pub fn mbr_grad_wrt_scores(
    nbest: &NBestList,
    reference: &[u32],
    vocab: &Vocabulary,
    cfg: &MbrConfig,
) -> Result<Vec<f64>> {
    let stats: Vec<_> = nbest
        .hypotheses
        .iter()
        .map(|h| kw_stats(&h.tokens, reference, vocab))
        .collect();
    risk_grad(&nbest.log_probs(), &stats, cfg)
}

/// Decodes the N-best list of one framed utterance.
pub fn decode_nbest(
    params: &Parameters,
    example: &TrainExample,
    cfg: &MbrConfig,
) -> Result<NBestList> {
    let scorer = ModelScorer::new(params, &example.features).map_err(|e| utt_err(example, e))?;
    beam_search_nbest(&scorer, cfg.beam, cfg.n_best, cfg.max_symbols_per_frame)
        .map_err(|e| utt_err(example, e))
}

fn utt_err(example: &TrainExample, e: Error) -> Error {
    if matches!(e, Error::NonFinite(_)) {
        return e;
    }
    Error::Utterance {
        utt_id: example.id.clone(),
        message: e.to_string(),
    }
}

/// Loss and parameter gradient for one utterance given its N-best list.
///
/// Hypothesis scores are recomputed as exact sequence log probabilities under
/// the current parameters, so the risk gradient flows into the model through
/// each hypothesis lattice, and the reference lattice carries the weighted
/// likelihood term.
pub fn utterance_gradient(
    params: &Parameters,
    example: &TrainExample,
    nbest: &NBestList,
    vocab: &Vocabulary,
    cfg: &MbrConfig,
    mode: ForwardMode,
) -> Result<(LossBreakdown, Parameters)> {
    let blank = params.config.blank_id;
    let stats: Vec<_> = nbest
        .hypotheses
        .iter()
        .map(|h| kw_stats(&h.tokens, &example.tokens, vocab))
        .collect();
    let mut targets = vec![example.tokens.clone()];
    targets.extend(nbest.hypotheses.iter().map(|h| h.tokens.clone()));
    let mut breakdown = LossBreakdown::default();
    let (_, g) = grad_multi(params, &example.features, &targets, mode, |lattices| {
        let (ref_nll, ref_grad) = rnnt_loss_and_grad(&lattices[0], &targets[0], blank)?;
        let mut grads = vec![ref_grad];
        grads[0]
            .data_mut()
            .iter_mut()
            .for_each(|x| *x *= cfg.lambda);
        let mut log_probs = Vec::with_capacity(stats.len());
        let mut hyp_grads = Vec::with_capacity(stats.len());
        for (lat, tokens) in lattices[1..].iter().zip(&targets[1..]) {
            let (nll, g) = rnnt_loss_and_grad(lat, tokens, blank)?;
            log_probs.push(-nll);
            hyp_grads.push(g);
        }
        let mbr = utterance_risk(&log_probs, &stats, cfg)?;
        let d_scores = risk_grad(&log_probs, &stats, cfg)?;
        for (mut g, d) in hyp_grads.into_iter().zip(d_scores) {
            // the score is -nll, so its lattice gradient is -rnnt_grad
            g.data_mut().iter_mut().for_each(|x| *x *= -d);
            grads.push(g);
        }
        breakdown = LossBreakdown::new(mbr, ref_nll, cfg.lambda);
        Ok((breakdown.total, grads))
    })
    .map_err(|e| utt_err(example, e))?;
    Ok((breakdown, g))
}

/// Decodes every utterance of a batch and sums losses and gradients in batch
/// order.
pub fn mbr_batch_gradient(
    params: &Parameters,
    batch: &[&TrainExample],
    vocab: &Vocabulary,
    cfg: &MbrConfig,
    dropout_seed: u64,
) -> Result<(LossBreakdown, Parameters)> {
    cfg.validate()?;
    let dropout = params.config.dropout > 0.0;
    let parts: Vec<Result<(LossBreakdown, Parameters)>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let nbest = decode_nbest(params, ex, cfg)?;
            let mode = if dropout {
                ForwardMode::Train {
                    dropout_seed: dropout_seed.wrapping_add(i as u64),
                }
            } else {
                ForwardMode::Inference
            };
            utterance_gradient(params, ex, &nbest, vocab, cfg, mode)
        })
        .collect();
    let mut total = params.zeros_like();
    let (mut mbr, mut nll) = (0.0, 0.0);
    for part in parts {
        let (b, g) = part?;
        mbr += b.mbr_term;
        nll += b.rnnt_term;
        total.add_scaled(&g, 1.0)?;
    }
    Ok((LossBreakdown::new(mbr, nll, cfg.lambda), total))
}

/// One fine-tuning step: decode, differentiate the batch loss, update.
pub fn mbr_finetune_step(
    params: &mut Parameters,
    optimizer: &mut Adam,
    batch: &[&TrainExample],
    vocab: &Vocabulary,
    cfg: &MbrConfig,
    dropout_seed: u64,
) -> Result<LossBreakdown> {
    let (breakdown, grads) = mbr_batch_gradient(params, batch, vocab, cfg, dropout_seed)?;
    if !breakdown.total.is_finite() {
        return Err(Error::Divergence {
            step: optimizer.steps() + 1,
        });
    }
    optimizer.step(params, &grads)?;
    Ok(breakdown)
}
