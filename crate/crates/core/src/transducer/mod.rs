//! Transducer sequence likelihood and decoding.
//!
//! Decoders work against the [`TransducerScorer`] trait so the same search
//! code runs on the trained model and on table-driven stub models.
//!
//! Emission convention: within a frame a decoder may emit up to
//! `max_symbols_per_frame` tokens. Emitting blank ends the frame and pays the
//! blank log-probability; hitting the cap ends the frame without a blank
//! step. With this convention the sequence probabilities of all capped
//! emission paths sum to one.

mod exhaustive;
mod loss;
mod nbest;
mod search;
#[cfg(test)]
mod tests;

pub use exhaustive::{exhaustive_decode, MAX_EXHAUSTIVE_SEQUENCES};
pub use loss::{rnnt_grad, rnnt_loss_and_grad, rnnt_neg_log_prob};
pub use nbest::{write_nbest_jsonl, NBestLine};
pub use search::{
    beam_search_nbest, beam_search_observed, greedy_decode, greedy_decode_observed,
    DEFAULT_MAX_SYMBOLS_PER_FRAME,
};

use crate::error::{Error, Result};
use crate::numeric::log_softmax_in_place;

/// Incremental access to a transducer's output distribution.
pub trait TransducerScorer {
    type State: Clone;

    fn num_frames(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn blank_id(&self) -> u32;
    fn initial_state(&self) -> Self::State;
    /// State after appending a non-blank token.
    fn advance(&self, state: &Self::State, token: u32) -> Self::State;
    /// Log-probabilities over the vocabulary at `frame` given `state`.
    fn log_probs(&self, frame: usize, state: &Self::State) -> Vec<f64>;
}

/// A decoded token sequence (no blanks) with its score.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    /// `(frame, token)` for every emitted token, frames non-decreasing.
    pub frame_emissions: Vec<(usize, u32)>,
}

impl Hypothesis {
    pub fn empty() -> Self {
        Self {
            tokens: Vec::new(),
            log_prob: 0.0,
            frame_emissions: Vec::new(),
        }
    }
}

/// Distinct hypotheses sorted by descending log-probability, ties broken by
/// ascending token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub hypotheses: Vec<Hypothesis>,
    pub beam_size: usize,
    pub n: usize,
}

impl NBestList {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn best(&self) -> Option<&Hypothesis> {
        self.hypotheses.first()
    }

    pub fn log_probs(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|h| h.log_prob).collect()
    }

    /// Checks ordering and uniqueness.
    pub fn validate(&self) -> Result<()> {
        for w in self.hypotheses.windows(2) {
            if hypothesis_order(&w[0], &w[1]) != std::cmp::Ordering::Less {
                return Err(Error::invalid("N-best list is not strictly sorted"));
            }
        }
        let mut seqs: Vec<&[u32]> = self
            .hypotheses
            .iter()
            .map(|h| h.tokens.as_slice())
            .collect();
        seqs.sort();
        if seqs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("N-best list has duplicate sequences"));
        }
        Ok(())
    }
}

/// Descending score, then ascending token sequence.
pub(crate) fn hypothesis_order(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// A scorer defined by a function of (frame, prefix) returning unnormalized
/// logits. Used for hand-built and random stub models.
pub struct FnScorer<F> {
    frames: usize,
    vocab: usize,
    blank: u32,
    logits: F,
}

impl<F> FnScorer<F>
where
    F: Fn(usize, &[u32]) -> Vec<f64>,
{
    pub fn new(frames: usize, vocab: usize, blank: u32, logits: F) -> Self {
        Self {
            frames,
            vocab,
            blank,
            logits,
        }
    }
}

impl<F> TransducerScorer for FnScorer<F>
where
    F: Fn(usize, &[u32]) -> Vec<f64>,
{
    type State = Vec<u32>;

    fn num_frames(&self) -> usize {
        self.frames
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn blank_id(&self) -> u32 {
        self.blank
    }

    fn initial_state(&self) -> Vec<u32> {
        Vec::new()
    }

    fn advance(&self, state: &Vec<u32>, token: u32) -> Vec<u32> {
        let mut s = state.clone();
        s.push(token);
        s
    }

    fn log_probs(&self, frame: usize, state: &Vec<u32>) -> Vec<f64> {
        let mut z = (self.logits)(frame, state);
        assert_eq!(z.len(), self.vocab, "stub logits have the wrong width");
        log_softmax_in_place(&mut z);
        z
    }
}
