use std::collections::HashMap;

use super::TransducerScorer;
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp_slice;

/// Upper bound on the number of distinct sequences the oracle will enumerate.
pub const MAX_EXHAUSTIVE_SEQUENCES: f64 = 1e5;

struct Walk<'a, S: TransducerScorer> {
    scorer: &'a S,
    cap: usize,
    paths: HashMap<Vec<u32>, Vec<f64>>,
}

impl<S: TransducerScorer> Walk<'_, S> {
    fn visit(
        &mut self,
        t: usize,
        emitted: usize,
        tokens: &mut Vec<u32>,
        state: &S::State,
        log_prob: f64,
    ) {
        if t == self.scorer.num_frames() {
            self.paths.entry(tokens.clone()).or_default().push(log_prob);
            return;
        }
        let lp = self.scorer.log_probs(t, state);
        let blank = self.scorer.blank_id() as usize;
        self.visit(t + 1, 0, tokens, state, log_prob + lp[blank]);
        for (v, &l) in lp.iter().enumerate() {
            if v == blank {
                continue;
            }
            let next = self.scorer.advance(state, v as u32);
            tokens.push(v as u32);
            if emitted + 1 == self.cap {
                self.visit(t + 1, 0, tokens, &next, log_prob + l);
            } else {
                self.visit(t, emitted + 1, tokens, &next, log_prob + l);
            }
            tokens.pop();
        }
    }
}

/// Enumerates every capped emission path and merges paths by token sequence.
///
/// Returns `(sequence, log_prob)` sorted by descending probability, ties by
/// ascending sequence. Test oracle for the beam search.
pub fn exhaustive_decode<S: TransducerScorer>(
    scorer: &S,
    max_symbols_per_frame: usize,
) -> Result<Vec<(Vec<u32>, f64)>> {
    if max_symbols_per_frame == 0 {
        return Err(Error::invalid("max_symbols_per_frame must be at least 1"));
    }
    let labels = scorer.vocab_size().saturating_sub(1) as f64;
    let max_len = (scorer.num_frames() * max_symbols_per_frame) as i32;
    let reachable: f64 = (0..=max_len).map(|l| labels.powi(l)).sum();
    if reachable > MAX_EXHAUSTIVE_SEQUENCES {
        return Err(Error::invalid(format!(
            "exhaustive decoding would visit up to {reachable:.0} sequences"
        )));
    }
    let mut walk = Walk {
        scorer,
        cap: max_symbols_per_frame,
        paths: HashMap::new(),
    };
    walk.visit(0, 0, &mut Vec::new(), &scorer.initial_state(), 0.0);
    let mut out: Vec<(Vec<u32>, f64)> = walk
        .paths
        .into_iter()
        .map(|(seq, lps)| (seq, log_sum_exp_slice(&lps)))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}
