use std::cmp::Ordering;

use super::{hypothesis_order, Hypothesis, NBestList, TransducerScorer};
use crate::error::{Error, Result};
use crate::numeric::{argmax, log_sum_exp};

pub const DEFAULT_MAX_SYMBOLS_PER_FRAME: usize = 3;

/// Frame-by-frame argmax decoding.
pub fn greedy_decode<S: TransducerScorer>(scorer: &S, max_symbols_per_frame: usize) -> Hypothesis {
    greedy_decode_observed(scorer, max_symbols_per_frame, |_, _| {})
}

/// Greedy decoding that reports every joint evaluation `(frame, log_probs)`
/// along the decoding path to `observe`.
///
/// Per frame, the argmax token is emitted (advancing the label state) until
/// blank wins or `max_symbols_per_frame` tokens were emitted. Ties go to the
/// lowest token id.
pub fn greedy_decode_observed<S, O>(
    scorer: &S,
    max_symbols_per_frame: usize,
    mut observe: O,
) -> Hypothesis
where
    S: TransducerScorer,
    O: FnMut(usize, &[f64]),
{
    let cap = max_symbols_per_frame.max(1);
    let blank = scorer.blank_id() as usize;
    let mut state = scorer.initial_state();
    let mut hyp = Hypothesis::empty();
    for t in 0..scorer.num_frames() {
        for _ in 0..cap {
            let lp = scorer.log_probs(t, &state);
            observe(t, &lp);
            let best = argmax(&lp);
            hyp.log_prob += lp[best];
            if best == blank {
                break;
            }
            let tok = best as u32;
            state = scorer.advance(&state, tok);
            hyp.tokens.push(tok);
            hyp.frame_emissions.push((t, tok));
        }
    }
    hyp
}

struct BeamEntry<St> {
    hyp: Hypothesis,
    state: St,
}

enum Candidate {
    /// Index into the finished pool.
    Finished(usize),
    /// Extension of an active entry by a token.
    Extend {
        parent: usize,
        token: u32,
        log_prob: f64,
    },
}

fn cmp_scored(a: (f64, &[u32], bool), b: (f64, &[u32], bool)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.cmp(b.1))
        // finished before active on a full tie
        .then_with(|| b.2.cmp(&a.2))
}

fn merge_finished<St>(pool: &mut Vec<BeamEntry<St>>, entry: BeamEntry<St>) {
    if let Some(existing) = pool.iter_mut().find(|e| e.hyp.tokens == entry.hyp.tokens) {
        let merged = log_sum_exp(existing.hyp.log_prob, entry.hyp.log_prob);
        if entry.hyp.log_prob > existing.hyp.log_prob {
            existing.hyp.frame_emissions = entry.hyp.frame_emissions;
        }
        existing.hyp.log_prob = merged;
    } else {
        pool.push(entry);
    }
}

/// Frame-synchronous beam search returning the top `n` distinct sequences.
pub fn beam_search_nbest<S: TransducerScorer>(
    scorer: &S,
    beam: usize,
    n: usize,
    max_symbols_per_frame: usize,
) -> Result<NBestList> {
    beam_search_observed(scorer, beam, n, max_symbols_per_frame, |_, _| {})
}

/// Beam search that reports every joint evaluation to `observe`.
///
/// Within a frame, the pool holds hypotheses that already finished the frame
/// (by blank, or by reaching the emission cap) and hypotheses that may still
/// emit. Each expansion step scores blank and every token for each active
/// hypothesis, merges finished hypotheses with identical token sequences by
/// log-sum-exp, and keeps the best `beam` entries of the combined pool.
pub fn beam_search_observed<S, O>(
    scorer: &S,
    beam: usize,
    n: usize,
    max_symbols_per_frame: usize,
    mut observe: O,
) -> Result<NBestList>
where
    S: TransducerScorer,
    O: FnMut(usize, &[f64]),
{
    if beam == 0 || n == 0 || n > beam {
        return Err(Error::invalid(format!(
            "beam search needs 1 <= n <= beam (got n={n}, beam={beam})"
        )));
    }
    if max_symbols_per_frame == 0 {
        return Err(Error::invalid("max_symbols_per_frame must be at least 1"));
    }
    let blank = scorer.blank_id();
    let mut hyps = vec![BeamEntry {
        hyp: Hypothesis::empty(),
        state: scorer.initial_state(),
    }];
    for t in 0..scorer.num_frames() {
        let mut finished: Vec<BeamEntry<S::State>> = Vec::new();
        let mut active = std::mem::take(&mut hyps);
        for step in 0..max_symbols_per_frame {
            if active.is_empty() {
                break;
            }
            let mut extensions = Vec::new();
            for (i, a) in active.iter().enumerate() {
                let lp = scorer.log_probs(t, &a.state);
                observe(t, &lp);
                merge_finished(
                    &mut finished,
                    BeamEntry {
                        hyp: Hypothesis {
                            log_prob: a.hyp.log_prob + lp[blank as usize],
                            ..a.hyp.clone()
                        },
                        state: a.state.clone(),
                    },
                );
                for (v, &l) in lp.iter().enumerate() {
                    if v as u32 != blank {
                        extensions.push((i, v as u32, a.hyp.log_prob + l));
                    }
                }
            }
            let mut cands: Vec<(Candidate, Vec<u32>, f64)> = finished
                .iter()
                .enumerate()
                .map(|(i, e)| (Candidate::Finished(i), e.hyp.tokens.clone(), e.hyp.log_prob))
                .collect();
            for (parent, token, log_prob) in extensions {
                let mut toks = active[parent].hyp.tokens.clone();
                toks.push(token);
                cands.push((
                    Candidate::Extend {
                        parent,
                        token,
                        log_prob,
                    },
                    toks,
                    log_prob,
                ));
            }
            cands.sort_by(|a, b| {
                cmp_scored(
                    (a.2, &a.1, matches!(a.0, Candidate::Finished(_))),
                    (b.2, &b.1, matches!(b.0, Candidate::Finished(_))),
                )
            });
            cands.truncate(beam);

            let mut old_finished: Vec<Option<BeamEntry<S::State>>> =
                finished.into_iter().map(Some).collect();
            let mut next_finished = Vec::new();
            let mut next_active = Vec::new();
            for (cand, toks, _) in cands {
                match cand {
                    Candidate::Finished(i) => next_finished.push(
                        old_finished[i]
                            .take()
                            .expect("each finished entry selected once"),
                    ),
                    Candidate::Extend {
                        parent,
                        token,
                        log_prob,
                    } => {
                        let p = &active[parent];
                        let mut emissions = p.hyp.frame_emissions.clone();
                        emissions.push((t, token));
                        next_active.push(BeamEntry {
                            hyp: Hypothesis {
                                tokens: toks,
                                log_prob,
                                frame_emissions: emissions,
                            },
                            state: scorer.advance(&p.state, token),
                        });
                    }
                }
            }
            finished = next_finished;
            if step + 1 == max_symbols_per_frame {
                for e in next_active.drain(..) {
                    merge_finished(&mut finished, e);
                }
            }
            active = next_active;
        }
        hyps = finished;
    }
    let mut out: Vec<Hypothesis> = hyps.into_iter().map(|e| e.hyp).collect();
    out.sort_by(hypothesis_order);
    out.truncate(n);
    Ok(NBestList {
        hypotheses: out,
        beam_size: beam,
        n,
    })
}
