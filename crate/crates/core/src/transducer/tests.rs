use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::LogitLattice;

fn random_lattice(rng: &mut ChaCha8Rng, t: usize, u: usize, v: usize) -> LogitLattice {
    let mut lat = LogitLattice::zeros(t, u + 1, v);
    for ti in 0..t {
        for ui in 0..=u {
            let row = lat.row_mut(ti, ui);
            for x in row.iter_mut() {
                *x = rng.random_range(-3.0..3.0);
            }
            log_softmax_in_place(row);
        }
    }
    lat
}

fn random_target(rng: &mut ChaCha8Rng, u: usize, v: usize) -> Vec<u32> {
    (0..u).map(|_| rng.random_range(1..v as u32)).collect()
}

/// Sums over every interleaving of `U` labels and `T` blanks whose last
/// symbol is blank.
fn enumerate_alignments(lat: &LogitLattice, target: &[u32]) -> f64 {
    let (t_len, u_len) = (lat.frames(), target.len());
    let slots = t_len + u_len - 1;
    let mut total = 0.0;
    for mask in 0u32..(1 << slots) {
        if mask.count_ones() as usize != u_len {
            continue;
        }
        let (mut t, mut u, mut lp) = (0, 0, 0.0);
        for s in 0..slots {
            if mask & (1 << s) != 0 {
                lp += lat.get(t, u, target[u] as usize);
                u += 1;
            } else {
                lp += lat.get(t, u, 0);
                t += 1;
            }
        }
        lp += lat.get(t, u, 0);
        total += f64::exp(lp);
    }
    -total.ln()
}

#[test]
fn likelihood_matches_alignment_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (t, u, v) = (
            rng.random_range(1..=4),
            rng.random_range(0..=3),
            rng.random_range(2..=4),
        );
        let lat = random_lattice(&mut rng, t, u, v);
        let target = random_target(&mut rng, u, v);
        let dp = rnnt_neg_log_prob(&lat, &target, 0).unwrap();
        let oracle = enumerate_alignments(&lat, &target);
        assert!(
            (dp - oracle).abs() < 1e-9,
            "T={t} U={u} V={v}: {dp} vs {oracle}"
        );
    }
}

#[test]
fn single_frame_empty_target_is_blank() {
    let lat = LogitLattice::new(1, 1, 2, vec![0.25f64.ln(), 0.75f64.ln()]).unwrap();
    assert!((rnnt_neg_log_prob(&lat, &[], 0).unwrap() + 0.25f64.ln()).abs() < 1e-15);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-5;
    for _ in 0..30 {
        let (t, u, v) = (
            rng.random_range(1..=4),
            rng.random_range(0..=3),
            rng.random_range(2..=4),
        );
        let lat = random_lattice(&mut rng, t, u, v);
        let target = random_target(&mut rng, u, v);
        let (loss, g) = rnnt_loss_and_grad(&lat, &target, 0).unwrap();
        assert!((loss - rnnt_neg_log_prob(&lat, &target, 0).unwrap()).abs() < 1e-12);
        for i in 0..lat.data().len() {
            let mut up = lat.clone();
            up.data_mut()[i] += h;
            let mut dn = lat.clone();
            dn.data_mut()[i] -= h;
            let fd = (rnnt_neg_log_prob(&up, &target, 0).unwrap()
                - rnnt_neg_log_prob(&dn, &target, 0).unwrap())
                / (2.0 * h);
            assert!(
                (fd - g.data()[i]).abs() < 1e-6,
                "entry {i}: {fd} vs {}",
                g.data()[i]
            );
        }
    }
}

#[test]
fn loss_rejects_bad_inputs() {
    let lat = LogitLattice::zeros(2, 2, 3);
    assert!(rnnt_neg_log_prob(&lat, &[], 0).is_err());
    assert!(rnnt_neg_log_prob(&lat, &[0], 0).is_err());
    assert!(rnnt_neg_log_prob(&lat, &[3], 0).is_err());
    assert!(rnnt_neg_log_prob(&LogitLattice::zeros(0, 1, 3), &[], 0).is_err());
}

/// Stub whose logits are a fixed random function of (frame, prefix).
fn random_stub(
    seed: u64,
    frames: usize,
    vocab: usize,
) -> FnScorer<impl Fn(usize, &[u32]) -> Vec<f64>> {
    FnScorer::new(frames, vocab, 0, move |t, prefix: &[u32]| {
        let mut key = seed ^ (t as u64) << 40;
        for &p in prefix {
            key = key.wrapping_mul(31).wrapping_add(p as u64 + 1);
        }
        let mut r = ChaCha8Rng::seed_from_u64(key);
        (0..vocab).map(|_| r.random_range(-2.0..2.0)).collect()
    })
}

#[test]
fn capped_paths_sum_to_one() {
    let s = FnScorer::new(1, 2, 0, |_, _: &[u32]| vec![0.0, 0.0]);
    let all = exhaustive_decode(&s, 1).unwrap();
    assert_eq!(all.len(), 2);
    let total: f64 = all.iter().map(|(_, lp)| lp.exp()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for seed in 0..10 {
        let s = random_stub(seed, 3, 3);
        for cap in 1..=2 {
            let total: f64 = exhaustive_decode(&s, cap)
                .unwrap()
                .iter()
                .map(|(_, lp)| lp.exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn exhaustive_agrees_with_likelihood_below_the_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20 {
        // a stub that ignores the prefix gives a lattice with identical rows per frame
        let frames = rng.random_range(1..=3);
        let table: Vec<Vec<f64>> = (0..frames)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let s = FnScorer::new(frames, 3, 0, move |t, _: &[u32]| table[t].clone());
        let all = exhaustive_decode(&s, 3).unwrap();
        for (seq, lp) in all.iter().filter(|(seq, _)| seq.len() < 3) {
            let mut lat = LogitLattice::zeros(frames, seq.len() + 1, 3);
            for t in 0..frames {
                for u in 0..=seq.len() {
                    let row = s.log_probs(t, &seq[..u].to_vec());
                    lat.row_mut(t, u).copy_from_slice(&row);
                }
            }
            let nll = rnnt_neg_log_prob(&lat, seq, 0).unwrap();
            assert!((nll + lp).abs() < 1e-9, "seed {seed} seq {seq:?}");
        }
    }
}

#[test]
fn saturated_beam_matches_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..50 {
        let frames = rng.random_range(1..=3);
        let vocab = rng.random_range(2..=3);
        let s = random_stub(trial, frames, vocab);
        let all = exhaustive_decode(&s, 1).unwrap();
        let n = all.len().min(4);
        let nbest = beam_search_nbest(&s, 64, n, 1).unwrap();
        nbest.validate().unwrap();
        assert_eq!(nbest.len(), n);
        for (h, (seq, lp)) in nbest.hypotheses.iter().zip(&all) {
            assert_eq!(&h.tokens, seq, "trial {trial}");
            assert!((h.log_prob - lp).abs() < 1e-9);
        }
    }
}

#[test]
fn saturated_beam_matches_exhaustive_with_larger_cap() {
    for trial in 0..20 {
        let s = random_stub(100 + trial, 2, 3);
        let all = exhaustive_decode(&s, 2).unwrap();
        let nbest = beam_search_nbest(&s, 256, 5, 2).unwrap();
        for (h, (seq, lp)) in nbest.hypotheses.iter().zip(&all) {
            assert_eq!(&h.tokens, seq);
            assert!((h.log_prob - lp).abs() < 1e-9);
        }
    }
}

#[test]
fn beam_of_one_is_greedy() {
    for trial in 0..50 {
        let s = random_stub(200 + trial, 4, 4);
        for cap in 1..=3 {
            let g = greedy_decode(&s, cap);
            let b = beam_search_nbest(&s, 1, 1, cap).unwrap();
            assert_eq!(b.hypotheses[0].tokens, g.tokens);
            assert!((b.hypotheses[0].log_prob - g.log_prob).abs() < 1e-12);
            assert_eq!(b.hypotheses[0].frame_emissions, g.frame_emissions);
        }
    }
}

// Beam search is not monotone in the beam width in general (a wider beam
// can keep a prefix that later crowds out the eventual winner), so the
// checks are against the exact sequence probabilities instead.
#[test]
fn beam_scores_are_bounded_by_exact_probabilities() {
    let mut narrower_won = 0;
    for trial in 0..50 {
        let s = random_stub(300 + trial, 4, 3);
        let exact: std::collections::HashMap<Vec<u32>, f64> =
            exhaustive_decode(&s, 2).unwrap().into_iter().collect();
        let best_exact = exact.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut prev = f64::NEG_INFINITY;
        for beam in [1, 2, 4, 8, 16] {
            let nb = beam_search_nbest(&s, beam, 1, 2).unwrap();
            for h in &nb.hypotheses {
                assert!(
                    h.log_prob <= exact[&h.tokens] + 1e-12,
                    "trial {trial} beam {beam}"
                );
            }
            let best = nb.hypotheses[0].log_prob;
            assert!(best <= best_exact + 1e-12);
            if best < prev - 1e-12 {
                narrower_won += 1;
            }
            prev = best;
        }
        let saturated = beam_search_nbest(&s, 4096, 1, 2).unwrap().hypotheses[0].log_prob;
        assert!((saturated - best_exact).abs() < 1e-9, "trial {trial}");
    }
    // rare on random stubs
    assert!(narrower_won <= 5, "{narrower_won} non-monotone cases");
}

#[test]
fn greedy_respects_the_cap() {
    // token 1 always dominates blank
    let s = FnScorer::new(3, 3, 0, |_, _: &[u32]| vec![0.0, 5.0, 1.0]);
    let h = greedy_decode(&s, 2);
    assert_eq!(h.tokens, vec![1; 6]);
    assert_eq!(
        h.frame_emissions,
        vec![(0, 1), (0, 1), (1, 1), (1, 1), (2, 1), (2, 1)]
    );
    // blank dominates
    let s = FnScorer::new(3, 3, 0, |_, _: &[u32]| vec![5.0, 0.0, 1.0]);
    assert!(greedy_decode(&s, 3).tokens.is_empty());
}

#[test]
fn greedy_ties_go_to_blank() {
    let s = FnScorer::new(2, 2, 0, |_, _: &[u32]| vec![0.0, 0.0]);
    let h = greedy_decode(&s, 3);
    assert!(h.tokens.is_empty());
    assert!((h.log_prob - 2.0 * 0.5f64.ln()).abs() < 1e-15);
}

#[test]
fn beam_arguments_are_checked() {
    let s = random_stub(1, 2, 3);
    assert!(beam_search_nbest(&s, 0, 1, 1).is_err());
    assert!(beam_search_nbest(&s, 2, 3, 1).is_err());
    assert!(beam_search_nbest(&s, 2, 1, 0).is_err());
}

#[test]
fn nbest_jsonl_lines() {
    let s = random_stub(5, 3, 3);
    let nb = beam_search_nbest(&s, 8, 3, 1).unwrap();
    let vocab = crate::corpus::Vocabulary::desk();
    let mut out = Vec::new();
    write_nbest_jsonl(&mut out, "u1", &nb, &vocab).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<NBestLine> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), nb.len());
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l.rank, i + 1);
        assert_eq!(l.utt_id, "u1");
        assert_eq!(l.tokens, nb.hypotheses[i].tokens);
    }
}
