//! Deterministic inputs shared by the benchmarks.

use kwspot_core::corpus::synthesize_corpus;
use kwspot_core::model::init_params;
use kwspot_core::{
    FeatureSequence, LogitLattice, ModelConfig, Parameters, Polarity, ScoredUtterance, SynthConfig,
    Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lattice of random logits with `frames x (target_len + 1)` rows.
pub fn random_lattice(
    frames: usize,
    target_len: usize,
    vocab: usize,
    seed: u64,
) -> (LogitLattice, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..frames * (target_len + 1) * vocab)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let lattice = LogitLattice::new(frames, target_len + 1, vocab, data).expect("consistent shape");
    let target = (0..target_len)
        .map(|_| rng.random_range(1..vocab as u32))
        .collect();
    (lattice, target)
}

/// Untrained desk model and one framed synthetic utterance.
pub fn desk_model_and_utterance(seed: u64) -> (Parameters, FeatureSequence) {
    let vocab = Vocabulary::desk();
    let synth = SynthConfig {
        num_positive: 1,
        num_negative: 0,
        seed,
        ..SynthConfig::default()
    };
    let record = synthesize_corpus(&synth, &vocab)
        .expect("valid synth config")
        .remove(0);
    let config = ModelConfig::desk(synth.base_dim, vocab.len());
    let params = init_params(&config, seed).expect("valid model config");
    let features = config
        .prepare_features(&record.features)
        .expect("matching dims");
    (params, features)
}

/// `n` scores, half positive, drawn from overlapping ranges.
pub fn random_scores(n: usize, seed: u64) -> Vec<ScoredUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let shift = if positive { 0.3 } else { 0.0 };
            ScoredUtterance {
                utt_id: format!("u{i}"),
                polarity: if positive {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                },
                score: shift + rng.random::<f64>(),
                system: "bench".into(),
            }
        })
        .collect()
}
