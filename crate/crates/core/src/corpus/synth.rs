use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{rewrite_keywords, FeatureSequence, Polarity, UtteranceRecord, Vocabulary};
use crate::error::{Error, Result};

/// Non-keyword words used to build carrier phrases and negatives.
pub const FILLER_WORDS: &[&str] = &[
    "play", "music", "set", "a", "timer", "for", "ten", "minutes", "what", "is", "the", "weather",
    "call", "mom", "turn", "on", "off", "lights", "stop", "next", "song", "volume", "up", "down",
    "news", "today", "it's", "time", "open", "door",
];

/// Raw (pre-stacking) frame stride of synthetic features.
const RAW_STRIDE_MS: f64 = 10.0;

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub keyword_phrases: Vec<String>,
    pub num_positive: usize,
    pub num_negative: usize,
    pub confusable_fraction: f64,
    pub base_dim: usize,
    pub frames_per_token: usize,
    pub noise_stddev: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab_size: 30,
            keyword_phrases: vec!["hey google".into(), "okay google".into()],
            num_positive: 1500,
            num_negative: 1500,
            confusable_fraction: 0.2,
            base_dim: 8,
            frames_per_token: 3,
            noise_stddev: 0.6,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_size != vocab.len() {
            return Err(Error::invalid(format!(
                "vocab_size {} does not match the {}-symbol vocabulary",
                self.vocab_size,
                vocab.len()
            )));
        }
        if self.keyword_phrases.is_empty() {
            return Err(Error::invalid("at least one keyword phrase is required"));
        }
        for k in &self.keyword_phrases {
            if k.trim().is_empty() {
                return Err(Error::invalid("empty keyword phrase"));
            }
            vocab.tokenize(k)?;
        }
        if !(0.0..=1.0).contains(&self.confusable_fraction) {
            return Err(Error::invalid("confusable_fraction must be in [0, 1]"));
        }
        if self.base_dim == 0 || self.frames_per_token == 0 {
            return Err(Error::invalid(
                "base_dim and frames_per_token must be positive",
            ));
        }
        if !(self.noise_stddev >= 0.0 && self.noise_stddev.is_finite()) {
            return Err(Error::invalid(
                "noise_stddev must be finite and non-negative",
            ));
        }
        Ok(())
    }

    pub fn num_confusable(&self) -> usize {
        (self.num_negative as f64 * self.confusable_fraction).round() as usize
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Positive,
    Confusable,
    Plain,
}

/// Replaces one letter of `phrase` with a different letter.
pub fn corrupt_phrase(phrase: &str, rng: &mut impl Rng) -> String {
    let chars: Vec<char> = phrase.chars().collect();
    let letters: Vec<usize> = (0..chars.len())
        .filter(|&i| chars[i].is_ascii_lowercase())
        .collect();
    let Some(&pos) = letters.choose(rng) else {
        return phrase.to_string();
    };
    let mut out = chars;
    loop {
        let c = (b'a' + rng.random_range(0..26u8)) as char;
        if c != out[pos] {
            out[pos] = c;
            break;
        }
    }
    out.into_iter().collect()
}

fn fillers(rng: &mut impl Rng, n: usize) -> Vec<&'static str> {
    (0..n)
        .map(|_| *FILLER_WORDS.choose(rng).expect("non-empty word list"))
        .collect()
}

fn compose_text(kind: Kind, cfg: &SynthConfig, rng: &mut impl Rng) -> String {
    match kind {
        Kind::Plain => {
            let n = rng.random_range(1..=3);
            fillers(rng, n).join(" ")
        }
        Kind::Positive | Kind::Confusable => {
            let phrase = cfg
                .keyword_phrases
                .choose(rng)
                .expect("validated non-empty")
                .trim()
                .to_ascii_lowercase();
            let phrase = match kind {
                Kind::Confusable => corrupt_phrase(&phrase, rng),
                _ => phrase,
            };
            let before = rng.random_range(0..=1);
            let after = rng.random_range(0..=2);
            let mut words = fillers(rng, before);
            words.push(&phrase);
            let tail = fillers(rng, after);
            words.extend(tail);
            words.join(" ")
        }
    }
}

/// Generates a labelled corpus. Pure function of `cfg`.
///
/// Each grapheme owns a fixed random prototype vector; an utterance's frames
/// are `frames_per_token` copies of each verbatim character's prototype plus
/// i.i.d. Gaussian noise. Stored transcripts are keyword-rewritten.
pub fn synthesize_corpus(cfg: &SynthConfig, vocab: &Vocabulary) -> Result<Vec<UtteranceRecord>> {
    cfg.validate(vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prototypes: Vec<Vec<f64>> = (0..vocab.len())
        .map(|_| {
            (0..cfg.base_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_stddev)
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;

    let n_conf = cfg.num_confusable();
    let mut kinds: Vec<Kind> = std::iter::repeat_n(Kind::Positive, cfg.num_positive)
        .chain(std::iter::repeat_n(Kind::Confusable, n_conf))
        .chain(std::iter::repeat_n(Kind::Plain, cfg.num_negative - n_conf))
        .collect();
    kinds.shuffle(&mut rng);

    let mut records = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.into_iter().enumerate() {
        let want_kw = matches!(kind, Kind::Positive);
        let mut attempt = 0;
        let (verbatim, transcript) = loop {
            let text = compose_text(kind, cfg, &mut rng);
            let rewritten = rewrite_keywords(&text, &cfg.keyword_phrases);
            if rewritten.contains(super::KW_TOKEN) == want_kw {
                break (text, rewritten);
            }
            attempt += 1;
            if attempt >= MAX_ATTEMPTS {
                return Err(Error::invalid(
                    "could not generate an utterance of the requested polarity",
                ));
            }
        };
        let ids = vocab.tokenize(&verbatim)?;
        let mut frames = Vec::with_capacity(ids.len() * cfg.frames_per_token);
        for &id in &ids {
            let proto = &prototypes[id as usize];
            for _ in 0..cfg.frames_per_token {
                frames.push(
                    proto
                        .iter()
                        .map(|&p| (p + noise.sample(&mut rng)) as f32)
                        .collect(),
                );
            }
        }
        let features = FeatureSequence::new(frames, RAW_STRIDE_MS)?;
        let polarity = if want_kw {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        records.push(UtteranceRecord::new(
            format!("utt{i:06}"),
            polarity,
            transcript,
            verbatim,
            features,
        )?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::count_kw_tokens;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            num_positive: 30,
            num_negative: 40,
            confusable_fraction: 0.5,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let v = Vocabulary::desk();
        let a = synthesize_corpus(&small(7), &v).unwrap();
        let b = synthesize_corpus(&small(7), &v).unwrap();
        assert_eq!(a, b);
        let c = synthesize_corpus(&small(8), &v).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_noise_features_are_prototypes() {
        let v = Vocabulary::desk();
        let cfg = SynthConfig {
            num_positive: 1,
            num_negative: 0,
            noise_stddev: 0.0,
            frames_per_token: 2,
            ..small(3)
        };
        let recs = synthesize_corpus(&cfg, &v).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        let n_chars = r.verbatim.chars().count();
        assert_eq!(r.features.num_frames(), 2 * n_chars);
        // frames of the same character are identical, and repeated letters
        // share one prototype
        let frames = r.features.frames();
        let chars: Vec<char> = r.verbatim.chars().collect();
        for (i, ci) in chars.iter().enumerate() {
            assert_eq!(frames[2 * i], frames[2 * i + 1]);
            for (j, cj) in chars.iter().enumerate() {
                assert_eq!(ci == cj, frames[2 * i] == frames[2 * j]);
            }
        }
    }

    #[test]
    fn polarity_agrees_with_kw_tokens() {
        let v = Vocabulary::desk();
        let mut recs = synthesize_corpus(&small(11), &v).unwrap();
        assert_eq!(recs.iter().filter(|r| r.polarity.is_positive()).count(), 30);
        for r in recs.iter_mut() {
            let pos = r.polarity.is_positive();
            let k = count_kw_tokens(r.transcript.tokens(&v).unwrap(), &v);
            assert_eq!(pos, k >= 1, "{}", r.transcript.text);
        }
    }

    #[test]
    fn confusables_are_one_substitution_from_a_keyword() {
        let v = Vocabulary::desk();
        let cfg = SynthConfig {
            num_positive: 0,
            num_negative: 20,
            confusable_fraction: 1.0,
            ..small(5)
        };
        for r in synthesize_corpus(&cfg, &v).unwrap() {
            let near = cfg.keyword_phrases.iter().any(|k| {
                r.verbatim
                    .as_bytes()
                    .windows(k.len())
                    .any(|w| w.iter().zip(k.as_bytes()).filter(|(a, b)| a != b).count() == 1)
            });
            assert!(near, "{}", r.verbatim);
        }
    }

    #[test]
    fn rejects_untokenizable_keyword() {
        let v = Vocabulary::desk();
        let cfg = SynthConfig {
            keyword_phrases: vec!["Hey Google".into()],
            ..small(1)
        };
        assert!(synthesize_corpus(&cfg, &v).is_err());
        let cfg = SynthConfig {
            vocab_size: 75,
            ..small(1)
        };
        assert!(synthesize_corpus(&cfg, &v).is_err());
    }
}
