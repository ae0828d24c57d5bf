//! Detection scores: the `<kw>` posterior of the keyword-token model, the
//! bigram edit-distance score of a verbatim ASR model, and sum fusion.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSequence, Polarity, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ModelScorer, Parameters};
use crate::transducer::{
    beam_search_observed, greedy_decode, greedy_decode_observed, TransducerScorer,
};

/// One system's score for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredUtterance {
    pub utt_id: String,
    pub polarity: Polarity,
    pub score: f64,
    pub system: String,
}

/// Maximum `<kw>` probability over every joint evaluation on the greedy
/// decoding path (every frame and every within-frame emission step).
pub fn kw_confidence<S: TransducerScorer>(
    scorer: &S,
    kw_id: u32,
    max_symbols_per_frame: usize,
) -> f64 {
    let mut best = 0.0f64;
    greedy_decode_observed(scorer, max_symbols_per_frame, |_, lp| {
        best = best.max(lp[kw_id as usize].exp());
    });
    best
}

/// Like [`kw_confidence`] but maximizing over every joint evaluation made by
/// a beam search.
pub fn kw_confidence_beam<S: TransducerScorer>(
    scorer: &S,
    kw_id: u32,
    beam: usize,
    max_symbols_per_frame: usize,
) -> Result<f64> {
    let mut best = 0.0f64;
    beam_search_observed(scorer, beam, 1, max_symbols_per_frame, |_, lp| {
        best = best.max(lp[kw_id as usize].exp());
    })?;
    Ok(best)
}

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Lowercased graphemes with whitespace removed.
fn normalize(text: &str) -> Vec<char> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

/// `exp(-d)` where `d` is the smallest grapheme edit distance between any
/// word bigram of the hypothesis and any keyword, ignoring case and spaces.
///
/// A one-word hypothesis is compared as a unigram; an empty one scores 0.
pub fn bigram_ged_score(hypothesis_text: &str, keywords: &[impl AsRef<str>]) -> f64 {
    let words: Vec<&str> = hypothesis_text.split_whitespace().collect();
    let grams: Vec<Vec<char>> = match words.len() {
        0 => return 0.0,
        1 => vec![normalize(words[0])],
        _ => words
            .windows(2)
            .map(|w| {
                let mut g = normalize(w[0]);
                g.extend(normalize(w[1]));
                g
            })
            .collect(),
    };
    let keys: Vec<Vec<char>> = keywords.iter().map(|k| normalize(k.as_ref())).collect();
    let best = grams
        .iter()
        .flat_map(|g| keys.iter().map(move |k| levenshtein(g, k)))
        .min();
    match best {
        Some(d) => (-(d as f64)).exp(),
        None => 0.0,
    }
}

/// Sum of per-system scores for one utterance.
///
/// Values are summed in ascending order so the result does not depend on
/// the order of `scores`.
pub fn fuse_scores(scores: &[ScoredUtterance]) -> Result<f64> {
    let first = scores
        .first()
        .ok_or_else(|| Error::invalid("fusion needs at least one score"))?;
    if let Some(bad) = scores.iter().find(|s| s.utt_id != first.utt_id) {
        return Err(Error::invalid(format!(
            "cannot fuse scores of {} and {}",
            first.utt_id, bad.utt_id
        )));
    }
    let mut values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    values.sort_by(f64::total_cmp);
    Ok(values.iter().sum())
}

/// Joins several systems' score lists on utterance id and sums them.
/// Output follows the order of the first list.
pub fn fuse_score_sets(
    sets: &[Vec<ScoredUtterance>],
    system: &str,
) -> Result<Vec<ScoredUtterance>> {
    let (first, rest) = sets
        .split_first()
        .ok_or_else(|| Error::invalid("fusion needs at least one score set"))?;
    let indexes: Vec<HashMap<&str, &ScoredUtterance>> = rest
        .iter()
        .map(|set| set.iter().map(|s| (s.utt_id.as_str(), s)).collect())
        .collect();
    for (set, index) in rest.iter().zip(&indexes) {
        if set.len() != first.len() || index.len() != set.len() {
            return Err(Error::invalid("score sets cover different utterances"));
        }
    }
    first
        .iter()
        .map(|base| {
            let mut group = vec![base.clone()];
            for index in &indexes {
                let other = index.get(base.utt_id.as_str()).ok_or_else(|| {
                    Error::invalid(format!(
                        "utterance {} missing from a score set",
                        base.utt_id
                    ))
                })?;
                if other.polarity != base.polarity {
                    return Err(Error::invalid(format!(
                        "utterance {} has conflicting polarity",
                        base.utt_id
                    )));
                }
                group.push((*other).clone());
            }
            Ok(ScoredUtterance {
                utt_id: base.utt_id.clone(),
                polarity: base.polarity,
                score: fuse_scores(&group)?,
                system: system.to_string(),
            })
        })
        .collect()
}

/// Writes `utt_id,polarity,score,system` rows.
pub fn write_scores_csv(scores: &[ScoredUtterance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for s in scores {
        w.serialize(s).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<ScoredUtterance>> {
    let path = path.as_ref();
    let mut r =
        csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let headers = r
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?
        .clone();
    if headers != vec!["utt_id", "polarity", "score", "system"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header utt_id,polarity,score,system, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        let s: ScoredUtterance = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        if !(s.score.is_finite() && s.score >= 0.0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("score {} is not a finite non-negative value", s.score),
            });
        }
        out.push(s);
    }
    Ok(out)
}

/// How a trained model turns one utterance into a detection score.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreMethod {
    /// Greedy `<kw>` confidence of a keyword-token model.
    KwConfidence,
    /// Greedy transcript of a verbatim model scored against keyword phrases.
    BigramGed { keywords: Vec<String> },
}

/// Scores one utterance whose features are already framed for `params`.
pub fn score_utterance(
    params: &Parameters,
    features: &FeatureSequence,
    vocab: &Vocabulary,
    method: &ScoreMethod,
    max_symbols_per_frame: usize,
) -> Result<f64> {
    let scorer = ModelScorer::new(params, features)?;
    match method {
        ScoreMethod::KwConfidence => Ok(kw_confidence(
            &scorer,
            vocab.kw_token_id(),
            max_symbols_per_frame,
        )),
        ScoreMethod::BigramGed { keywords } => {
            let hyp = greedy_decode(&scorer, max_symbols_per_frame);
            let text = vocab.detokenize(&hyp.tokens)?;
            Ok(bigram_ged_score(&text, keywords))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transducer::FnScorer;

    const KWS: [&str; 2] = ["hey google", "okay google"];

    fn scored(id: &str, score: f64) -> ScoredUtterance {
        ScoredUtterance {
            utt_id: id.into(),
            polarity: Polarity::Positive,
            score,
            system: "a".into(),
        }
    }

    #[test]
    fn levenshtein_basics() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert_eq!(levenshtein(&c("kitten"), &c("sitting")), 3);
        assert_eq!(levenshtein(&c(""), &c("abc")), 3);
        assert_eq!(levenshtein(&c("abc"), &c("abc")), 0);
    }

    #[test]
    fn worked_deletion_example() {
        let s = bigram_ged_score("Okay GOOGL", &KWS);
        assert!((s - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn exact_and_embedded_matches() {
        assert_eq!(bigram_ged_score("okay google", &KWS), 1.0);
        assert_eq!(bigram_ged_score("hey google set a timer", &KWS), 1.0);
        assert_eq!(bigram_ged_score("", &KWS), 0.0);
        // unigram fallback: "heygoogle" vs "heygoogle"
        assert_eq!(bigram_ged_score("heygoogle", &KWS), 1.0);
    }

    #[test]
    fn case_and_space_insensitive() {
        for text in [
            "play some okay gogle music",
            "set a timer",
            "hey gooogle now",
        ] {
            let base = bigram_ged_score(text, &KWS);
            assert_eq!(base, bigram_ged_score(&text.to_uppercase(), &KWS));
            assert_eq!(base, bigram_ged_score(&text.replace(' ', "   "), &KWS));
            assert!(base > 0.0 && base <= 1.0);
        }
    }

    #[test]
    fn kw_confidence_takes_the_maximum() {
        // vocab: 0 blank, 1 <kw>, 2 'a'; three frames whose <kw> posterior is
        // 0.1, 0.7, 0.3 and where blank always wins.
        let kw = [0.1f64, 0.7, 0.3];
        let scorer = FnScorer::new(3, 3, 0, |t, _| {
            let p_kw = kw[t];
            let p_blank = 0.8 * (1.0 - p_kw) + 0.0;
            vec![p_blank.ln(), p_kw.ln(), (1.0 - p_kw - p_blank).ln()]
        });
        // frame 1 has <kw> at 0.7 > blank 0.24, so greedy emits <kw> and
        // evaluates frame 1 again with the same table
        let s = kw_confidence(&scorer, 1, 3);
        assert!((s - 0.7).abs() < 1e-12, "{s}");
    }

    #[test]
    fn uniform_rows_score_one_over_v() {
        let scorer = FnScorer::new(4, 5, 0, |_, _| vec![0.0; 5]);
        assert!((kw_confidence(&scorer, 1, 3) - 0.2).abs() < 1e-12);
        assert!((kw_confidence_beam(&scorer, 1, 4, 3).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn fusion_sums_and_checks_ids() {
        assert!((fuse_scores(&[scored("u", 0.6), scored("u", 0.3)]).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(fuse_scores(&[scored("u", 0.25)]).unwrap(), 0.25);
        assert!(fuse_scores(&[scored("u", 0.6), scored("v", 0.3)]).is_err());
        assert!(fuse_scores(&[]).is_err());
    }

    #[test]
    fn fusion_is_order_independent() {
        let xs = [0.1, 0.2, 0.3, 1e-9, 0.7];
        let a: Vec<_> = xs.iter().map(|&x| scored("u", x)).collect();
        let mut b = a.clone();
        b.reverse();
        assert_eq!(fuse_scores(&a).unwrap(), fuse_scores(&b).unwrap());
        let left =
            fuse_scores(&[scored("u", fuse_scores(&a[..2]).unwrap()), a[2].clone()]).unwrap();
        let right =
            fuse_scores(&[a[0].clone(), scored("u", fuse_scores(&a[1..3]).unwrap())]).unwrap();
        assert!((left - right).abs() < 1e-15);
    }

    #[test]
    fn score_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let scores = vec![scored("u1", 0.123456789012), scored("u2", 1.0)];
        write_scores_csv(&scores, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("utt_id,polarity,score,system\n"));
        assert_eq!(read_scores_csv(&p).unwrap(), scores);
    }
}
