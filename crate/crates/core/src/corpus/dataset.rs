use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureSequence, Vocabulary, KW_TOKEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        self == Polarity::Positive
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            other => Err(Error::invalid(format!("unknown polarity {other:?}"))),
        }
    }
}

/// Transcript text, optionally with its token ids cached.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub text: String,
    pub tokens: Option<Vec<u32>>,
}

impl Transcript {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            tokens: None,
        }
    }

    pub fn has_kw(&self) -> bool {
        self.text.contains(KW_TOKEN)
    }

    /// Token ids, tokenizing on first use.
    pub fn tokens(&mut self, vocab: &Vocabulary) -> Result<&[u32]> {
        if self.tokens.is_none() {
            self.tokens = Some(vocab.tokenize(&self.text)?);
        }
        Ok(self.tokens.as_deref().unwrap_or_default())
    }
}

/// One utterance: the rewritten transcript, the verbatim transcript it came
/// from, and its feature frames.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    pub polarity: Polarity,
    pub transcript: Transcript,
    pub verbatim: String,
    pub features: FeatureSequence,
}

impl UtteranceRecord {
    pub fn new(
        id: impl Into<String>,
        polarity: Polarity,
        transcript: impl Into<String>,
        verbatim: impl Into<String>,
        features: FeatureSequence,
    ) -> Result<Self> {
        let rec = Self {
            id: id.into(),
            polarity,
            transcript: Transcript::new(transcript),
            verbatim: verbatim.into(),
            features,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.polarity.is_positive() != self.transcript.has_kw() {
            return Err(Error::invalid(format!(
                "utterance {}: polarity {} disagrees with transcript {:?}",
                self.id,
                self.polarity.as_str(),
                self.transcript.text
            )));
        }
        self.features.validate()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    polarity: Polarity,
    transcript: String,
    verbatim: String,
    stride_ms: f64,
    features: Vec<Vec<f32>>,
}

/// Writes one JSON object per line.
pub fn save_jsonl(records: &[UtteranceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = RecordLine {
            id: r.id.clone(),
            polarity: r.polarity,
            transcript: r.transcript.text.clone(),
            verbatim: r.verbatim.clone(),
            stride_ms: r.features.stride_ms(),
            features: r.features.frames().to_vec(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let raw: RecordLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let features = FeatureSequence::new(raw.features, raw.stride_ms)
            .map_err(|e| parse_err(e.to_string()))?;
        let rec =
            UtteranceRecord::new(raw.id, raw.polarity, raw.transcript, raw.verbatim, features)
                .map_err(|e| parse_err(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Stratified split into (train, valid, test), preserving record order
/// within each polarity.
pub fn split_corpus(
    records: Vec<UtteranceRecord>,
    valid_fraction: f64,
    test_fraction: f64,
) -> Result<(
    Vec<UtteranceRecord>,
    Vec<UtteranceRecord>,
    Vec<UtteranceRecord>,
)> {
    if !(0.0..1.0).contains(&valid_fraction)
        || !(0.0..1.0).contains(&test_fraction)
        || valid_fraction + test_fraction >= 1.0
    {
        return Err(Error::invalid(
            "split fractions must be in [0,1) and sum below 1",
        ));
    }
    let (pos, neg): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.polarity.is_positive());
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for group in [pos, neg] {
        let n = group.len();
        let n_test = (n as f64 * test_fraction).round() as usize;
        let n_valid = (n as f64 * valid_fraction).round() as usize;
        for (i, r) in group.into_iter().enumerate() {
            if i < n_test {
                test.push(r);
            } else if i < n_test + n_valid {
                valid.push(r);
            } else {
                train.push(r);
            }
        }
    }
    Ok((train, valid, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, pos: bool) -> UtteranceRecord {
        let feats = FeatureSequence::new(vec![vec![0.25, -1.5e-7], vec![3.0, 1e20]], 10.0).unwrap();
        let (pol, text) = if pos {
            (Polarity::Positive, "<kw> go")
        } else {
            (Polarity::Negative, "go")
        };
        UtteranceRecord::new(id, pol, text, text.replace("<kw>", "hey google"), feats).unwrap()
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        save_jsonl(&[], &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap().len(), 0);
        assert!(load_jsonl(&p).unwrap().is_empty());
    }

    #[test]
    fn single_record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.jsonl");
        let recs = vec![record("u0", true)];
        save_jsonl(&recs, &p).unwrap();
        assert_eq!(load_jsonl(&p).unwrap(), recs);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        save_jsonl(&[record("u0", true)], &p).unwrap();
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("{\"id\": 3}\n");
        std::fs::write(&p, text).unwrap();
        match load_jsonl(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn polarity_must_agree_with_kw_presence() {
        let feats = FeatureSequence::new(vec![vec![0.0]], 10.0).unwrap();
        assert!(UtteranceRecord::new("x", Polarity::Positive, "go", "go", feats.clone()).is_err());
        assert!(
            UtteranceRecord::new("x", Polarity::Negative, "<kw>", "hey google", feats).is_err()
        );
    }

    #[test]
    fn split_is_stratified() {
        let recs: Vec<_> = (0..20)
            .map(|i| record(&format!("u{i}"), i % 2 == 0))
            .collect();
        let (train, valid, test) = split_corpus(recs, 0.2, 0.3).unwrap();
        assert_eq!(test.len(), 6);
        assert_eq!(valid.len(), 4);
        assert_eq!(train.len(), 10);
        assert_eq!(test.iter().filter(|r| r.polarity.is_positive()).count(), 3);
        assert!(split_corpus(vec![], 0.5, 0.5).is_err());
    }
}
