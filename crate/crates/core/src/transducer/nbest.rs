use std::io::Write;

use serde::{Deserialize, Serialize};

use super::NBestList;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// One exported N-best entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestLine {
    pub utt_id: String,
    pub rank: usize,
    pub tokens: Vec<u32>,
    pub text: String,
    pub log_prob: f64,
}

/// Writes one JSON line per hypothesis, ranks starting at 1.
pub fn write_nbest_jsonl<W: Write>(
    out: &mut W,
    utt_id: &str,
    nbest: &NBestList,
    vocab: &Vocabulary,
) -> Result<()> {
    for (rank, h) in nbest.hypotheses.iter().enumerate() {
        let line = NBestLine {
            utt_id: utt_id.to_string(),
            rank: rank + 1,
            tokens: h.tokens.clone(),
            text: vocab.detokenize(&h.tokens)?,
            log_prob: h.log_prob,
        };
        serde_json::to_writer(&mut *out, &line).map_err(|e| Error::invalid(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<nbest>", e))?;
    }
    Ok(())
}
