use std::collections::HashMap;

use crate::error::{Error, Result};

/// Literal spelling of the keyword token inside transcripts.
pub const KW_TOKEN: &str = "<kw>";

const BLANK_TOKEN: &str = "<blank>";

/// Ordered token inventory with a bidirectional token/id map.
///
/// The blank symbol is part of the output distribution but never appears in a
/// transcript; `<kw>` is a single token standing for a whole keyword phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    kw_token_id: u32,
    blank_id: u32,
    index: HashMap<char, u32>,
}

impl Vocabulary {
    /// `<blank>`, `<kw>`, space, apostrophe and `a`..=`z`: 30 symbols.
    pub fn desk() -> Self {
        let mut tokens = vec![BLANK_TOKEN.to_string(), KW_TOKEN.to_string()];
        tokens.push(" ".into());
        tokens.push("'".into());
        tokens.extend(('a'..='z').map(String::from));
        Self::new(tokens, 1, 0).expect("desk vocabulary is well formed")
    }

    /// Builds a vocabulary. Every entry other than blank and `<kw>` must be a
    /// single character.
    pub fn new(tokens: Vec<String>, kw_token_id: u32, blank_id: u32) -> Result<Self> {
        let n = tokens.len();
        if kw_token_id as usize >= n || blank_id as usize >= n {
            return Err(Error::invalid("special token id out of range"));
        }
        if kw_token_id == blank_id {
            return Err(Error::invalid("<kw> and blank must be distinct"));
        }
        if tokens[kw_token_id as usize] != KW_TOKEN {
            return Err(Error::invalid(format!(
                "token {kw_token_id} must be spelled {KW_TOKEN}"
            )));
        }
        let mut index = HashMap::new();
        for (id, tok) in tokens.iter().enumerate() {
            let id = id as u32;
            if id == kw_token_id || id == blank_id {
                continue;
            }
            let mut chars = tok.chars();
            let (Some(ch), None) = (chars.next(), chars.next()) else {
                return Err(Error::invalid(format!(
                    "grapheme token {tok:?} must be exactly one character"
                )));
            };
            if index.insert(ch, id).is_some() {
                return Err(Error::invalid(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self {
            tokens,
            kw_token_id,
            blank_id,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn kw_token_id(&self) -> u32 {
        self.kw_token_id
    }

    pub fn blank_id(&self) -> u32 {
        self.blank_id
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id_of_char(&self, ch: char) -> Option<u32> {
        self.index.get(&ch).copied()
    }

    /// Maps text to token ids; `<kw>` becomes one id, every other character
    /// its grapheme id.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(text.len());
        let mut rest = text;
        let mut offset = 0;
        while let Some(ch) = rest.chars().next() {
            if rest.starts_with(KW_TOKEN) {
                out.push(self.kw_token_id);
                rest = &rest[KW_TOKEN.len()..];
                offset += KW_TOKEN.len();
                continue;
            }
            let id = self
                .id_of_char(ch)
                .ok_or(Error::OutOfVocabulary { ch, offset })?;
            out.push(id);
            rest = &rest[ch.len_utf8()..];
            offset += ch.len_utf8();
        }
        Ok(out)
    }

    /// Inverse of [`Vocabulary::tokenize`]. Blank ids are skipped.
    pub fn detokenize(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            if id == self.blank_id {
                continue;
            }
            let tok = self
                .token(id)
                .ok_or_else(|| Error::invalid(format!("token id {id} out of range")))?;
            out.push_str(tok);
        }
        Ok(out)
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::desk()
    }
}

/// Number of `<kw>` tokens in a token sequence.
pub fn count_kw_tokens(tokens: &[u32], vocab: &Vocabulary) -> usize {
    tokens.iter().filter(|&&t| t == vocab.kw_token_id).count()
}
