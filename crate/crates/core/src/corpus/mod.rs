//! Labels and data: vocabulary, keyword rewriting, feature framing, and the
//! synthetic corpus with its JSONL persistence.

mod dataset;
mod features;
mod rewrite;
mod synth;
mod vocab;

pub use dataset::{load_jsonl, save_jsonl, split_corpus, Polarity, Transcript, UtteranceRecord};
pub use features::{stack_and_subsample, FeatureSequence};
pub use rewrite::rewrite_keywords;
pub use synth::{corrupt_phrase, synthesize_corpus, SynthConfig, FILLER_WORDS};
pub use vocab::{count_kw_tokens, Vocabulary, KW_TOKEN};
