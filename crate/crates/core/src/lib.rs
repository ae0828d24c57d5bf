//! Keyword spotting with a transformer transducer.
//!
//! Keyword phrases in training transcripts are collapsed into a single `<kw>`
//! token, a small transformer-transducer is trained on the rewritten labels
//! (optionally fine-tuned with an N-best keyword risk loss), and the `<kw>`
//! posterior along the decoding path becomes the detection score. Detection
//! quality is measured with DET curves, EER and FN rate at fixed FP rates.
//!
//! Module map:
//! - [`corpus`]: vocabulary, keyword rewriting, feature framing, synthetic data.
//! - [`model`]: transformer audio encoder, LSTM label encoder, joint network.
//! - [`transducer`]: sequence likelihood, its gradient, greedy/beam decoding.
//! - [`mbr`]: keyword insertion/deletion risk over N-best lists.
//! - [`scoring`]: `<kw>` confidence, bigram edit-distance score, fusion.
//! - [`eval`]: DET curves, EER, FN at fixed FP.
//! - [`train`]: transducer training and risk fine-tuning loops.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod mbr;
pub mod model;
pub mod scoring;
pub mod train;
pub mod transducer;

mod numeric;

pub use corpus::{
    FeatureSequence, Polarity, SynthConfig, Transcript, UtteranceRecord, Vocabulary, KW_TOKEN,
};
pub use error::{Error, Result};
pub use eval::{DetCurve, OperatingPoint};
pub use mbr::{KwTokenStats, MbrConfig};
pub use model::{LogitLattice, ModelConfig, Parameters};
pub use scoring::ScoredUtterance;
pub use transducer::{Hypothesis, NBestList};
