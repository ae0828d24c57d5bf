//! A small transformer-transducer.
//!
//! Audio frames pass through an input projection, sinusoidal positions and a
//! stack of causal transformer blocks. Token prefixes pass through an LSTM
//! label encoder. The joint network projects both embeddings to a common
//! width, sums them, applies a nonlinearity and a vocabulary projection, and
//! emits log-probabilities for every (frame, prefix length) pair.
//!
//! Forward and backward passes are written by hand over `f64` matrices; the
//! backward passes are checked against finite differences in the tests.

mod checkpoint;
mod encoder;
mod grad;
mod joint;
mod label;
mod lattice;
mod layers;
mod params;
mod scorer;

use serde::{Deserialize, Serialize};

use crate::corpus::{stack_and_subsample, FeatureSequence};
use crate::error::{Error, Result};

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use encoder::audio_encode;
pub use grad::{grad, grad_multi, ForwardMode};
pub use joint::joint;
pub use label::{label_encode, LabelState};
pub use lattice::{forward_lattice, LatticeGrad, LogitLattice};
pub use params::{
    init_params, EncoderBlock, JointNetwork, LabelEncoder, LayerNorm, Linear, Parameters,
    TensorView, TensorViewMut,
};
pub use scorer::ModelScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointActivation {
    Tanh,
    Relu,
}

/// Recurrent cell used by the label encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelCell {
    /// Standard LSTM: input/forget/cell/output gates, no peepholes, one
    /// shared bias per gate.
    Lstm,
}

/// Frame stacking applied to raw features before the audio encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendConfig {
    pub stack: usize,
    pub subsample: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            stack: 4,
            subsample: 3,
        }
    }
}

/// Model shape. The transformer block width is `dense2_dim`; attention runs
/// at `num_heads * head_dim` and projects back to the block width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub num_blocks: usize,
    pub dense1_dim: usize,
    pub dense2_dim: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub dropout: f64,
    pub label_encoder_dim: usize,
    pub joint_dim: usize,
    pub vocab_size: usize,
    pub blank_id: u32,
    pub joint_activation: JointActivation,
    pub label_cell: LabelCell,
    pub frontend: FrontendConfig,
}

impl ModelConfig {
    /// Desk-scale default: 2 blocks, 64/16 dense, 2 heads of 8, 16-dim LSTM.
    pub fn desk(base_dim: usize, vocab_size: usize) -> Self {
        let frontend = FrontendConfig::default();
        Self {
            input_dim: base_dim * frontend.stack,
            num_blocks: 2,
            dense1_dim: 64,
            dense2_dim: 16,
            num_heads: 2,
            head_dim: 8,
            dropout: 0.0,
            label_encoder_dim: 16,
            joint_dim: 32,
            vocab_size,
            blank_id: 0,
            joint_activation: JointActivation::Tanh,
            label_cell: LabelCell::Lstm,
            frontend,
        }
    }

    /// Seven blocks of 128/32 dense, 8 heads of 64, 32-dim LSTM, on 160-dim
    /// stacked log-Mel inputs.
    pub fn small_preset(vocab_size: usize) -> Self {
        Self {
            input_dim: 160,
            num_blocks: 7,
            dense1_dim: 128,
            dense2_dim: 32,
            num_heads: 8,
            head_dim: 64,
            dropout: 0.1,
            label_encoder_dim: 32,
            joint_dim: 32,
            ..Self::desk(40, vocab_size)
        }
    }

    /// Fifteen blocks of 1024/256 dense, 8 heads of 64, 128-dim LSTM.
    pub fn large_preset(vocab_size: usize) -> Self {
        Self {
            num_blocks: 15,
            dense1_dim: 1024,
            dense2_dim: 256,
            label_encoder_dim: 128,
            joint_dim: 256,
            ..Self::small_preset(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("num_blocks", self.num_blocks),
            ("dense1_dim", self.dense1_dim),
            ("dense2_dim", self.dense2_dim),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("label_encoder_dim", self.label_encoder_dim),
            ("joint_dim", self.joint_dim),
            ("frontend.stack", self.frontend.stack),
            ("frontend.subsample", self.frontend.subsample),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if self.vocab_size < 3 {
            return Err(Error::invalid("vocab_size must be at least 3"));
        }
        if self.blank_id as usize >= self.vocab_size {
            return Err(Error::invalid("blank_id out of range"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        Ok(())
    }

    /// Applies the frontend to raw frames and checks the resulting width.
    pub fn prepare_features(&self, raw: &FeatureSequence) -> Result<FeatureSequence> {
        let out = stack_and_subsample(raw, self.frontend.stack, self.frontend.subsample)?;
        if out.dim() != self.input_dim {
            return Err(Error::shape(format!(
                "stacked feature dimension {} does not match input_dim {}",
                out.dim(),
                self.input_dim
            )));
        }
        Ok(out)
    }
}
