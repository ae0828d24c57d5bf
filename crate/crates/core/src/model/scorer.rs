use ndarray::{Array1, Array2};

use super::encoder::{check_features, encoder_forward};
use super::grad::ForwardMode;
use super::joint::joint_from_projections;
use super::label::LabelState;
use super::layers::linear;
use super::params::Parameters;
use crate::corpus::FeatureSequence;
use crate::error::Result;
use crate::transducer::TransducerScorer;

/// Label state plus its joint-side projection.
#[derive(Debug, Clone)]
pub struct ScorerState {
    pub label: LabelState,
    projection: Array1<f64>,
}

/// Inference session over one utterance: the audio side of the joint is
/// computed once, label states are advanced incrementally.
pub struct ModelScorer<'a> {
    params: &'a Parameters,
    audio_proj: Array2<f64>,
}

impl<'a> ModelScorer<'a> {
    /// `features` must already be framed to `input_dim`.
    pub fn new(params: &'a Parameters, features: &FeatureSequence) -> Result<Self> {
        check_features(params, features)?;
        let x = features.to_array();
        let (enc, _) = encoder_forward(params, &x.view(), ForwardMode::Inference);
        let audio_proj = linear(&enc.view(), &params.joint.audio);
        Ok(Self { params, audio_proj })
    }

    fn project(&self, label: LabelState) -> ScorerState {
        let projection =
            label.h.dot(&self.params.joint.label.weight) + &self.params.joint.label.bias;
        ScorerState { label, projection }
    }
}

impl TransducerScorer for ModelScorer<'_> {
    type State = ScorerState;

    fn num_frames(&self) -> usize {
        self.audio_proj.nrows()
    }

    fn vocab_size(&self) -> usize {
        self.params.config.vocab_size
    }

    fn blank_id(&self) -> u32 {
        self.params.config.blank_id
    }

    fn initial_state(&self) -> ScorerState {
        self.project(LabelState::start(self.params))
    }

    fn advance(&self, state: &ScorerState, token: u32) -> ScorerState {
        let next = state
            .label
            .advance(self.params, token)
            .expect("decoders only advance on non-blank in-range tokens");
        self.project(next)
    }

    fn log_probs(&self, frame: usize, state: &ScorerState) -> Vec<f64> {
        joint_from_projections(
            self.params,
            &self.audio_proj.row(frame).to_owned(),
            &state.projection,
        )
    }
}
