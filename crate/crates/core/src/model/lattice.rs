use ndarray::{ArrayView2, Axis};

use super::encoder::{check_features, encoder_forward};
use super::grad::ForwardMode;
use super::joint::joint_forward;
use super::label::label_forward;
use super::params::Parameters;
use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};

/// Joint-network output over all frames and label-prefix lengths:
/// entry `(t, u)` is a log-probability vector over the vocabulary for frame
/// `t` after the first `u` target tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitLattice {
    frames: usize,
    positions: usize,
    vocab: usize,
    data: Vec<f64>,
}

/// Gradient of a scalar w.r.t. every lattice entry; same layout.
pub type LatticeGrad = LogitLattice;

impl LogitLattice {
    /// `positions` is `U + 1`. `data` is laid out `[t][u][v]`.
    pub fn new(frames: usize, positions: usize, vocab: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || positions == 0 || vocab == 0 {
            return Err(Error::shape("lattice dimensions must be positive"));
        }
        if data.len() != frames * positions * vocab {
            return Err(Error::shape(format!(
                "lattice data has {} entries, expected {}",
                data.len(),
                frames * positions * vocab
            )));
        }
        Ok(Self {
            frames,
            positions,
            vocab,
            data,
        })
    }

    pub fn zeros(frames: usize, positions: usize, vocab: usize) -> Self {
        Self {
            frames,
            positions,
            vocab,
            data: vec![0.0; frames * positions * vocab],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Number of prefix lengths, `U + 1`.
    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, t: usize, u: usize) -> &[f64] {
        let start = (t * self.positions + u) * self.vocab;
        &self.data[start..start + self.vocab]
    }

    pub fn row_mut(&mut self, t: usize, u: usize) -> &mut [f64] {
        let start = (t * self.positions + u) * self.vocab;
        &mut self.data[start..start + self.vocab]
    }

    pub fn get(&self, t: usize, u: usize, v: usize) -> f64 {
        self.data[(t * self.positions + u) * self.vocab + v]
    }

    pub fn get_mut(&mut self, t: usize, u: usize, v: usize) -> &mut f64 {
        &mut self.data[(t * self.positions + u) * self.vocab + v]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn as_matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.frames * self.positions, self.vocab), &self.data)
            .expect("lattice layout")
    }

    pub(crate) fn from_matrix(frames: usize, positions: usize, m: ndarray::Array2<f64>) -> Self {
        let vocab = m.len_of(Axis(1));
        let data = m.into_raw_vec_and_offset().0;
        Self {
            frames,
            positions,
            vocab,
            data,
        }
    }

    pub fn same_shape(&self, other: &LogitLattice) -> bool {
        self.frames == other.frames
            && self.positions == other.positions
            && self.vocab == other.vocab
    }
}

/// Lattice for `features` (already framed to `input_dim`) and a target.
pub fn forward_lattice(
    params: &Parameters,
    features: &FeatureSequence,
    target: &[u32],
) -> Result<LogitLattice> {
    check_features(params, features)?;
    let x = features.to_array();
    let (enc, _) = encoder_forward(params, &x.view(), ForwardMode::Inference);
    let (lab, _) = label_forward(params, target)?;
    let (lp, _) = joint_forward(params, &enc.view(), &lab.view());
    Ok(LogitLattice::from_matrix(enc.nrows(), lab.nrows(), lp))
}
