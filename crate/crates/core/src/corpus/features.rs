use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A T x D matrix of acoustic feature frames with its frame stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    frames: Vec<Vec<f32>>,
    stride_ms: f64,
}

impl FeatureSequence {
    pub fn new(frames: Vec<Vec<f32>>, stride_ms: f64) -> Result<Self> {
        let seq = Self { frames, stride_ms };
        seq.validate()?;
        Ok(seq)
    }

    pub fn from_array(frames: &Array2<f64>, stride_ms: f64) -> Result<Self> {
        let rows = frames
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&x| x as f32).collect())
            .collect();
        Self::new(rows, stride_ms)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.frames.first() else {
            return Err(Error::shape("feature sequence has no frames"));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::shape("feature dimension is zero"));
        }
        for (t, row) in self.frames.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::shape(format!(
                    "frame {t} has dimension {} (expected {dim})",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("frame {t} has a non-finite value")));
            }
        }
        if !(self.stride_ms > 0.0 && self.stride_ms.is_finite()) {
            return Err(Error::invalid("frame stride must be positive"));
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }

    pub fn stride_ms(&self) -> f64 {
        self.stride_ms
    }

    pub fn frames(&self) -> &[Vec<f32>] {
        &self.frames
    }

    pub fn to_array(&self) -> Array2<f64> {
        let (t, d) = (self.num_frames(), self.dim());
        Array2::from_shape_fn((t, d), |(i, j)| self.frames[i][j] as f64)
    }
}

/// Stacks `stack` consecutive frames and keeps every `subsample`-th window.
///
/// Output frame `i` concatenates input frames `[i*subsample, i*subsample+stack)`;
/// windows running past the end repeat the final frame.
pub fn stack_and_subsample(
    features: &FeatureSequence,
    stack: usize,
    subsample: usize,
) -> Result<FeatureSequence> {
    if stack == 0 || subsample == 0 {
        return Err(Error::invalid("stack and subsample must be positive"));
    }
    let t = features.num_frames();
    let last = t - 1;
    let out_len = t.div_ceil(subsample);
    let frames = (0..out_len)
        .map(|i| {
            let start = i * subsample;
            (start..start + stack)
                .flat_map(|j| features.frames[j.min(last)].iter().copied())
                .collect()
        })
        .collect();
    Ok(FeatureSequence {
        frames,
        stride_ms: features.stride_ms * subsample as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, d: usize) -> FeatureSequence {
        let frames = (0..t)
            .map(|i| (0..d).map(|j| (i * 100 + j) as f32).collect())
            .collect();
        FeatureSequence::new(frames, 10.0).unwrap()
    }

    #[test]
    fn log_mel_geometry() {
        let out = stack_and_subsample(&ramp(12, 40), 4, 3).unwrap();
        assert_eq!(out.num_frames(), 4);
        assert_eq!(out.dim(), 160);
        assert_eq!(out.stride_ms(), 30.0);
    }

    #[test]
    fn unit_stack_is_identity() {
        let x = ramp(7, 3);
        assert_eq!(stack_and_subsample(&x, 1, 1).unwrap(), x);
    }

    #[test]
    fn overrun_pads_with_last_frame() {
        let x = ramp(5, 1);
        let out = stack_and_subsample(&x, 4, 3).unwrap();
        assert_eq!(out.num_frames(), 2);
        assert_eq!(out.frames()[0], vec![0.0, 100.0, 200.0, 300.0]);
        assert_eq!(out.frames()[1], vec![300.0, 400.0, 400.0, 400.0]);
    }

    #[test]
    fn output_length_is_ceil_for_all_small_lengths() {
        for t in 1..=100 {
            for sub in 1..=5 {
                let out = stack_and_subsample(&ramp(t, 2), 4, sub).unwrap();
                assert_eq!(out.num_frames(), t.div_ceil(sub), "t={t} sub={sub}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = ramp(3, 2);
        assert!(stack_and_subsample(&x, 0, 1).is_err());
        assert!(stack_and_subsample(&x, 1, 0).is_err());
        assert!(FeatureSequence::new(vec![], 10.0).is_err());
        assert!(FeatureSequence::new(vec![vec![1.0], vec![1.0, 2.0]], 10.0).is_err());
        assert!(FeatureSequence::new(vec![vec![f32::NAN]], 10.0).is_err());
    }
}
