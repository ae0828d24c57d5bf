use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::{Error, Result};

/// Affine map `y = x W + b` with `W` stored as (in, out).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            gain: Array1::ones(dim),
            bias: Array1::zeros(dim),
        }
    }
}

/// One transformer block: causal multi-head self-attention followed by a
/// two-layer feed-forward, each wrapped in residual + layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attn_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ff_norm: LayerNorm,
}

/// Single-layer LSTM over token embeddings with a learned start state.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEncoder {
    pub embedding: Array2<f64>,
    pub input_weight: Array2<f64>,
    pub recurrent_weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub start: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointNetwork {
    pub audio: Linear,
    pub label: Linear,
    pub output: Linear,
}

/// All trainable tensors of the transducer. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub input_proj: Linear,
    pub blocks: Vec<EncoderBlock>,
    pub label: LabelEncoder,
    pub joint: JointNetwork,
}

/// Read-only view of one named tensor.
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Mutable view of one named tensor.
pub struct TensorViewMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

/// Which initializer a tensor takes.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Init {
    Weight { fan_in: usize },
    Zero,
    One,
}

trait Visit {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(TensorView<'a>, Init)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(TensorViewMut<'a>, Init)>);
}

fn view1<'a>(name: String, a: &'a Array1<f64>) -> TensorView<'a> {
    TensorView {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

fn view2<'a>(name: String, a: &'a Array2<f64>) -> TensorView<'a> {
    TensorView {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

fn view1_mut<'a>(name: String, a: &'a mut Array1<f64>) -> TensorViewMut<'a> {
    let shape = a.shape().to_vec();
    TensorViewMut {
        name,
        shape,
        data: a.as_slice_mut().expect("standard layout"),
    }
}

fn view2_mut<'a>(name: String, a: &'a mut Array2<f64>) -> TensorViewMut<'a> {
    let shape = a.shape().to_vec();
    TensorViewMut {
        name,
        shape,
        data: a.as_slice_mut().expect("standard layout"),
    }
}

impl Visit for Linear {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(TensorView<'a>, Init)>) {
        let fan_in = self.weight.nrows();
        out.push((
            view2(format!("{prefix}.weight"), &self.weight),
            Init::Weight { fan_in },
        ));
        out.push((view1(format!("{prefix}.bias"), &self.bias), Init::Zero));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(TensorViewMut<'a>, Init)>) {
        let fan_in = self.weight.nrows();
        out.push((
            view2_mut(format!("{prefix}.weight"), &mut self.weight),
            Init::Weight { fan_in },
        ));
        out.push((
            view1_mut(format!("{prefix}.bias"), &mut self.bias),
            Init::Zero,
        ));
    }
}

impl Visit for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(TensorView<'a>, Init)>) {
        out.push((view1(format!("{prefix}.gain"), &self.gain), Init::One));
        out.push((view1(format!("{prefix}.bias"), &self.bias), Init::Zero));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(TensorViewMut<'a>, Init)>) {
        out.push((
            view1_mut(format!("{prefix}.gain"), &mut self.gain),
            Init::One,
        ));
        out.push((
            view1_mut(format!("{prefix}.bias"), &mut self.bias),
            Init::Zero,
        ));
    }
}

impl Visit for EncoderBlock {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(TensorView<'a>, Init)>) {
        self.query.visit(&format!("{prefix}.query"), out);
        self.key.visit(&format!("{prefix}.key"), out);
        self.value.visit(&format!("{prefix}.value"), out);
        self.output.visit(&format!("{prefix}.output"), out);
        self.attn_norm.visit(&format!("{prefix}.attn_norm"), out);
        self.ff_in.visit(&format!("{prefix}.ff_in"), out);
        self.ff_out.visit(&format!("{prefix}.ff_out"), out);
        self.ff_norm.visit(&format!("{prefix}.ff_norm"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(TensorViewMut<'a>, Init)>) {
        self.query.visit_mut(&format!("{prefix}.query"), out);
        self.key.visit_mut(&format!("{prefix}.key"), out);
        self.value.visit_mut(&format!("{prefix}.value"), out);
        self.output.visit_mut(&format!("{prefix}.output"), out);
        self.attn_norm
            .visit_mut(&format!("{prefix}.attn_norm"), out);
        self.ff_in.visit_mut(&format!("{prefix}.ff_in"), out);
        self.ff_out.visit_mut(&format!("{prefix}.ff_out"), out);
        self.ff_norm.visit_mut(&format!("{prefix}.ff_norm"), out);
    }
}

impl Visit for LabelEncoder {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(TensorView<'a>, Init)>) {
        let h = self.start.len();
        out.push((
            view2(format!("{prefix}.embedding"), &self.embedding),
            Init::Weight { fan_in: 1 },
        ));
        out.push((
            view2(format!("{prefix}.input_weight"), &self.input_weight),
            Init::Weight { fan_in: h },
        ));
        out.push((
            view2(format!("{prefix}.recurrent_weight"), &self.recurrent_weight),
            Init::Weight { fan_in: h },
        ));
        out.push((view1(format!("{prefix}.bias"), &self.bias), Init::Zero));
        out.push((view1(format!("{prefix}.start"), &self.start), Init::Zero));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(TensorViewMut<'a>, Init)>) {
        let h = self.start.len();
        out.push((
            view2_mut(format!("{prefix}.embedding"), &mut self.embedding),
            Init::Weight { fan_in: 1 },
        ));
        out.push((
            view2_mut(format!("{prefix}.input_weight"), &mut self.input_weight),
            Init::Weight { fan_in: h },
        ));
        out.push((
            view2_mut(
                format!("{prefix}.recurrent_weight"),
                &mut self.recurrent_weight,
            ),
            Init::Weight { fan_in: h },
        ));
        out.push((
            view1_mut(format!("{prefix}.bias"), &mut self.bias),
            Init::Zero,
        ));
        out.push((
            view1_mut(format!("{prefix}.start"), &mut self.start),
            Init::Zero,
        ));
    }
}

impl Visit for JointNetwork {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(TensorView<'a>, Init)>) {
        self.audio.visit(&format!("{prefix}.audio"), out);
        self.label.visit(&format!("{prefix}.label"), out);
        self.output.visit(&format!("{prefix}.output"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(TensorViewMut<'a>, Init)>) {
        self.audio.visit_mut(&format!("{prefix}.audio"), out);
        self.label.visit_mut(&format!("{prefix}.label"), out);
        self.output.visit_mut(&format!("{prefix}.output"), out);
    }
}

impl Parameters {
    /// Zero-filled tensors of the right shapes (layer-norm gains included).
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.dense2_dim;
        let attn = config.num_heads * config.head_dim;
        let h = config.label_encoder_dim;
        let block = || EncoderBlock {
            query: Linear::zeros(d, attn),
            key: Linear::zeros(d, attn),
            value: Linear::zeros(d, attn),
            output: Linear::zeros(attn, d),
            attn_norm: LayerNorm {
                gain: Array1::zeros(d),
                bias: Array1::zeros(d),
            },
            ff_in: Linear::zeros(d, config.dense1_dim),
            ff_out: Linear::zeros(config.dense1_dim, d),
            ff_norm: LayerNorm {
                gain: Array1::zeros(d),
                bias: Array1::zeros(d),
            },
        };
        Self {
            config: config.clone(),
            input_proj: Linear::zeros(config.input_dim, d),
            blocks: (0..config.num_blocks).map(|_| block()).collect(),
            label: LabelEncoder {
                embedding: Array2::zeros((config.vocab_size, h)),
                input_weight: Array2::zeros((h, 4 * h)),
                recurrent_weight: Array2::zeros((h, 4 * h)),
                bias: Array1::zeros(4 * h),
                start: Array1::zeros(h),
            },
            joint: JointNetwork {
                audio: Linear::zeros(d, config.joint_dim),
                label: Linear::zeros(h, config.joint_dim),
                output: Linear::zeros(config.joint_dim, config.vocab_size),
            },
        }
    }

    /// Same shapes as `self`, every entry zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    fn visit_all(&self) -> Vec<(TensorView<'_>, Init)> {
        let mut out = Vec::new();
        self.input_proj.visit("input_proj", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("blocks.{i}"), &mut out);
        }
        self.label.visit("label", &mut out);
        self.joint.visit("joint", &mut out);
        out
    }

    fn visit_all_mut(&mut self) -> Vec<(TensorViewMut<'_>, Init)> {
        let mut out = Vec::new();
        self.input_proj.visit_mut("input_proj", &mut out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("blocks.{i}"), &mut out);
        }
        self.label.visit_mut("label", &mut out);
        self.joint.visit_mut("joint", &mut out);
        out
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        self.visit_all().into_iter().map(|(v, _)| v).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_>> {
        self.visit_all_mut().into_iter().map(|(v, _)| v).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) -> Result<()> {
        let src = other.tensors();
        let mut dst = self.tensors_mut();
        if src.len() != dst.len() {
            return Err(Error::shape("parameter sets have different layouts"));
        }
        for (d, s) in dst.iter_mut().zip(&src) {
            if d.shape != s.shape || d.name != s.name {
                return Err(Error::shape(format!(
                    "tensor {} does not match {}",
                    d.name, s.name
                )));
            }
            for (x, y) in d.data.iter_mut().zip(s.data) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t.data.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Largest absolute entry; zero for an all-zero set.
    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Rounds every entry to the nearest 32-bit float.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            for x in t.data.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }
}

/// Deterministic initialization: weights uniform in +-1/sqrt(fan_in), biases
/// and the label start state zero, layer-norm gains one.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Parameters> {
    config.validate()?;
    let mut params = Parameters::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (view, init) in params.visit_all_mut() {
        match init {
            Init::Zero => view.data.fill(0.0),
            Init::One => view.data.fill(1.0),
            Init::Weight { fan_in } => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                for x in view.data.iter_mut() {
                    *x = rng.random_range(-bound..bound);
                }
            }
        }
    }
    Ok(params)
}
