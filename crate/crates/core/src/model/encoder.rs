use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grad::ForwardMode;
use super::layers::{
    layer_norm, layer_norm_backward, linear, linear_backward, positions, NormCache,
};
use super::params::{EncoderBlock, Parameters};
use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};

struct BlockCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    attn_norm: NormCache,
    ff_input: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
    ff_mask: Option<Array2<f64>>,
    ff_norm: NormCache,
}

pub(crate) struct EncoderCache {
    features: Array2<f64>,
    blocks: Vec<BlockCache>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

fn block_forward(
    x: Array2<f64>,
    block: &EncoderBlock,
    num_heads: usize,
    head_dim: usize,
    dropout: Option<(&mut ChaCha8Rng, f64)>,
) -> (Array2<f64>, BlockCache) {
    let t = x.nrows();
    let xv = x.view();
    let q = linear(&xv, &block.query);
    let k = linear(&xv, &block.key);
    let v = linear(&xv, &block.value);
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut context = Array2::zeros((t, num_heads * head_dim));
    let mut attn = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let cols = s![.., h * head_dim..(h + 1) * head_dim];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
            let m = row
                .iter()
                .take(i + 1)
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, val) in row.iter_mut().enumerate() {
                if j > i {
                    *val = 0.0;
                } else {
                    *val = (*val - m).exp();
                    z += *val;
                }
            }
            row /= z;
        }
        context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        attn.push(scores);
    }
    let mut attn_out = linear(&context.view(), &block.output);
    let (mut rng_slot, p) = match dropout {
        Some((rng, p)) => (Some(rng), p),
        None => (None, 0.0),
    };
    let attn_mask = rng_slot
        .as_deref_mut()
        .map(|rng| dropout_mask(rng, attn_out.dim(), p));
    if let Some(m) = &attn_mask {
        attn_out *= m;
    }
    let (ff_input, attn_norm) = layer_norm(&(&x + &attn_out), &block.attn_norm);

    let hidden_pre = linear(&ff_input.view(), &block.ff_in);
    let hidden = hidden_pre.mapv(|z| z.max(0.0));
    let mut ff_out = linear(&hidden.view(), &block.ff_out);
    let ff_mask = rng_slot.map(|rng| dropout_mask(rng, ff_out.dim(), p));
    if let Some(m) = &ff_mask {
        ff_out *= m;
    }
    let (y, ff_norm) = layer_norm(&(&ff_input + &ff_out), &block.ff_norm);
    let cache = BlockCache {
        input: x,
        q,
        k,
        v,
        attn,
        context,
        attn_mask,
        attn_norm,
        ff_input,
        hidden_pre,
        hidden,
        ff_mask,
        ff_norm,
    };
    (y, cache)
}

fn block_backward(
    dy: &Array2<f64>,
    cache: &BlockCache,
    block: &EncoderBlock,
    grad: &mut EncoderBlock,
    head_dim: usize,
) -> Array2<f64> {
    let d_res2 = layer_norm_backward(dy, &cache.ff_norm, &block.ff_norm, &mut grad.ff_norm);
    let mut d_ff_out = d_res2.clone();
    if let Some(m) = &cache.ff_mask {
        d_ff_out *= m;
    }
    let mut d_hidden = linear_backward(
        &cache.hidden.view(),
        &d_ff_out.view(),
        &block.ff_out,
        &mut grad.ff_out,
    );
    d_hidden.zip_mut_with(&cache.hidden_pre, |g, &z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
    let d_ff_input = linear_backward(
        &cache.ff_input.view(),
        &d_hidden.view(),
        &block.ff_in,
        &mut grad.ff_in,
    );
    let d_res1 = d_res2 + d_ff_input;

    let d_res1 = layer_norm_backward(
        &d_res1,
        &cache.attn_norm,
        &block.attn_norm,
        &mut grad.attn_norm,
    );
    let mut d_attn_out = d_res1.clone();
    if let Some(m) = &cache.attn_mask {
        d_attn_out *= m;
    }
    let d_context = linear_backward(
        &cache.context.view(),
        &d_attn_out.view(),
        &block.output,
        &mut grad.output,
    );
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut dq = Array2::zeros(cache.q.dim());
    let mut dk = Array2::zeros(cache.k.dim());
    let mut dv = Array2::zeros(cache.v.dim());
    for (h, a) in cache.attn.iter().enumerate() {
        let cols = s![.., h * head_dim..(h + 1) * head_dim];
        let dc = d_context.slice(cols);
        let da = dc.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&a.t().dot(&dc));
        let row_dot = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ds = (&da - &row_dot) * a * scale;
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    let x = cache.input.view();
    let mut dx = d_res1;
    dx += &linear_backward(&x, &dq.view(), &block.query, &mut grad.query);
    dx += &linear_backward(&x, &dk.view(), &block.key, &mut grad.key);
    dx += &linear_backward(&x, &dv.view(), &block.value, &mut grad.value);
    dx
}

pub(crate) fn check_features(params: &Parameters, features: &FeatureSequence) -> Result<()> {
    if features.dim() != params.config.input_dim {
        return Err(Error::shape(format!(
            "feature dimension {} does not match input_dim {}",
            features.dim(),
            params.config.input_dim
        )));
    }
    Ok(())
}

pub(crate) fn encoder_forward(
    params: &Parameters,
    features: &ArrayView2<f64>,
    mode: ForwardMode,
) -> (Array2<f64>, EncoderCache) {
    let cfg = &params.config;
    let mut x = linear(features, &params.input_proj);
    x += &positions(x.nrows(), x.ncols());
    let mut rng = match mode {
        ForwardMode::Train { dropout_seed } if cfg.dropout > 0.0 => {
            Some(ChaCha8Rng::seed_from_u64(dropout_seed))
        }
        _ => None,
    };
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let dropout = rng.as_mut().map(|r| (r, cfg.dropout));
        let (y, cache) = block_forward(x, block, cfg.num_heads, cfg.head_dim, dropout);
        blocks.push(cache);
        x = y;
    }
    let cache = EncoderCache {
        features: features.to_owned(),
        blocks,
    };
    (x, cache)
}

pub(crate) fn encoder_backward(
    d_out: Array2<f64>,
    cache: &EncoderCache,
    params: &Parameters,
    grad: &mut Parameters,
) {
    let cfg = &params.config;
    let mut d = d_out;
    for ((block, g), c) in params
        .blocks
        .iter()
        .zip(grad.blocks.iter_mut())
        .zip(cache.blocks.iter())
        .rev()
    {
        d = block_backward(&d, c, block, g, cfg.head_dim);
    }
    linear_backward(
        &cache.features.view(),
        &d.view(),
        &params.input_proj,
        &mut grad.input_proj,
    );
}

/// Per-frame acoustic embeddings (`T x dense2_dim`), inference mode.
///
/// Attention is causal: frame `t` only sees frames `0..=t`.
pub fn audio_encode(params: &Parameters, features: &FeatureSequence) -> Result<Array2<f64>> {
    check_features(params, features)?;
    let x = features.to_array();
    Ok(encoder_forward(params, &x.view(), ForwardMode::Inference).0)
}
