use ndarray::{s, Array1, Array2, Axis};

use super::layers::sigmoid;
use super::params::{LabelEncoder, Parameters};
use crate::error::{Error, Result};

/// Recurrent state of the label encoder after some prefix. The embedding of
/// the prefix is the hidden vector `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

struct StepCache {
    token: usize,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    c_tanh: Array1<f64>,
}

pub(crate) struct LabelCache {
    steps: Vec<StepCache>,
}

fn step(enc: &LabelEncoder, state: &LabelState, token: usize) -> (LabelState, StepCache) {
    let hdim = state.h.len();
    let mut z = enc.embedding.row(token).dot(&enc.input_weight);
    z += &state.h.dot(&enc.recurrent_weight);
    z += &enc.bias;
    let i = z.slice(s![0..hdim]).mapv(sigmoid);
    let f = z.slice(s![hdim..2 * hdim]).mapv(sigmoid);
    let g = z.slice(s![2 * hdim..3 * hdim]).mapv(f64::tanh);
    let o = z.slice(s![3 * hdim..4 * hdim]).mapv(sigmoid);
    let c = &f * &state.c + &i * &g;
    let c_tanh = c.mapv(f64::tanh);
    let h = &o * &c_tanh;
    let cache = StepCache {
        token,
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        i,
        f,
        g,
        o,
        c_tanh,
    };
    (LabelState { h, c }, cache)
}

fn check_token(params: &Parameters, token: u32) -> Result<usize> {
    if token == params.config.blank_id {
        return Err(Error::invalid("blank cannot appear in a label prefix"));
    }
    if token as usize >= params.config.vocab_size {
        return Err(Error::invalid(format!("token id {token} out of range")));
    }
    Ok(token as usize)
}

impl LabelState {
    /// State for the empty prefix: the learned start vector and a zero cell.
    pub fn start(params: &Parameters) -> Self {
        let h = params.label.start.clone();
        let c = Array1::zeros(h.len());
        Self { h, c }
    }

    /// Feeds one more token.
    pub fn advance(&self, params: &Parameters, token: u32) -> Result<Self> {
        let token = check_token(params, token)?;
        Ok(step(&params.label, self, token).0)
    }

    pub fn embedding(&self) -> &Array1<f64> {
        &self.h
    }
}

/// Embedding of a token prefix plus the state for continuing it.
pub fn label_encode(params: &Parameters, prefix: &[u32]) -> Result<(Array1<f64>, LabelState)> {
    let mut state = LabelState::start(params);
    for &tok in prefix {
        state = state.advance(params, tok)?;
    }
    Ok((state.h.clone(), state))
}

/// Embeddings of every prefix `target[..u]`, `u = 0..=U`, as rows.
pub(crate) fn label_forward(
    params: &Parameters,
    target: &[u32],
) -> Result<(Array2<f64>, LabelCache)> {
    let hdim = params.config.label_encoder_dim;
    let mut out = Array2::zeros((target.len() + 1, hdim));
    let mut state = LabelState::start(params);
    out.row_mut(0).assign(&state.h);
    let mut steps = Vec::with_capacity(target.len());
    for (u, &tok) in target.iter().enumerate() {
        let tok = check_token(params, tok)?;
        let (next, cache) = step(&params.label, &state, tok);
        out.row_mut(u + 1).assign(&next.h);
        steps.push(cache);
        state = next;
    }
    Ok((out, LabelCache { steps }))
}

/// Backpropagation through time given gradients on every prefix embedding.
pub(crate) fn label_backward(
    d_out: &Array2<f64>,
    cache: &LabelCache,
    params: &Parameters,
    grad: &mut Parameters,
) {
    let enc = &params.label;
    let g = &mut grad.label;
    let hdim = params.config.label_encoder_dim;
    let mut dh_next = Array1::<f64>::zeros(hdim);
    let mut dc_next = Array1::<f64>::zeros(hdim);
    for (u, sc) in cache.steps.iter().enumerate().rev() {
        let dh = &d_out.row(u + 1) + &dh_next;
        let d_o = &dh * &sc.c_tanh;
        let dc = &dc_next + &(&dh * &sc.o * &sc.c_tanh.mapv(|t| 1.0 - t * t));
        let d_i = &dc * &sc.g;
        let d_g = &dc * &sc.i;
        let d_f = &dc * &sc.c_prev;
        dc_next = &dc * &sc.f;
        let mut dz = Array1::zeros(4 * hdim);
        dz.slice_mut(s![0..hdim])
            .assign(&(&d_i * &sc.i.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![hdim..2 * hdim])
            .assign(&(&d_f * &sc.f.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![2 * hdim..3 * hdim])
            .assign(&(&d_g * &sc.g.mapv(|v| 1.0 - v * v)));
        dz.slice_mut(s![3 * hdim..4 * hdim])
            .assign(&(&d_o * &sc.o.mapv(|v| v * (1.0 - v))));
        let emb = enc.embedding.row(sc.token);
        let dz_row = dz.view().insert_axis(Axis(0));
        g.input_weight += &emb.insert_axis(Axis(1)).dot(&dz_row);
        g.recurrent_weight += &sc.h_prev.view().insert_axis(Axis(1)).dot(&dz_row);
        g.bias += &dz;
        let d_emb = enc.input_weight.dot(&dz);
        let mut row = g.embedding.row_mut(sc.token);
        row += &d_emb;
        dh_next = enc.recurrent_weight.dot(&dz);
    }
    g.start += &(&d_out.row(0) + &dh_next);
}
