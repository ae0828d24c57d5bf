use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::layers::{linear, linear_backward};
use super::params::Parameters;
use super::JointActivation;
use crate::error::{Error, Result};
use crate::numeric::log_softmax_in_place;

fn activate(act: JointActivation, x: f64) -> f64 {
    match act {
        JointActivation::Tanh => x.tanh(),
        JointActivation::Relu => x.max(0.0),
    }
}

/// Derivative expressed through the activation output.
fn activate_grad(act: JointActivation, y: f64) -> f64 {
    match act {
        JointActivation::Tanh => 1.0 - y * y,
        JointActivation::Relu => {
            if y > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Log-probabilities for one (acoustic, linguistic) embedding pair.
pub fn joint(
    params: &Parameters,
    acoustic: &Array1<f64>,
    linguistic: &Array1<f64>,
) -> Result<Vec<f64>> {
    let cfg = &params.config;
    if acoustic.len() != cfg.dense2_dim || linguistic.len() != cfg.label_encoder_dim {
        return Err(Error::shape(format!(
            "joint expects ({}, {}) embeddings, got ({}, {})",
            cfg.dense2_dim,
            cfg.label_encoder_dim,
            acoustic.len(),
            linguistic.len()
        )));
    }
    let a = acoustic.dot(&params.joint.audio.weight) + &params.joint.audio.bias;
    let l = linguistic.dot(&params.joint.label.weight) + &params.joint.label.bias;
    Ok(joint_from_projections(params, &a, &l))
}

/// Joint output given already-projected acoustic and label vectors.
pub(crate) fn joint_from_projections(
    params: &Parameters,
    audio_proj: &Array1<f64>,
    label_proj: &Array1<f64>,
) -> Vec<f64> {
    let act = params.config.joint_activation;
    let hidden = (audio_proj + label_proj).mapv(|x| activate(act, x));
    let mut z = hidden.dot(&params.joint.output.weight) + &params.joint.output.bias;
    let out = z.as_slice_mut().expect("contiguous");
    log_softmax_in_place(out);
    out.to_vec()
}

pub(crate) struct JointCache {
    frames: usize,
    positions: usize,
    hidden: Array2<f64>,
    log_probs: Array2<f64>,
}

/// Evaluates the joint on every (frame, prefix) pair. Rows of the result are
/// indexed `t * positions + u`.
pub(crate) fn joint_forward(
    params: &Parameters,
    acoustic: &ArrayView2<f64>,
    linguistic: &ArrayView2<f64>,
) -> (Array2<f64>, JointCache) {
    let act = params.config.joint_activation;
    let a = linear(acoustic, &params.joint.audio);
    let l = linear(linguistic, &params.joint.label);
    let (t, u1, j) = (a.nrows(), l.nrows(), a.ncols());
    let mut hidden = Array2::zeros((t * u1, j));
    for ti in 0..t {
        for ui in 0..u1 {
            let mut row = hidden.row_mut(ti * u1 + ui);
            for k in 0..j {
                row[k] = activate(act, a[[ti, k]] + l[[ui, k]]);
            }
        }
    }
    let mut log_probs = linear(&hidden.view(), &params.joint.output);
    for mut row in log_probs.rows_mut() {
        log_softmax_in_place(row.as_slice_mut().expect("contiguous"));
    }
    let cache = JointCache {
        frames: t,
        positions: u1,
        hidden,
        log_probs: log_probs.clone(),
    };
    (log_probs, cache)
}

/// Returns gradients w.r.t. the acoustic and linguistic embeddings.
pub(crate) fn joint_backward(
    d_log_probs: &ArrayView2<f64>,
    acoustic: &ArrayView2<f64>,
    linguistic: &ArrayView2<f64>,
    cache: &JointCache,
    params: &Parameters,
    grad: &mut Parameters,
) -> (Array2<f64>, Array2<f64>) {
    let act = params.config.joint_activation;
    let row_sums = d_log_probs.sum_axis(Axis(1));
    let mut dz = cache.log_probs.mapv(f64::exp);
    for ((mut row, &s), g) in dz
        .rows_mut()
        .into_iter()
        .zip(row_sums.iter())
        .zip(d_log_probs.rows())
    {
        for (p, &gv) in row.iter_mut().zip(g.iter()) {
            *p = gv - *p * s;
        }
    }
    let mut d_hidden = linear_backward(
        &cache.hidden.view(),
        &dz.view(),
        &params.joint.output,
        &mut grad.joint.output,
    );
    d_hidden.zip_mut_with(&cache.hidden, |d, &h| *d *= activate_grad(act, h));
    let (t, u1) = (cache.frames, cache.positions);
    let j = d_hidden.ncols();
    let mut da = Array2::zeros((t, j));
    let mut dl = Array2::zeros((u1, j));
    for ti in 0..t {
        for ui in 0..u1 {
            let row = d_hidden.row(ti * u1 + ui);
            let mut ra = da.row_mut(ti);
            ra += &row;
            let mut rl = dl.row_mut(ui);
            rl += &row;
        }
    }
    let d_acoustic = linear_backward(
        acoustic,
        &da.view(),
        &params.joint.audio,
        &mut grad.joint.audio,
    );
    let d_linguistic = linear_backward(
        linguistic,
        &dl.view(),
        &params.joint.label,
        &mut grad.joint.label,
    );
    (d_acoustic, d_linguistic)
}
