use ndarray::Array2;

use super::encoder::{check_features, encoder_backward, encoder_forward};
use super::joint::{joint_backward, joint_forward};
use super::label::{label_backward, label_forward};
use super::lattice::{LatticeGrad, LogitLattice};
use super::params::Parameters;
use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};

/// Dropout switch for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Inference,
    /// Dropout masks are drawn from a stream seeded with `dropout_seed`.
    Train {
        dropout_seed: u64,
    },
}

/// Value and parameter gradient of a scalar function of one lattice.
///
/// `loss` receives the lattice for `target` and must return the loss and its
/// gradient w.r.t. every lattice entry.
pub fn grad<F>(
    params: &Parameters,
    features: &FeatureSequence,
    target: &[u32],
    mode: ForwardMode,
    loss: F,
) -> Result<(f64, Parameters)>
where
    F: FnOnce(&LogitLattice) -> Result<(f64, LatticeGrad)>,
{
    grad_multi(params, features, &[target.to_vec()], mode, |lattices| {
        let (value, g) = loss(&lattices[0])?;
        Ok((value, vec![g]))
    })
}

/// Like [`grad`] for a loss over several targets sharing one audio encoding.
pub fn grad_multi<F>(
    params: &Parameters,
    features: &FeatureSequence,
    targets: &[Vec<u32>],
    mode: ForwardMode,
    loss: F,
) -> Result<(f64, Parameters)>
where
    F: FnOnce(&[LogitLattice]) -> Result<(f64, Vec<LatticeGrad>)>,
{
    check_features(params, features)?;
    let x = features.to_array();
    let (enc, enc_cache) = encoder_forward(params, &x.view(), mode);
    let mut labels = Vec::with_capacity(targets.len());
    let mut joints = Vec::with_capacity(targets.len());
    let mut lattices = Vec::with_capacity(targets.len());
    for target in targets {
        let (lab, lab_cache) = label_forward(params, target)?;
        let (lp, joint_cache) = joint_forward(params, &enc.view(), &lab.view());
        lattices.push(LogitLattice::from_matrix(enc.nrows(), lab.nrows(), lp));
        labels.push((lab, lab_cache));
        joints.push(joint_cache);
    }
    let (value, lattice_grads) = loss(&lattices)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    if lattice_grads.len() != lattices.len() {
        return Err(Error::shape("one lattice gradient per target is required"));
    }
    let mut grads = params.zeros_like();
    let mut d_enc = Array2::zeros(enc.dim());
    for (((g, lat), (lab, lab_cache)), jc) in lattice_grads
        .iter()
        .zip(&lattices)
        .zip(&labels)
        .zip(&joints)
    {
        if !g.same_shape(lat) {
            return Err(Error::shape(
                "lattice gradient shape differs from the lattice",
            ));
        }
        if g.data().iter().all(|&v| v == 0.0) {
            continue;
        }
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lattice gradient".into()));
        }
        let (da, dl) = joint_backward(
            &g.as_matrix(),
            &enc.view(),
            &lab.view(),
            jc,
            params,
            &mut grads,
        );
        label_backward(&dl, lab_cache, params, &mut grads);
        d_enc += &da;
    }
    encoder_backward(d_enc, &enc_cache, params, &mut grads);
    Ok((value, grads))
}
