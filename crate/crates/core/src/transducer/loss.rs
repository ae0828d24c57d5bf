use crate::error::{Error, Result};
use crate::model::{LatticeGrad, LogitLattice};
use crate::numeric::log_sum_exp;

fn check(lattice: &LogitLattice, target: &[u32], blank: u32) -> Result<()> {
    if lattice.frames() == 0 {
        return Err(Error::shape("lattice has no frames"));
    }
    if lattice.positions() != target.len() + 1 {
        return Err(Error::shape(format!(
            "lattice has {} prefix positions for a target of length {}",
            lattice.positions(),
            target.len()
        )));
    }
    let v = lattice.vocab() as u32;
    if blank >= v {
        return Err(Error::shape("blank id outside the lattice vocabulary"));
    }
    if let Some(&bad) = target.iter().find(|&&y| y >= v || y == blank) {
        return Err(Error::invalid(format!("invalid target token {bad}")));
    }
    Ok(())
}

/// Forward variables; `alpha[t][u]` is the log-probability of reaching
/// (t, u) having emitted `target[..u]`.
fn forward(lattice: &LogitLattice, target: &[u32], blank: usize) -> Vec<Vec<f64>> {
    let (t_len, u_len) = (lattice.frames(), target.len());
    let mut alpha = vec![vec![f64::NEG_INFINITY; u_len + 1]; t_len];
    for t in 0..t_len {
        for u in 0..=u_len {
            alpha[t][u] = if t == 0 && u == 0 {
                0.0
            } else {
                let from_blank = if t > 0 {
                    alpha[t - 1][u] + lattice.get(t - 1, u, blank)
                } else {
                    f64::NEG_INFINITY
                };
                let from_label = if u > 0 {
                    alpha[t][u - 1] + lattice.get(t, u - 1, target[u - 1] as usize)
                } else {
                    f64::NEG_INFINITY
                };
                log_sum_exp(from_blank, from_label)
            };
        }
    }
    alpha
}

/// `beta[t][u]`: log-probability of finishing from (t, u).
fn backward(lattice: &LogitLattice, target: &[u32], blank: usize) -> Vec<Vec<f64>> {
    let (t_len, u_len) = (lattice.frames(), target.len());
    let mut beta = vec![vec![f64::NEG_INFINITY; u_len + 1]; t_len];
    for t in (0..t_len).rev() {
        for u in (0..=u_len).rev() {
            beta[t][u] = if t == t_len - 1 && u == u_len {
                lattice.get(t, u, blank)
            } else {
                let via_blank = if t + 1 < t_len {
                    beta[t + 1][u] + lattice.get(t, u, blank)
                } else {
                    f64::NEG_INFINITY
                };
                let via_label = if u < u_len {
                    beta[t][u + 1] + lattice.get(t, u, target[u] as usize)
                } else {
                    f64::NEG_INFINITY
                };
                log_sum_exp(via_blank, via_label)
            };
        }
    }
    beta
}

/// `-log P(target | x)`, summed over all monotone blank/label alignments.
pub fn rnnt_neg_log_prob(lattice: &LogitLattice, target: &[u32], blank: u32) -> Result<f64> {
    check(lattice, target, blank)?;
    let alpha = forward(lattice, target, blank as usize);
    let (t, u) = (lattice.frames() - 1, target.len());
    Ok(-(alpha[t][u] + lattice.get(t, u, blank as usize)))
}

/// Gradient of `-log P(target | x)` w.r.t. every lattice log-probability.
pub fn rnnt_grad(lattice: &LogitLattice, target: &[u32], blank: u32) -> Result<LatticeGrad> {
    Ok(rnnt_loss_and_grad(lattice, target, blank)?.1)
}

/// Loss and gradient from one forward-backward pass.
pub fn rnnt_loss_and_grad(
    lattice: &LogitLattice,
    target: &[u32],
    blank: u32,
) -> Result<(f64, LatticeGrad)> {
    check(lattice, target, blank)?;
    let b = blank as usize;
    let alpha = forward(lattice, target, b);
    let beta = backward(lattice, target, b);
    let log_p = beta[0][0];
    let (t_len, u_len) = (lattice.frames(), target.len());
    let mut grad = LogitLattice::zeros(t_len, u_len + 1, lattice.vocab());
    for t in 0..t_len {
        for u in 0..=u_len {
            let a = alpha[t][u];
            if a == f64::NEG_INFINITY {
                continue;
            }
            let blank_next = if t + 1 < t_len {
                beta[t + 1][u]
            } else if u == u_len {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            if blank_next > f64::NEG_INFINITY {
                *grad.get_mut(t, u, b) = -(a + lattice.get(t, u, b) + blank_next - log_p).exp();
            }
            if u < u_len {
                let y = target[u] as usize;
                *grad.get_mut(t, u, y) = -(a + lattice.get(t, u, y) + beta[t][u + 1] - log_p).exp();
            }
        }
    }
    Ok((-log_p, grad))
}
