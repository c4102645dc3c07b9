use alloc::vec::Vec;

use super::{RngStream, Tensor2};
use crate::{GsnError, Result};

/// Everything needed to replay and differentiate one noisy `tanh` pass.
///
/// `eta_in`/`eta_out` are empty when the matching standard deviation was
/// zero; an empty vector stands for all-zero noise.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTape {
    pub rows: usize,
    pub cols: usize,
    pub eta_in: Vec<f64>,
    pub eta_out: Vec<f64>,
    /// `tanh(η_in + a)`, kept for the backward pass.
    pub activation: Vec<f64>,
}

fn draw(n: usize, sigma: f64, rng: &mut RngStream) -> Vec<f64> {
    if sigma == 0.0 {
        Vec::new()
    } else {
        (0..n).map(|_| sigma * rng.normal()).collect()
    }
}

fn check_sigma(name: &'static str, sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(GsnError::Param { name, value: sigma })
    }
}

/// `h = η_out + tanh(η_in + a)` with i.i.d. zero-mean Gaussian noise.
pub fn noisy_tanh_forward(
    a: &Tensor2,
    sigma_in: f64,
    sigma_out: f64,
    rng: &mut RngStream,
) -> Result<(Tensor2, NoiseTape)> {
    check_sigma("sigma_in", sigma_in)?;
    check_sigma("sigma_out", sigma_out)?;
    let n = a.data().len();
    let eta_in = draw(n, sigma_in, rng);
    let eta_out = draw(n, sigma_out, rng);
    let mut tape = NoiseTape {
        rows: a.rows(),
        cols: a.cols(),
        eta_in,
        eta_out,
        activation: Vec::new(),
    };
    let h = apply(a, &mut tape);
    Ok((h, tape))
}

/// Recomputes the forward pass for `a` using the noise recorded in `tape`.
pub fn noisy_tanh_replay(a: &Tensor2, tape: &NoiseTape) -> Result<Tensor2> {
    if a.shape() != (tape.rows, tape.cols) {
        return Err(GsnError::Shape {
            op: "noisy_tanh_replay",
            left: a.shape(),
            right: (tape.rows, tape.cols),
        });
    }
    let mut t = tape.clone();
    Ok(apply(a, &mut t))
}

fn apply(a: &Tensor2, tape: &mut NoiseTape) -> Tensor2 {
    let pre = a.data();
    let act: Vec<f64> = if tape.eta_in.is_empty() {
        pre.iter().map(|v| libm::tanh(*v)).collect()
    } else {
        pre.iter().zip(&tape.eta_in).map(|(v, e)| libm::tanh(v + e)).collect()
    };
    let mut h = act.clone();
    if !tape.eta_out.is_empty() {
        for (v, e) in h.iter_mut().zip(&tape.eta_out) {
            *v += e;
        }
    }
    tape.activation = act;
    Tensor2::new(tape.rows, tape.cols, h).expect("tanh output is finite")
}

/// `∂L/∂a = ∂L/∂h ⊙ (1 − tanh²(η_in + a))`; the output noise carries no
/// gradient to `a`.
pub fn noisy_tanh_backward(tape: &NoiseTape, grad_h: &Tensor2) -> Result<Tensor2> {
    if grad_h.shape() != (tape.rows, tape.cols) {
        return Err(GsnError::Shape {
            op: "noisy_tanh_backward",
            left: (tape.rows, tape.cols),
            right: grad_h.shape(),
        });
    }
    let data = grad_h
        .data()
        .iter()
        .zip(&tape.activation)
        .map(|(g, t)| g * (1.0 - t * t))
        .collect();
    Tensor2::new(tape.rows, tape.cols, data)
}
