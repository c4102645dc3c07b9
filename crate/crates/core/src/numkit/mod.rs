//! Dense linear algebra, seeded random streams and the differentiable
//! building blocks (affine maps and noisy `tanh` units).

mod activation;
pub mod linalg;
mod rng;
mod tensor;

pub use activation::{noisy_tanh_backward, noisy_tanh_forward, noisy_tanh_replay, NoiseTape};
pub use rng::{draw_geometric, RngStream};
pub(crate) use tensor::dot;
pub use tensor::{affine, affine_backward, AffineGrads, Tensor2};

/// Logistic sigmoid, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `log(Σ exp(v_i))` with the maximum factored out. Returns `-inf` for an
/// empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}
