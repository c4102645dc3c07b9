//! Factorized reconstruction heads with per-step scaling factors.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::numkit::{sigmoid, RngStream};
use crate::{GsnError, Result};

pub const SIGMA_FLOOR: f64 = 1e-3;
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Bernoulli,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReconParams {
    Bernoulli { logits: Vec<f64> },
    Gaussian { mu: Vec<f64>, log_sigma: Vec<f64> },
}

/// `α_k = exp(log_alpha[k])`; steps past the last entry reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFactors {
    log_alpha: Vec<f64>,
}

impl ScalingFactors {
    /// `k` factors, all equal to one.
    pub fn ones(k: usize) -> Result<Self> {
        Self::from_log(vec![0.0; k])
    }

    pub fn from_log(log_alpha: Vec<f64>) -> Result<Self> {
        if log_alpha.is_empty() {
            return Err(GsnError::Empty("scaling factors"));
        }
        if let Some(v) = log_alpha.iter().find(|v| !v.is_finite()) {
            return Err(GsnError::Param { name: "log_alpha", value: *v });
        }
        Ok(Self { log_alpha })
    }

    pub fn len(&self) -> usize {
        self.log_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_alpha.is_empty()
    }

    pub fn index(&self, step: usize) -> usize {
        step.min(self.log_alpha.len() - 1)
    }

    pub fn alpha(&self, step: usize) -> f64 {
        libm::exp(self.log_alpha[self.index(step)])
    }

    pub fn log_alpha(&self) -> &[f64] {
        &self.log_alpha
    }

    pub fn log_alpha_mut(&mut self) -> &mut [f64] {
        &mut self.log_alpha
    }
}

/// Gradients of [`nll`]. `params` is w.r.t. logits (Bernoulli) or μ
/// (Gaussian); `log_sigma` is empty for Bernoulli heads.
#[derive(Clone, Debug, PartialEq)]
pub struct NllGrads {
    pub params: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub log_alpha: f64,
    pub alpha_index: usize,
}

impl ReconParams {
    pub fn kind(&self) -> HeadKind {
        match self {
            ReconParams::Bernoulli { .. } => HeadKind::Bernoulli,
            ReconParams::Gaussian { .. } => HeadKind::Gaussian,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ReconParams::Bernoulli { logits } => logits.len(),
            ReconParams::Gaussian { mu, .. } => mu.len(),
        }
    }

    fn check(&self) -> Result<()> {
        let finite = match self {
            ReconParams::Bernoulli { logits } => logits.iter().all(|v| v.is_finite()),
            ReconParams::Gaussian { mu, log_sigma } => {
                if mu.len() != log_sigma.len() {
                    return Err(GsnError::Shape {
                        op: "gaussian head",
                        left: (1, mu.len()),
                        right: (1, log_sigma.len()),
                    });
                }
                mu.iter().chain(log_sigma).all(|v| v.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(GsnError::Domain(String::from("non-finite reconstruction parameters")))
        }
    }
}

fn clipped_prob(logit: f64, alpha: f64) -> (f64, bool) {
    let p = sigmoid(alpha * logit);
    if p < PROB_CLIP {
        (PROB_CLIP, true)
    } else if p > 1.0 - PROB_CLIP {
        (1.0 - PROB_CLIP, true)
    } else {
        (p, false)
    }
}

fn sigma_of(log_sigma: f64) -> (f64, bool) {
    let s = libm::exp(log_sigma);
    if s < SIGMA_FLOOR {
        (SIGMA_FLOOR, true)
    } else {
        (s, false)
    }
}

/// Negative log-likelihood of `target` under the head scaled by `α_step`,
/// with gradients for every parameter. A clipped probability or floored σ
/// has zero gradient.
pub fn nll(
    params: &ReconParams,
    step: usize,
    alphas: &ScalingFactors,
    target: &[f64],
) -> Result<(f64, NllGrads)> {
    params.check()?;
    if target.len() != params.dim() {
        return Err(GsnError::Shape {
            op: "nll",
            left: (1, params.dim()),
            right: (1, target.len()),
        });
    }
    let alpha = alphas.alpha(step);
    let alpha_index = alphas.index(step);
    match params {
        ReconParams::Bernoulli { logits } => {
            let mut loss = 0.0;
            let mut g = vec![0.0; logits.len()];
            let mut g_alpha = 0.0;
            for i in 0..logits.len() {
                let t = target[i];
                if t != 0.0 && t != 1.0 {
                    return Err(GsnError::Domain(format!(
                        "bernoulli target must be binary, got {t} at {i}"
                    )));
                }
                let (p, clipped) = clipped_prob(logits[i], alpha);
                loss -= if t == 1.0 { libm::log(p) } else { libm::log(1.0 - p) };
                if !clipped {
                    let r = p - t;
                    g[i] = alpha * r;
                    g_alpha += alpha * logits[i] * r;
                }
            }
            Ok((
                loss,
                NllGrads { params: g, log_sigma: Vec::new(), log_alpha: g_alpha, alpha_index },
            ))
        }
        ReconParams::Gaussian { mu, log_sigma } => {
            let mut loss = 0.0;
            let mut g_mu = vec![0.0; mu.len()];
            let mut g_ls = vec![0.0; mu.len()];
            let mut g_alpha = 0.0;
            let half_ln_tau = 0.5 * libm::log(TAU);
            let half_ln_alpha = 0.5 * libm::log(alpha);
            for i in 0..mu.len() {
                let (s, floored) = sigma_of(log_sigma[i]);
                let var = alpha * s * s;
                let diff = target[i] - mu[i];
                let z2 = diff * diff / var;
                loss += half_ln_tau + half_ln_alpha + libm::log(s) + 0.5 * z2;
                g_mu[i] = -diff / var;
                if !floored {
                    g_ls[i] = 1.0 - z2;
                }
                g_alpha += 0.5 - 0.5 * z2;
            }
            Ok((
                loss,
                NllGrads { params: g_mu, log_sigma: g_ls, log_alpha: g_alpha, alpha_index },
            ))
        }
    }
}

/// Draws each coordinate from its scaled factor.
pub fn sample(
    params: &ReconParams,
    step: usize,
    alphas: &ScalingFactors,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    params.check()?;
    let alpha = alphas.alpha(step);
    Ok(match params {
        ReconParams::Bernoulli { logits } => logits
            .iter()
            .map(|l| {
                let (p, _) = clipped_prob(*l, alpha);
                if rng.uniform() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
        ReconParams::Gaussian { mu, log_sigma } => mu
            .iter()
            .zip(log_sigma)
            .map(|(m, ls)| m + libm::sqrt(alpha) * sigma_of(*ls).0 * rng.normal())
            .collect(),
    })
}

/// Mean-field reconstruction: `p^k` or μ.
pub fn mean(params: &ReconParams, step: usize, alphas: &ScalingFactors) -> Vec<f64> {
    let alpha = alphas.alpha(step);
    match params {
        ReconParams::Bernoulli { logits } => logits.iter().map(|l| sigmoid(alpha * l)).collect(),
        ReconParams::Gaussian { mu, .. } => mu.clone(),
    }
}

/// Entropy (nats) of the scaled factorized distribution.
pub fn entropy(params: &ReconParams, step: usize, alphas: &ScalingFactors) -> f64 {
    let alpha = alphas.alpha(step);
    match params {
        ReconParams::Bernoulli { logits } => logits
            .iter()
            .map(|l| {
                let p = sigmoid(alpha * l);
                let mut h = 0.0;
                if p > 0.0 {
                    h -= p * libm::log(p);
                }
                if p < 1.0 {
                    h -= (1.0 - p) * libm::log(1.0 - p);
                }
                h
            })
            .sum(),
        ReconParams::Gaussian { log_sigma, .. } => log_sigma
            .iter()
            .map(|ls| {
                let s = sigma_of(*ls).0;
                0.5 * libm::log(TAU * core::f64::consts::E * alpha * s * s)
            })
            .sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    #[test]
    fn bernoulli_zero_logits() {
        let p = ReconParams::Bernoulli { logits: vec![0.0; 7] };
        let a = ScalingFactors::ones(1).unwrap();
        let (l, _) = nll(&p, 0, &a, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((l - 7.0 * LN_2).abs() < 1e-12);
        assert_eq!(mean(&p, 0, &a), vec![0.5; 7]);
    }

    #[test]
    fn gaussian_at_mean() {
        let p = ReconParams::Gaussian { mu: vec![0.3, -2.0, 5.0], log_sigma: vec![0.0; 3] };
        let a = ScalingFactors::ones(2).unwrap();
        let (l, _) = nll(&p, 1, &a, &[0.3, -2.0, 5.0]).unwrap();
        assert!((l - 1.5 * libm::log(TAU)).abs() < 1e-12);
    }

    #[test]
    fn non_binary_target_rejected() {
        let p = ReconParams::Bernoulli { logits: vec![0.0] };
        let a = ScalingFactors::ones(1).unwrap();
        assert!(matches!(nll(&p, 0, &a, &[0.5]), Err(GsnError::Domain(_))));
    }

    #[test]
    fn mean_values() {
        let p = ReconParams::Bernoulli { logits: vec![1.0] };
        let a = ScalingFactors::from_log(vec![libm::log(2.0)]).unwrap();
        assert!((mean(&p, 0, &a)[0] - 0.880_797_077_977_882_3).abs() < 1e-12);
        let g = ReconParams::Gaussian { mu: vec![1.5, -0.5], log_sigma: vec![0.2, 0.1] };
        let big = ScalingFactors::from_log(vec![3.0]).unwrap();
        assert_eq!(mean(&g, 0, &big), vec![1.5, -0.5]);
    }

    #[test]
    fn steps_past_k_reuse_last_alpha() {
        let a = ScalingFactors::from_log(vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(a.index(7), 2);
        assert_eq!(a.alpha(7), a.alpha(2));
    }

    #[test]
    fn saturated_logits_sample_ones() {
        let p = ReconParams::Bernoulli { logits: vec![30.0; 1000] };
        let a = ScalingFactors::ones(1).unwrap();
        let mut rng = RngStream::new(1);
        assert!(sample(&p, 0, &a, &mut rng).unwrap().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn floored_sigma_tail_bound() {
        let p = ReconParams::Gaussian { mu: vec![2.0], log_sigma: vec![-50.0] };
        let a = ScalingFactors::ones(1).unwrap();
        let mut rng = RngStream::new(2);
        for _ in 0..10_000 {
            let s = sample(&p, 0, &a, &mut rng).unwrap()[0];
            assert!((s - 2.0).abs() <= 5.0 * SIGMA_FLOOR);
        }
    }

    #[test]
    fn zero_logit_sample_mean() {
        let p = ReconParams::Bernoulli { logits: vec![0.0; 1_000_000] };
        let a = ScalingFactors::ones(1).unwrap();
        let mut rng = RngStream::new(3);
        let s = sample(&p, 0, &a, &mut rng).unwrap();
        let m = s.iter().sum::<f64>() / s.len() as f64;
        assert!((m - 0.5).abs() < 0.002, "{m}");
    }

    #[test]
    fn nll_is_normalized_over_binary_space() {
        let mut rng = RngStream::new(4);
        for d in 1..=4 {
            let logits: Vec<f64> = (0..d).map(|_| 3.0 * rng.normal()).collect();
            let p = ReconParams::Bernoulli { logits };
            let a = ScalingFactors::from_log(vec![0.4 * rng.normal()]).unwrap();
            let total: f64 = (0..1usize << d)
                .map(|s| {
                    let t: Vec<f64> = (0..d).map(|i| ((s >> i) & 1) as f64).collect();
                    libm::exp(-nll(&p, 0, &a, &t).unwrap().0)
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn clipping_keeps_nll_finite() {
        let p = ReconParams::Bernoulli { logits: vec![800.0, -800.0] };
        let a = ScalingFactors::ones(1).unwrap();
        let (l, g) = nll(&p, 0, &a, &[0.0, 1.0]).unwrap();
        assert!(l.is_finite());
        assert!((l + 2.0 * libm::log(PROB_CLIP)).abs() < 1e-9);
        assert_eq!(g.params, vec![0.0, 0.0]);
    }

    fn perturbed_loss(params: &ReconParams, a: &ScalingFactors, t: &[f64], which: usize, h: f64) -> f64 {
        // which enumerates params, then log_sigma, then log_alpha[0]
        let mut p = params.clone();
        let mut a = a.clone();
        match &mut p {
            ReconParams::Bernoulli { logits } => {
                if which < logits.len() {
                    logits[which] += h;
                } else {
                    a.log_alpha_mut()[0] += h;
                }
            }
            ReconParams::Gaussian { mu, log_sigma } => {
                let d = mu.len();
                if which < d {
                    mu[which] += h;
                } else if which < 2 * d {
                    log_sigma[which - d] += h;
                } else {
                    a.log_alpha_mut()[0] += h;
                }
            }
        }
        nll(&p, 0, &a, t).unwrap().0
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(5);
        let h = 1e-5;
        for trial in 0..100 {
            let d = 1 + rng.below(6);
            let a = ScalingFactors::from_log(vec![0.5 * rng.normal()]).unwrap();
            let (params, target): (ReconParams, Vec<f64>) = if trial % 2 == 0 {
                (
                    ReconParams::Bernoulli { logits: (0..d).map(|_| 2.0 * rng.normal()).collect() },
                    (0..d).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect(),
                )
            } else {
                (
                    ReconParams::Gaussian {
                        mu: (0..d).map(|_| rng.normal()).collect(),
                        log_sigma: (0..d).map(|_| 0.3 * rng.normal()).collect(),
                    },
                    (0..d).map(|_| rng.normal()).collect(),
                )
            };
            let (_, g) = nll(&params, 0, &a, &target).unwrap();
            let mut analytic = g.params.clone();
            analytic.extend_from_slice(&g.log_sigma);
            analytic.push(g.log_alpha);
            let numeric: Vec<f64> = (0..analytic.len())
                .map(|w| {
                    (perturbed_loss(&params, &a, &target, w, h)
                        - perturbed_loss(&params, &a, &target, w, -h))
                        / (2.0 * h)
                })
                .collect();
            let e = rel_err(&analytic, &numeric);
            assert!(e < 1e-5, "trial {trial}: {e}");
        }
    }

    #[test]
    fn bernoulli_entropy_decreases_with_alpha() {
        let p = ReconParams::Bernoulli { logits: vec![0.7, -1.3, 0.05] };
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let a = ScalingFactors::from_log(vec![-2.0 + 0.2 * k as f64]).unwrap();
            let h = entropy(&p, 0, &a);
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn gaussian_entropy_increases_with_alpha() {
        let p = ReconParams::Gaussian { mu: vec![0.0; 2], log_sigma: vec![0.1, -0.4] };
        let mut prev = f64::NEG_INFINITY;
        for k in 0..20 {
            let a = ScalingFactors::from_log(vec![-2.0 + 0.2 * k as f64]).unwrap();
            let h = entropy(&p, 0, &a);
            assert!(h > prev);
            prev = h;
        }
    }
}
