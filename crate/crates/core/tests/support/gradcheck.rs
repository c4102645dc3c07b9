//! Finite-difference gradient checks shared by the gradient tests and the
//! acceptance suite. Each check returns the relative error of every
//! instance.

use gsn_core::corruption::Corruptor;
use gsn_core::network::{self, backward, replay_loss, unroll, ChainState, GsnModel, LayerNoise, ModelSpec};
use gsn_core::numkit::{affine, affine_backward, noisy_tanh_backward, noisy_tanh_forward, noisy_tanh_replay, RngStream, Tensor2};
use gsn_core::recon::{self, HeadKind};

pub const STEP: f64 = 1e-5;

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn central(mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(STEP) - f(-STEP)) / (2.0 * STEP)
}

fn random_tensor(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.normal())
}

pub fn noisy_tanh_errors(instances: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    let mut errs = Vec::with_capacity(instances);
    for _ in 0..instances {
        let (r, c) = (1 + rng.below(3), 1 + rng.below(5));
        let a = random_tensor(r, c, &mut rng);
        let (_, tape) = noisy_tanh_forward(&a, rng.uniform(), rng.uniform(), &mut rng).unwrap();
        let w = random_tensor(r, c, &mut rng);
        // loss = Σ w ⊙ h
        let analytic = noisy_tanh_backward(&tape, &w).unwrap();
        let numeric: Vec<f64> = (0..r * c)
            .map(|i| {
                central(|h| {
                    let mut ap = a.clone();
                    ap.data_mut()[i] += h;
                    let out = noisy_tanh_replay(&ap, &tape).unwrap();
                    out.data().iter().zip(w.data()).map(|(x, y)| x * y).sum()
                })
            })
            .collect();
        errs.push(rel_err(analytic.data(), &numeric));
    }
    errs
}

pub fn affine_errors(instances: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    let mut errs = Vec::with_capacity(instances);
    for _ in 0..instances {
        let (n, k, m) = (1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(4));
        let x = random_tensor(n, k, &mut rng);
        let w = random_tensor(k, m, &mut rng);
        let b: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let gout = random_tensor(n, m, &mut rng);
        let loss = |x: &Tensor2, w: &Tensor2, b: &[f64]| -> f64 {
            affine(x, w, b).unwrap().data().iter().zip(gout.data()).map(|(p, q)| p * q).sum()
        };
        let g = affine_backward(&x, &w, &gout).unwrap();
        let mut analytic = g.input.data().to_vec();
        analytic.extend_from_slice(g.weights.data());
        analytic.extend_from_slice(&g.bias);
        let mut numeric = Vec::new();
        for i in 0..n * k {
            numeric.push(central(|h| {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                loss(&xp, &w, &b)
            }));
        }
        for i in 0..k * m {
            numeric.push(central(|h| {
                let mut wp = w.clone();
                wp.data_mut()[i] += h;
                loss(&x, &wp, &b)
            }));
        }
        for i in 0..m {
            numeric.push(central(|h| {
                let mut bp = b.clone();
                bp[i] += h;
                loss(&x, &w, &bp)
            }));
        }
        errs.push(rel_err(&analytic, &numeric));
    }
    errs
}

fn random_model(sizes: &[usize], head: HeadKind, noise: LayerNoise, rng: &mut RngStream) -> GsnModel {
    let mut spec = ModelSpec::new(sizes.to_vec(), head, 2 * (sizes.len() - 1));
    spec.noise = vec![noise; sizes.len() - 1];
    let mut m = GsnModel::new(&spec, rng).unwrap();
    for block in m.param_slices_mut() {
        for v in block {
            *v += 0.2 * rng.normal();
        }
    }
    m
}

fn perturbed(model: &GsnModel, index: usize, h: f64) -> GsnModel {
    let mut m = model.clone();
    let mut seen = 0;
    for block in m.param_slices_mut() {
        if index < seen + block.len() {
            block[index - seen] += h;
            break;
        }
        seen += block.len();
    }
    m
}

fn data_vector(head: HeadKind, d: usize, rng: &mut RngStream) -> Vec<f64> {
    match head {
        HeadKind::Bernoulli => (0..d).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect(),
        HeadKind::Gaussian => (0..d).map(|_| rng.normal()).collect(),
    }
}

fn corruptor(head: HeadKind) -> Corruptor {
    match head {
        HeadKind::Bernoulli => Corruptor::SaltPepper { rate: 0.4 },
        HeadKind::Gaussian => Corruptor::AdditiveGaussian { sigma: 0.5 },
    }
}

/// Gradient of the reconstruction loss with respect to the decoder weights.
pub fn decoder_errors(instances: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    let mut errs = Vec::with_capacity(instances);
    for trial in 0..instances {
        let head = if trial % 2 == 0 { HeadKind::Bernoulli } else { HeadKind::Gaussian };
        let (d, n) = (2 + rng.below(5), 1 + rng.below(5));
        let model = random_model(&[d, n], head, LayerNoise::NONE, &mut rng);
        let h1: Vec<f64> = (0..n).map(|_| rng.uniform() * 2.0 - 1.0).collect();
        let target = data_vector(head, d, &mut rng);
        let loss = |m: &GsnModel| {
            let p = network::decode_step(m, &ChainState { x: vec![0.0; d], h: vec![h1.clone()] }).unwrap();
            recon::nll(&p, 0, &m.alphas, &target).unwrap()
        };
        let (_, g) = loss(&model);
        let mut analytic = vec![0.0; d * n];
        for i in 0..d {
            for j in 0..n {
                analytic[i * n + j] = g.params[i] * h1[j];
            }
        }
        let numeric: Vec<f64> = (0..d * n).map(|i| central(|h| loss(&perturbed(&model, i, h)).0)).collect();
        errs.push(rel_err(&analytic, &numeric));
    }
    errs
}

fn check_unroll(trial: usize, sizes: &[usize], head: HeadKind, steps: usize, collect: bool, rng: &mut RngStream) -> f64 {
    let model = random_model(sizes, head, LayerNoise { sigma_in: 0.3, sigma_out: 0.3 }, rng);
    let x0 = data_vector(head, sizes[0], rng);
    let h0: Vec<Vec<f64>> = if trial.is_multiple_of(3) {
        model.zero_hidden()
    } else {
        sizes[1..].iter().map(|n| (0..*n).map(|_| rng.uniform() - 0.5).collect()).collect()
    };
    let rec = unroll(&model, &corruptor(head), &x0, &h0, steps, collect, rng).unwrap();
    assert!((replay_loss(&model, &rec).unwrap() - rec.loss).abs() < 1e-10);
    let analytic = backward(&model, &rec, &rec.loss_grads()).unwrap().flatten();
    let numeric: Vec<f64> = (0..model.param_count())
        .map(|i| central(|h| replay_loss(&perturbed(&model, i, h), &rec).unwrap()))
        .collect();
    rel_err(&analytic, &numeric)
}

/// Full `2D`-step unrolls of 1 to 3 layer networks with both heads, noise
/// frozen on the recorded tapes.
pub fn unroll_errors(instances: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    let layouts: [&[usize]; 4] = [&[5, 4], &[5, 4, 3], &[4, 3, 3, 2], &[6, 5, 4]];
    (0..instances)
        .map(|trial| {
            let sizes = layouts[trial % layouts.len()];
            let head = if trial % 2 == 0 { HeadKind::Bernoulli } else { HeadKind::Gaussian };
            let steps = 2 * (sizes.len() - 1);
            check_unroll(trial, sizes, head, steps, true, &mut rng)
        })
        .collect()
}

/// Walkback rollouts scored on their last step only.
pub fn walkback_errors(instances: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    (0..instances)
        .map(|trial| {
            let steps = 1 + rng.below(4);
            check_unroll(trial, &[5, 4], HeadKind::Bernoulli, steps, false, &mut rng)
        })
        .collect()
}
