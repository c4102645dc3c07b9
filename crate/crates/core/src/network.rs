//! Tied-weight GSN layer stack: noisy odd/even encoder sweeps, a factorized
//! decoder head, unrolled training graphs and their exact backward pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::corruption::Corruptor;
use crate::numkit::{noisy_tanh_backward, noisy_tanh_forward, noisy_tanh_replay, NoiseTape, RngStream, Tensor2};
use crate::recon::{self, HeadKind, NllGrads, ReconParams, ScalingFactors};
use crate::{GsnError, Result};

/// Gaussian noise levels around one hidden layer's tanh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerNoise {
    pub sigma_in: f64,
    pub sigma_out: f64,
}

impl LayerNoise {
    pub const NONE: LayerNoise = LayerNoise { sigma_in: 0.0, sigma_out: 0.0 };

    pub fn symmetric(sigma: f64) -> Self {
        LayerNoise { sigma_in: sigma, sigma_out: sigma }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    /// `[visible, h1, ..., hD]`.
    pub layer_sizes: Vec<usize>,
    /// One entry per hidden layer.
    pub noise: Vec<LayerNoise>,
    pub head: HeadKind,
    /// Number of distinct scaling factors.
    pub alpha_steps: usize,
}

impl ModelSpec {
    /// Default noise: none on the first hidden layer, σ = 2 on the others.
    pub fn new(layer_sizes: Vec<usize>, head: HeadKind, alpha_steps: usize) -> Self {
        let hidden = layer_sizes.len().saturating_sub(1);
        let noise = (0..hidden)
            .map(|l| if l == 0 { LayerNoise::NONE } else { LayerNoise::symmetric(2.0) })
            .collect();
        ModelSpec { layer_sizes, noise, head, alpha_steps }
    }
}

/// Only the upward weights `W_l` (`size_{l-1} × size_l`) are stored; every
/// downward map uses their transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct GsnModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Tensor2>,
    /// `b_0` (visible) through `b_D`.
    pub biases: Vec<Vec<f64>>,
    pub noise: Vec<LayerNoise>,
    pub head: HeadKind,
    /// Per-visible log σ of the Gaussian head; empty for Bernoulli.
    pub log_sigma: Vec<f64>,
    pub alphas: ScalingFactors,
}

impl GsnModel {
    /// Uniform `±sqrt(6/(fan_in+fan_out))` weights, zero biases, α = 1, σ = 1.
    pub fn new(spec: &ModelSpec, rng: &mut RngStream) -> Result<Self> {
        let sizes = &spec.layer_sizes;
        if sizes.len() < 2 {
            return Err(GsnError::Domain(format!("need at least one hidden layer, got sizes {sizes:?}")));
        }
        let weights = sizes
            .windows(2)
            .map(|w| {
                let bound = libm::sqrt(6.0 / (w[0] + w[1]) as f64);
                Tensor2::from_fn(w[0], w[1], |_, _| bound * (2.0 * rng.uniform() - 1.0))
            })
            .collect();
        let model = GsnModel {
            layer_sizes: sizes.clone(),
            weights,
            biases: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            noise: spec.noise.clone(),
            head: spec.head,
            log_sigma: match spec.head {
                HeadKind::Bernoulli => Vec::new(),
                HeadKind::Gaussian => vec![0.0; sizes[0]],
            },
            alphas: ScalingFactors::ones(spec.alpha_steps)?,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(GsnError::Domain(format!("invalid layer sizes {sizes:?}")));
        }
        let depth = sizes.len() - 1;
        if self.weights.len() != depth || self.biases.len() != depth + 1 || self.noise.len() != depth {
            return Err(GsnError::Consistency(format!(
                "{} weights, {} biases, {} noise entries for {} hidden layers",
                self.weights.len(),
                self.biases.len(),
                self.noise.len(),
                depth
            )));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if w.shape() != (sizes[l], sizes[l + 1]) {
                return Err(GsnError::Shape { op: "weights", left: w.shape(), right: (sizes[l], sizes[l + 1]) });
            }
        }
        for (l, b) in self.biases.iter().enumerate() {
            if b.len() != sizes[l] {
                return Err(GsnError::Shape { op: "bias", left: (1, b.len()), right: (1, sizes[l]) });
            }
        }
        for n in &self.noise {
            for s in [n.sigma_in, n.sigma_out] {
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(GsnError::Param { name: "noise sigma", value: s });
                }
            }
        }
        let want_sigma = match self.head {
            HeadKind::Bernoulli => 0,
            HeadKind::Gaussian => sizes[0],
        };
        if self.log_sigma.len() != want_sigma {
            return Err(GsnError::Shape { op: "log_sigma", left: (1, self.log_sigma.len()), right: (1, want_sigma) });
        }
        Ok(())
    }

    pub fn visible_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Hidden state of all zeros.
    pub fn zero_hidden(&self) -> Vec<Vec<f64>> {
        self.layer_sizes[1..].iter().map(|n| vec![0.0; *n]).collect()
    }

    /// All parameters in a fixed order: weights, biases, log σ, log α.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for w in &mut self.weights {
            out.push(w.data_mut());
        }
        for b in &mut self.biases {
            out.push(b.as_mut_slice());
        }
        out.push(self.log_sigma.as_mut_slice());
        out.push(self.alphas.log_alpha_mut());
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for w in &self.weights {
            out.push(w.data());
        }
        for b in &self.biases {
            out.push(b.as_slice());
        }
        out.push(self.log_sigma.as_slice());
        out.push(self.alphas.log_alpha());
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}

/// The chain state `(X_t, H_t)`; `h[l]` is hidden layer `l + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub h: Vec<Vec<f64>>,
}

impl ChainState {
    pub fn new(model: &GsnModel, x: Vec<f64>) -> Self {
        ChainState { h: model.zero_hidden(), x }
    }

    pub fn check(&self, model: &GsnModel) -> Result<()> {
        if self.x.len() != model.visible_dim() {
            return Err(GsnError::Shape { op: "chain state x", left: (1, self.x.len()), right: (1, model.visible_dim()) });
        }
        check_hidden(model, &self.h)
    }
}

fn check_hidden(model: &GsnModel, h: &[Vec<f64>]) -> Result<()> {
    if h.len() != model.depth() {
        return Err(GsnError::Consistency(format!("{} hidden layers in state, model has {}", h.len(), model.depth())));
    }
    for (l, v) in h.iter().enumerate() {
        if v.len() != model.layer_sizes[l + 1] {
            return Err(GsnError::Shape { op: "chain state h", left: (1, v.len()), right: (1, model.layer_sizes[l + 1]) });
        }
    }
    Ok(())
}

/// Record of one hidden-layer update inside a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerUpdate {
    /// 1-based hidden layer index.
    pub layer: usize,
    /// Input from below (`x̃` for layer 1).
    pub below: Vec<f64>,
    /// Input from above, absent for the top layer.
    pub above: Option<Vec<f64>>,
    pub noise: NoiseTape,
}

fn sweep_order(depth: usize) -> impl Iterator<Item = usize> {
    (1..=depth).step_by(2).chain((2..=depth).step_by(2))
}

fn sweep(
    model: &GsnModel,
    h: &mut [Vec<f64>],
    x_corrupted: &[f64],
    mut activate: impl FnMut(usize, usize, &Tensor2) -> Result<(Tensor2, NoiseTape)>,
) -> Result<Vec<LayerUpdate>> {
    let depth = model.depth();
    let mut updates = Vec::with_capacity(depth);
    for (slot, l) in sweep_order(depth).enumerate() {
        let below: Vec<f64> = if l == 1 { x_corrupted.to_vec() } else { h[l - 2].clone() };
        let w = &model.weights[l - 1];
        let mut a = model.biases[l].clone();
        for (k, u) in below.iter().enumerate() {
            if *u != 0.0 {
                for (acc, wk) in a.iter_mut().zip(w.row(k)) {
                    *acc += u * wk;
                }
            }
        }
        let above = if l < depth {
            let v = h[l].clone();
            let wa = &model.weights[l];
            for (k, acc) in a.iter_mut().enumerate() {
                *acc += crate::numkit::dot(wa.row(k), &v);
            }
            Some(v)
        } else {
            None
        };
        let (out, tape) = activate(slot, l, &Tensor2::row_vector(a))?;
        h[l - 1] = out.into_data();
        updates.push(LayerUpdate { layer: l, below, above, noise: tape });
    }
    Ok(updates)
}

/// One odd-then-even sweep over the hidden layers with fresh noise.
pub fn encode_step(
    model: &GsnModel,
    state: &ChainState,
    x_corrupted: &[f64],
    rng: &mut RngStream,
) -> Result<(Vec<Vec<f64>>, Vec<LayerUpdate>)> {
    state.check(model)?;
    encode_hidden(model, &state.h, x_corrupted, rng)
}

fn encode_hidden(
    model: &GsnModel,
    h: &[Vec<f64>],
    x_corrupted: &[f64],
    rng: &mut RngStream,
) -> Result<(Vec<Vec<f64>>, Vec<LayerUpdate>)> {
    if x_corrupted.len() != model.visible_dim() {
        return Err(GsnError::Shape { op: "encode", left: (1, x_corrupted.len()), right: (1, model.visible_dim()) });
    }
    let mut h = h.to_vec();
    let tapes = sweep(model, &mut h, x_corrupted, |_, l, a| {
        let n = model.noise[l - 1];
        noisy_tanh_forward(a, n.sigma_in, n.sigma_out, rng)
    })?;
    Ok((h, tapes))
}

/// Re-runs a sweep with recorded noise; bit-identical to the original.
pub fn replay_sweep(
    model: &GsnModel,
    h: &[Vec<f64>],
    x_corrupted: &[f64],
    tapes: &[LayerUpdate],
) -> Result<Vec<Vec<f64>>> {
    check_hidden(model, h)?;
    if tapes.len() != model.depth() {
        return Err(GsnError::Consistency(format!("{} layer tapes for depth {}", tapes.len(), model.depth())));
    }
    let mut h = h.to_vec();
    sweep(model, &mut h, x_corrupted, |slot, l, a| {
        let tape = &tapes[slot];
        if tape.layer != l {
            return Err(GsnError::Consistency(format!("tape for layer {} replayed at layer {l}", tape.layer)));
        }
        Ok((noisy_tanh_replay(a, &tape.noise)?, tape.noise.clone()))
    })?;
    Ok(h)
}

/// Reconstruction parameters from `h1` through `W_1` plus the visible bias.
pub fn decode_step(model: &GsnModel, state: &ChainState) -> Result<ReconParams> {
    check_hidden(model, &state.h)?;
    Ok(decode_hidden(model, &state.h[0]))
}

fn decode_hidden(model: &GsnModel, h1: &[f64]) -> ReconParams {
    let w = &model.weights[0];
    let pre: Vec<f64> = (0..model.visible_dim())
        .map(|i| crate::numkit::dot(w.row(i), h1) + model.biases[0][i])
        .collect();
    match model.head {
        HeadKind::Bernoulli => ReconParams::Bernoulli { logits: pre },
        HeadKind::Gaussian => ReconParams::Gaussian { mu: pre, log_sigma: model.log_sigma.clone() },
    }
}

/// Gradients laid out like the model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
    pub log_sigma: Vec<f64>,
    pub log_alpha: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(model: &GsnModel) -> Self {
        GradientSet {
            weights: model.weights.iter().map(|w| Tensor2::zeros(w.rows(), w.cols())).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            log_sigma: vec![0.0; model.log_sigma.len()],
            log_alpha: vec![0.0; model.alphas.len()],
        }
    }

    /// Same order as [`GsnModel::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for w in &self.weights {
            out.push(w.data());
        }
        for b in &self.biases {
            out.push(b.as_slice());
        }
        out.push(self.log_sigma.as_slice());
        out.push(self.log_alpha.as_slice());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for w in &mut self.weights {
            out.push(w.data_mut());
        }
        for b in &mut self.biases {
            out.push(b.as_mut_slice());
        }
        out.push(self.log_sigma.as_mut_slice());
        out.push(self.log_alpha.as_mut_slice());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| *v == 0.0))
    }

    pub fn scale(&mut self, s: f64) {
        for sl in self.slices_mut() {
            for v in sl {
                *v *= s;
            }
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        let mut mine = self.slices_mut();
        let theirs = other.slices();
        if mine.len() != theirs.len() || mine.iter().zip(&theirs).any(|(a, b)| a.len() != b.len()) {
            return Err(GsnError::Consistency("gradient sets of different models".into()));
        }
        for (a, b) in mine.iter_mut().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// One corrupt → encode → decode step of an unrolled graph.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrollStep {
    pub x_tilde: Vec<f64>,
    pub sweep: Vec<LayerUpdate>,
    pub h1: Vec<f64>,
    /// Present when this step's reconstruction contributes to the loss.
    pub loss: Option<f64>,
    pub grads: Option<NllGrads>,
}

/// A recorded forward pass: everything needed to replay it with frozen
/// noise and to back-propagate through it.
#[derive(Clone, Debug, PartialEq)]
pub struct Unroll {
    pub target: Vec<f64>,
    pub h0: Vec<Vec<f64>>,
    pub steps: Vec<UnrollStep>,
    pub loss: f64,
    /// Hidden state after the first sweep.
    pub first_hidden: Vec<Vec<f64>>,
}

impl Unroll {
    pub fn loss_grads(&self) -> Vec<Option<NllGrads>> {
        self.steps.iter().map(|s| s.grads.clone()).collect()
    }

    pub fn scored_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.loss.is_some()).count()
    }
}

/// Unrolls `steps` corrupt/encode/decode/sample rounds starting from
/// `(x0, h0)`. Each reconstruction is scored against `x0` when
/// `collect_intermediate` is set; otherwise only the last one is.
pub fn unroll(
    model: &GsnModel,
    corruptor: &Corruptor,
    x0: &[f64],
    h0: &[Vec<f64>],
    steps: usize,
    collect_intermediate: bool,
    rng: &mut RngStream,
) -> Result<Unroll> {
    if steps == 0 {
        return Err(GsnError::Param { name: "steps", value: 0.0 });
    }
    if x0.len() != model.visible_dim() {
        return Err(GsnError::Shape { op: "unroll", left: (1, x0.len()), right: (1, model.visible_dim()) });
    }
    check_hidden(model, h0)?;
    let mut x = x0.to_vec();
    let mut h = h0.to_vec();
    let mut x_tilde = Vec::with_capacity(x.len());
    let mut out = Vec::with_capacity(steps);
    let mut total = 0.0;
    let mut first_hidden = Vec::new();
    for t in 0..steps {
        corruptor.corrupt_into(&x, &mut x_tilde, rng)?;
        let (next, sweep) = encode_hidden(model, &h, &x_tilde, rng)?;
        h = next;
        if t == 0 {
            first_hidden = h.clone();
        }
        let params = decode_hidden(model, &h[0]);
        let scored = collect_intermediate || t + 1 == steps;
        let (loss, grads) = if scored {
            let (l, g) = recon::nll(&params, t, &model.alphas, x0)?;
            total += l;
            (Some(l), Some(g))
        } else {
            (None, None)
        };
        if t + 1 < steps {
            x = recon::sample(&params, t, &model.alphas, rng)?;
        }
        out.push(UnrollStep { x_tilde: x_tilde.clone(), sweep, h1: h[0].clone(), loss, grads });
    }
    Ok(Unroll { target: x0.to_vec(), h0: h0.to_vec(), steps: out, loss: total, first_hidden })
}

/// Loss of a recorded unroll re-evaluated under (possibly perturbed) model
/// parameters, holding every corrupted input and noise draw fixed.
pub fn replay_loss(model: &GsnModel, record: &Unroll) -> Result<f64> {
    let mut h = record.h0.clone();
    let mut total = 0.0;
    for (t, step) in record.steps.iter().enumerate() {
        h = replay_sweep(model, &h, &step.x_tilde, &step.sweep)?;
        if step.loss.is_some() {
            let params = decode_hidden(model, &h[0]);
            total += recon::nll(&params, t, &model.alphas, &record.target)?.0;
        }
    }
    Ok(total)
}

/// Back-propagates `loss_grads` (one entry per step) through the recorded
/// graph, including the hidden noise paths. Sampled visibles are treated
/// as constants.
pub fn backward(model: &GsnModel, record: &Unroll, loss_grads: &[Option<NllGrads>]) -> Result<GradientSet> {
    if loss_grads.len() != record.steps.len() {
        return Err(GsnError::Consistency(format!(
            "{} loss gradients for {} unrolled steps",
            loss_grads.len(),
            record.steps.len()
        )));
    }
    check_hidden(model, &record.h0)?;
    let depth = model.depth();
    let d = model.visible_dim();
    let mut grads = GradientSet::zeros_like(model);
    // g[l - 1] accumulates dL/dh_l for the current value of hidden layer l
    let mut g: Vec<Vec<f64>> = model.zero_hidden();
    for (step, lg) in record.steps.iter().zip(loss_grads).rev() {
        if step.sweep.len() != depth || step.h1.len() != model.layer_sizes[1] {
            return Err(GsnError::Consistency("tape does not match model depth".into()));
        }
        if let Some(lg) = lg {
            if lg.params.len() != d {
                return Err(GsnError::Consistency(format!("loss gradient of length {} for {d} visibles", lg.params.len())));
            }
            let w1 = &model.weights[0];
            let gw1 = &mut grads.weights[0];
            for i in 0..d {
                let gi = lg.params[i];
                if gi == 0.0 {
                    continue;
                }
                grads.biases[0][i] += gi;
                for (gw, hv) in gw1.row_mut(i).iter_mut().zip(&step.h1) {
                    *gw += gi * hv;
                }
                for (gh, wv) in g[0].iter_mut().zip(w1.row(i)) {
                    *gh += gi * wv;
                }
            }
            if model.head == HeadKind::Gaussian {
                if lg.log_sigma.len() != d {
                    return Err(GsnError::Consistency("missing log_sigma gradient for gaussian head".into()));
                }
                for (a, b) in grads.log_sigma.iter_mut().zip(&lg.log_sigma) {
                    *a += b;
                }
            }
            if lg.alpha_index >= grads.log_alpha.len() {
                return Err(GsnError::Index { index: lg.alpha_index, dim: grads.log_alpha.len() });
            }
            grads.log_alpha[lg.alpha_index] += lg.log_alpha;
        }
        for upd in step.sweep.iter().rev() {
            let l = upd.layer;
            let grad_h = core::mem::replace(&mut g[l - 1], vec![0.0; model.layer_sizes[l]]);
            let grad_a = noisy_tanh_backward(&upd.noise, &Tensor2::row_vector(grad_h))?.into_data();
            for (b, ga) in grads.biases[l].iter_mut().zip(&grad_a) {
                *b += ga;
            }
            let w = &model.weights[l - 1];
            for (k, u) in upd.below.iter().enumerate() {
                if *u != 0.0 {
                    for (gw, ga) in grads.weights[l - 1].row_mut(k).iter_mut().zip(&grad_a) {
                        *gw += u * ga;
                    }
                }
                if l > 1 {
                    g[l - 2][k] += crate::numkit::dot(w.row(k), &grad_a);
                }
            }
            if let Some(v) = &upd.above {
                let wa = &model.weights[l];
                for (k, ga) in grad_a.iter().enumerate() {
                    if *ga == 0.0 {
                        continue;
                    }
                    for (gw, vc) in grads.weights[l].row_mut(k).iter_mut().zip(v) {
                        *gw += ga * vc;
                    }
                    for (gu, wv) in g[l].iter_mut().zip(wa.row(k)) {
                        *gu += ga * wv;
                    }
                }
            }
        }
    }
    Ok(grads)
}
