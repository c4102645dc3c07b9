//! Walkback rollouts, unrolled GSN training and SGD with momentum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::corruption::Corruptor;
use crate::network::{backward, encode_step, unroll, ChainState, GradientSet, GsnModel};
use crate::numkit::{draw_geometric, RngStream, Tensor2};
use crate::recon;
use crate::{GsnError, Result};

/// Longest rollout drawn under [`Walkback::Geometric`].
pub const MAX_WALKBACK: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Walkback {
    /// Plain denoising: one corruption per example.
    None,
    /// `k ~ Geometric(p)` on `{1, 2, ...}`, truncated at [`MAX_WALKBACK`].
    Geometric(f64),
    Fixed(usize),
}

impl Walkback {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Walkback::Geometric(p) if !(p > 0.0 && p <= 1.0) => Err(GsnError::Param { name: "walkback p", value: p }),
            Walkback::Fixed(0) => Err(GsnError::Param { name: "walkback k", value: 0.0 }),
            _ => Ok(()),
        }
    }

    pub fn draw(&self, rng: &mut RngStream) -> Result<usize> {
        match *self {
            Walkback::None => Ok(1),
            Walkback::Geometric(p) => Ok(draw_geometric(p, rng)?.min(MAX_WALKBACK)),
            Walkback::Fixed(k) => Ok(k),
        }
    }

    /// Longest possible rollout; also the natural number of scaling factors.
    pub fn max_depth(&self) -> usize {
        match *self {
            Walkback::None => 1,
            Walkback::Geometric(_) => MAX_WALKBACK,
            Walkback::Fixed(k) => k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum H0Policy {
    Zero,
    /// Reuse each example's `H_1` from its previous visit as `H_0`.
    Persist,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    pub minibatch: usize,
    pub walkback: Walkback,
    pub collect_intermediate: bool,
    pub h0_policy: H0Policy,
    /// When false the scaling factors stay at their current values.
    pub learn_alpha: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 0.25,
            momentum: 0.5,
            lr_decay: 0.99,
            minibatch: 1,
            walkback: Walkback::Geometric(0.5),
            collect_intermediate: true,
            h0_policy: H0Policy::Zero,
            learn_alpha: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(GsnError::Param { name: "lr", value: self.lr });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(GsnError::Param { name: "momentum", value: self.momentum });
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(GsnError::Param { name: "lr_decay", value: self.lr_decay });
        }
        if self.minibatch == 0 {
            return Err(GsnError::Param { name: "minibatch", value: 0.0 });
        }
        self.walkback.validate()
    }
}

/// Anything that can play the corrupt/reconstruct game of a denoising chain.
pub trait Denoiser {
    fn corrupt_sample(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>>;
    /// Samples a reconstruction of `x_tilde` as the `step`-th walkback step.
    fn reconstruct_sample(&self, x_tilde: &[f64], step: usize, rng: &mut RngStream) -> Result<Vec<f64>>;
}

/// A network paired with its corruption process, reconstructing from a
/// zero hidden state.
#[derive(Clone, Copy, Debug)]
pub struct DaePair<'a> {
    pub model: &'a GsnModel,
    pub corruptor: &'a Corruptor,
}

impl Denoiser for DaePair<'_> {
    fn corrupt_sample(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        Ok(self.corruptor.corrupt(x, rng)?.values)
    }

    fn reconstruct_sample(&self, x_tilde: &[f64], step: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        let state = ChainState::new(self.model, x_tilde.to_vec());
        let (h, _) = encode_step(self.model, &state, x_tilde, rng)?;
        let params = crate::network::decode_step(self.model, &ChainState { x: state.x, h })?;
        recon::sample(&params, step, &self.model.alphas, rng)
    }
}

/// Runs `k` corrupt → reconstruct rounds from `x0` and returns the
/// `(target, corrupted)` training pairs: all of them when
/// `collect_intermediate`, otherwise only the last.
pub fn walkback_rollout(
    denoiser: &impl Denoiser,
    x0: &[f64],
    k: usize,
    collect_intermediate: bool,
    rng: &mut RngStream,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if k == 0 {
        return Err(GsnError::Param { name: "k", value: 0.0 });
    }
    let mut pairs = Vec::with_capacity(if collect_intermediate { k } else { 1 });
    let mut x = x0.to_vec();
    for j in 0..k {
        let x_tilde = denoiser.corrupt_sample(&x, rng)?;
        if j + 1 < k {
            x = denoiser.reconstruct_sample(&x_tilde, j, rng)?;
        }
        if collect_intermediate || j + 1 == k {
            pairs.push((x0.to_vec(), x_tilde));
        }
    }
    Ok(pairs)
}

/// `v ← momentum·v − lr·g`, then `θ ← θ + v`.
pub fn sgd_update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(GsnError::Shape {
            op: "sgd_update",
            left: (1, params.len()),
            right: (grads.len(), velocity.len()),
        });
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean NLL per scored reconstruction.
    pub mean_nll: f64,
    pub lr_used: f64,
}

/// Optimizer state carried across epochs.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    lr: f64,
    epoch: usize,
    velocity: GradientSet,
    h0_table: Vec<Option<Vec<Vec<f64>>>>,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: &GsnModel) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        Ok(Trainer {
            lr: config.lr,
            config,
            epoch: 0,
            velocity: GradientSet::zeros_like(model),
            h0_table: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Learning rate the next epoch will use.
    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// One shuffled pass over the rows of `data`.
    pub fn train_epoch(
        &mut self,
        model: &mut GsnModel,
        corruptor: &Corruptor,
        data: &Tensor2,
        rng: &mut RngStream,
    ) -> Result<EpochReport> {
        if data.rows() == 0 {
            return Err(GsnError::Empty("training data"));
        }
        if data.cols() != model.visible_dim() {
            return Err(GsnError::Shape { op: "train_epoch", left: data.shape(), right: (data.rows(), model.visible_dim()) });
        }
        if self.h0_table.len() != data.rows() {
            self.h0_table = vec![None; data.rows()];
        }
        let mut order: Vec<usize> = (0..data.rows()).collect();
        rng.shuffle(&mut order);
        let lr = self.lr;
        let mut total = 0.0;
        let mut scored = 0usize;
        let mut batch = GradientSet::zeros_like(model);
        let mut in_batch = 0usize;
        let zero_h = model.zero_hidden();
        for (pos, &idx) in order.iter().enumerate() {
            let x0 = data.row(idx);
            let k = self.config.walkback.draw(rng)?;
            let h0 = match (&self.config.h0_policy, &self.h0_table[idx]) {
                (H0Policy::Persist, Some(h)) => h,
                _ => &zero_h,
            };
            let rec = unroll(model, corruptor, x0, h0, k, self.config.collect_intermediate, rng)?;
            if !rec.loss.is_finite() {
                return Err(GsnError::NonFinite { example: idx, lr });
            }
            total += rec.loss;
            scored += rec.scored_steps();
            let g = backward(model, &rec, &rec.loss_grads())?;
            batch.add_assign(&g)?;
            in_batch += 1;
            if self.config.h0_policy == H0Policy::Persist {
                self.h0_table[idx] = Some(rec.first_hidden);
            }
            if in_batch == self.config.minibatch || pos + 1 == order.len() {
                self.apply(model, &mut batch, in_batch, lr, idx)?;
                in_batch = 0;
            }
        }
        self.lr *= self.config.lr_decay;
        self.epoch += 1;
        Ok(EpochReport { epoch: self.epoch, mean_nll: total / scored as f64, lr_used: lr })
    }

    fn apply(&mut self, model: &mut GsnModel, batch: &mut GradientSet, count: usize, lr: f64, example: usize) -> Result<()> {
        if !self.config.learn_alpha {
            batch.log_alpha.iter_mut().for_each(|v| *v = 0.0);
        }
        batch.scale(1.0 / count as f64);
        if batch.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(GsnError::NonFinite { example, lr });
        }
        let momentum = self.config.momentum;
        let grads = batch.slices();
        let mut vel = self.velocity.slices_mut();
        let mut params = model.param_slices_mut();
        if params.len() != grads.len() {
            return Err(GsnError::Consistency(format!("{} parameter blocks, {} gradient blocks", params.len(), grads.len())));
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(vel.iter_mut()) {
            sgd_update(p, g, v, lr, momentum)?;
        }
        drop(params);
        drop(vel);
        batch.scale(0.0);
        Ok(())
    }

    /// Runs `config.epochs` epochs, reporting each one to `on_epoch`.
    pub fn fit(
        &mut self,
        model: &mut GsnModel,
        corruptor: &Corruptor,
        data: &Tensor2,
        rng: &mut RngStream,
        mut on_epoch: impl FnMut(&EpochReport),
    ) -> Result<Vec<EpochReport>> {
        let mut reports = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let r = self.train_epoch(model, corruptor, data, rng)?;
            on_epoch(&r);
            reports.push(r);
        }
        Ok(reports)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ModelSpec;
    use crate::recon::HeadKind;

    #[test]
    fn sgd_plain_and_momentum() {
        let mut p = vec![1.0, 2.0];
        let mut v = vec![0.0, 0.0];
        sgd_update(&mut p, &[0.5, -1.0], &mut v, 0.1, 0.0).unwrap();
        assert_eq!(p, vec![0.95, 2.1]);

        let mut p = vec![0.0];
        let mut v = vec![0.0];
        sgd_update(&mut p, &[2.0], &mut v, 1.0, 0.5).unwrap();
        sgd_update(&mut p, &[2.0], &mut v, 1.0, 0.5).unwrap();
        assert_eq!(p, vec![-2.5 * 2.0]);

        let mut v = vec![8.0];
        let mut p = vec![0.0];
        for i in 1..=5 {
            sgd_update(&mut p, &[0.0], &mut v, 1.0, 0.5).unwrap();
            assert_eq!(v[0], 8.0 * libm::pow(0.5, i as f64));
        }
        assert!(sgd_update(&mut p, &[0.0, 1.0], &mut v, 1.0, 0.5).is_err());
    }

    #[test]
    fn rollout_counts() {
        let mut rng = RngStream::new(1);
        let spec = ModelSpec::new(vec![4, 3], HeadKind::Bernoulli, 3);
        let model = GsnModel::new(&spec, &mut rng).unwrap();
        let c = Corruptor::SaltPepper { rate: 0.5 };
        let pair = DaePair { model: &model, corruptor: &c };
        let x0 = vec![1.0, 0.0, 1.0, 0.0];
        let one = walkback_rollout(&pair, &x0, 1, false, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        let three = walkback_rollout(&pair, &x0, 3, true, &mut rng).unwrap();
        assert_eq!(three.len(), 3);
        assert!(three.iter().all(|(t, _)| *t == x0));
        assert_eq!(walkback_rollout(&pair, &x0, 3, false, &mut rng).unwrap().len(), 1);
    }

    #[test]
    fn k1_rollout_is_plain_corruption() {
        let mut rng = RngStream::new(2);
        let model = GsnModel::new(&ModelSpec::new(vec![6, 3], HeadKind::Bernoulli, 1), &mut rng).unwrap();
        let c = Corruptor::SaltPepper { rate: 0.5 };
        let x0 = vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let pairs = walkback_rollout(&DaePair { model: &model, corruptor: &c }, &x0, 1, true, &mut RngStream::new(9)).unwrap();
        assert_eq!(pairs[0].1, c.corrupt(&x0, &mut RngStream::new(9)).unwrap().values);
    }

    fn tiny_data() -> Tensor2 {
        Tensor2::from_rows(&[vec![1.0, 0.0, 1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, 1.0]]).unwrap()
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut rng = RngStream::new(3);
        let mut model = GsnModel::new(&ModelSpec::new(vec![5, 4], HeadKind::Bernoulli, 20), &mut rng).unwrap();
        let before = model.clone();
        let cfg = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        let mut t = Trainer::new(cfg, &model).unwrap();
        let r = t.train_epoch(&mut model, &Corruptor::SaltPepper { rate: 0.4 }, &tiny_data(), &mut rng).unwrap();
        assert_eq!(model, before);
        assert!(r.mean_nll.is_finite() && r.mean_nll > 0.0);
        assert_eq!(r.lr_used, 0.0);
    }

    #[test]
    fn lr_decays_per_epoch() {
        let mut rng = RngStream::new(4);
        let mut model = GsnModel::new(&ModelSpec::new(vec![5, 4], HeadKind::Bernoulli, 1), &mut rng).unwrap();
        let cfg = TrainConfig { lr: 0.2, lr_decay: 0.5, epochs: 3, walkback: Walkback::None, ..TrainConfig::default() };
        let mut t = Trainer::new(cfg, &model).unwrap();
        let reps = t.fit(&mut model, &Corruptor::SaltPepper { rate: 0.1 }, &tiny_data(), &mut rng, |_| {}).unwrap();
        let lrs: Vec<f64> = reps.iter().map(|r| r.lr_used).collect();
        assert_eq!(lrs, vec![0.2, 0.1, 0.05]);
    }

    #[test]
    fn single_example_is_memorized() {
        let mut rng = RngStream::new(5);
        let d = 8;
        let mut model = GsnModel::new(&ModelSpec::new(vec![d, 6], HeadKind::Bernoulli, 1), &mut rng).unwrap();
        let data = Tensor2::from_rows(&[vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]]).unwrap();
        let cfg = TrainConfig { lr: 0.25, lr_decay: 1.0, walkback: Walkback::Fixed(1), epochs: 500, ..TrainConfig::default() };
        let mut t = Trainer::new(cfg, &model).unwrap();
        let reps = t.fit(&mut model, &Corruptor::SaltPepper { rate: 0.0 }, &data, &mut rng, |_| {}).unwrap();
        let last = reps.last().unwrap().mean_nll;
        assert!(last < 0.01 * d as f64, "{last}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig { lr_decay: 0.0, ..TrainConfig::default() },
            TrainConfig { walkback: Walkback::Fixed(0), ..TrainConfig::default() },
            TrainConfig { walkback: Walkback::Geometric(0.0), ..TrainConfig::default() },
            TrainConfig { minibatch: 0, ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn nan_loss_aborts_with_diagnostics() {
        let mut rng = RngStream::new(6);
        let mut model = GsnModel::new(&ModelSpec::new(vec![2, 2], HeadKind::Gaussian, 1), &mut rng).unwrap();
        model.weights[0].set(0, 0, 1e300);
        let data = Tensor2::from_rows(&[vec![1e10, 1.0]]).unwrap();
        let cfg = TrainConfig { walkback: Walkback::None, ..TrainConfig::default() };
        let mut t = Trainer::new(cfg, &model).unwrap();
        let r = t.train_epoch(&mut model, &Corruptor::AdditiveGaussian { sigma: 0.1 }, &data, &mut rng);
        assert!(matches!(r, Err(GsnError::NonFinite { example: 0, .. }) | Err(GsnError::Domain(_))), "{r:?}");
    }
}
