//! Sampling engine: unconditional and clamped GSN/DAE chains, tabular
//! chains and random-scan dependency-network Gibbs chains.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::corruption::Corruptor;
use crate::network::{decode_step, encode_step, ChainState, GsnModel};
use crate::numkit::{RngStream, Tensor2};
use crate::recon::{self, HeadKind};
use crate::tabular::{BinaryConditionals, TabularChain, VisibleCoding};
use crate::{GsnError, Result};

pub const DEFAULT_BURN_IN: usize = 1000;

/// Visible coordinates held fixed during sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct Clamp {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Clamp {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(GsnError::Shape { op: "clamp", left: (1, indices.len()), right: (1, values.len()) });
        }
        for (i, idx) in indices.iter().enumerate() {
            if indices[..i].contains(idx) {
                return Err(GsnError::Domain(format!("clamp index {idx} repeated")));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(GsnError::Domain(format!("non-finite clamp value {v}")));
        }
        Ok(Clamp { indices, values })
    }

    /// Clamps the right half of every row of a `width × height` image.
    pub fn right_half(width: usize, height: usize, image: &[f64]) -> Result<Self> {
        if image.len() != width * height {
            return Err(GsnError::Shape { op: "right_half", left: (height, width), right: (1, image.len()) });
        }
        let indices: Vec<usize> = (0..height).flat_map(|r| (width / 2..width).map(move |c| r * width + c)).collect();
        let values = indices.iter().map(|i| image[*i]).collect();
        Clamp::new(indices, values)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self.indices.iter().find(|i| **i >= dim) {
            Some(i) => Err(GsnError::Index { index: *i, dim }),
            None => Ok(()),
        }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (i, v) in self.indices.iter().zip(&self.values) {
            x[*i] = *v;
        }
    }

    pub fn is_clamped(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRun {
    pub burn_in: usize,
    pub n_samples: usize,
    pub thin: usize,
    pub clamp: Option<Clamp>,
    pub seed: u64,
    /// Starting visible vector; random when absent.
    pub init: Option<Vec<f64>>,
}

impl ChainRun {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        ChainRun { burn_in: DEFAULT_BURN_IN, n_samples, thin: 1, clamp: None, seed, init: None }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.thin == 0 {
            return Err(GsnError::Param { name: "thin", value: 0.0 });
        }
        if let Some(c) = &self.clamp {
            c.validate(dim)?;
        }
        if let Some(x) = &self.init {
            if x.len() != dim {
                return Err(GsnError::Shape { op: "chain init", left: (1, x.len()), right: (1, dim) });
            }
        }
        Ok(())
    }
}

/// Recorded visible samples and the mean-field reconstructions they were
/// drawn from, one row per kept step.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub samples: Tensor2,
    pub means: Tensor2,
}

/// A Markov chain over visible vectors with some internal state.
pub trait ChainModel {
    type State;

    fn visible_dim(&self) -> usize;
    fn random_visible(&self, rng: &mut RngStream) -> Vec<f64>;
    fn start(&self, x: Vec<f64>) -> Result<Self::State>;
    /// Advances one step. Returns the new visible sample and its
    /// mean-field reconstruction, both respecting `clamp`.
    fn step(&self, state: &mut Self::State, clamp: Option<&Clamp>, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// A network chain: corrupt, encode, decode, sample with `α_1`.
#[derive(Clone, Copy, Debug)]
pub struct GsnChain<'a> {
    pub model: &'a GsnModel,
    pub corruptor: &'a Corruptor,
}

impl ChainModel for GsnChain<'_> {
    type State = ChainState;

    fn visible_dim(&self) -> usize {
        self.model.visible_dim()
    }

    fn random_visible(&self, rng: &mut RngStream) -> Vec<f64> {
        let d = self.model.visible_dim();
        match self.model.head {
            HeadKind::Bernoulli => (0..d).map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 }).collect(),
            HeadKind::Gaussian => (0..d).map(|_| rng.normal()).collect(),
        }
    }

    fn start(&self, x: Vec<f64>) -> Result<ChainState> {
        let state = ChainState::new(self.model, x);
        state.check(self.model)?;
        Ok(state)
    }

    fn step(&self, state: &mut ChainState, clamp: Option<&Clamp>, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
        let x_tilde = self.corruptor.corrupt(&state.x, rng)?.values;
        let (h, _) = encode_step(self.model, state, &x_tilde, rng)?;
        state.h = h;
        let params = decode_step(self.model, state)?;
        let mut x = recon::sample(&params, 0, &self.model.alphas, rng)?;
        let mut mean = recon::mean(&params, 0, &self.model.alphas);
        if let Some(c) = clamp {
            c.apply(&mut x);
            c.apply(&mut mean);
        }
        state.x = x.clone();
        Ok((x, mean))
    }
}

impl TabularChain {
    fn allowed_states(&self, clamp: Option<&Clamp>) -> Result<Option<Vec<usize>>> {
        let Some(c) = clamp else { return Ok(None) };
        let allowed: Vec<usize> = (0..self.n_x())
            .filter(|s| {
                let v = self.coding.encode(*s);
                c.indices.iter().zip(&c.values).all(|(i, val)| v[*i] == *val)
            })
            .collect();
        if allowed.is_empty() {
            return Err(GsnError::Domain("clamp excludes every visible state".into()));
        }
        Ok(Some(allowed))
    }
}

impl ChainModel for TabularChain {
    type State = usize;

    fn visible_dim(&self) -> usize {
        self.coding.dim()
    }

    fn random_visible(&self, rng: &mut RngStream) -> Vec<f64> {
        self.coding.encode(rng.below(self.n_x()))
    }

    fn start(&self, x: Vec<f64>) -> Result<usize> {
        self.coding.decode(&x, self.n_x())
    }

    fn step(&self, state: &mut usize, clamp: Option<&Clamp>, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
        let allowed = self.allowed_states(clamp)?;
        let h = self.sample_hidden(*state, rng);
        *state = self.sample_visible(h, allowed.as_deref(), rng)?;
        let states: Vec<usize> = allowed.unwrap_or_else(|| (0..self.n_x()).collect());
        let w: Vec<f64> = states.iter().map(|x| self.g.get(*x, h)).collect();
        let z: f64 = w.iter().sum();
        let mut mean = vec![0.0; self.coding.dim()];
        for (s, p) in states.iter().zip(&w) {
            for (m, v) in mean.iter_mut().zip(self.coding.encode(*s)) {
                *m += p / z * v;
            }
        }
        Ok((self.coding.encode(*state), mean))
    }
}

/// Runs `burn_in + n_samples·thin` steps and keeps every `thin`-th visible
/// sample after burn-in.
pub fn run_chain<M: ChainModel>(model: &M, run: &ChainRun) -> Result<ChainOutput> {
    let dim = model.visible_dim();
    run.validate(dim)?;
    let mut rng = RngStream::new(run.seed);
    let mut x = match &run.init {
        Some(x) => x.clone(),
        None => model.random_visible(&mut rng),
    };
    let clamp = run.clamp.as_ref().filter(|c| !c.is_empty());
    if let Some(c) = clamp {
        c.apply(&mut x);
    }
    let mut state = model.start(x)?;
    let mut samples = Vec::with_capacity(run.n_samples * dim);
    let mut means = Vec::with_capacity(run.n_samples * dim);
    for _ in 0..run.burn_in {
        model.step(&mut state, clamp, &mut rng)?;
    }
    for _ in 0..run.n_samples {
        let mut kept = None;
        for _ in 0..run.thin {
            kept = Some(model.step(&mut state, clamp, &mut rng)?);
        }
        let (x, m) = kept.expect("thin >= 1");
        samples.extend_from_slice(&x);
        means.extend_from_slice(&m);
    }
    Ok(ChainOutput {
        samples: Tensor2::new(run.n_samples, dim, samples)?,
        means: Tensor2::new(run.n_samples, dim, means)?,
    })
}

/// [`run_chain`] that insists on a nonempty clamp.
pub fn run_clamped_chain<M: ChainModel>(model: &M, run: &ChainRun) -> Result<ChainOutput> {
    match &run.clamp {
        Some(c) if !c.is_empty() => run_chain(model, run),
        _ => Err(GsnError::Empty("clamp set")),
    }
}

/// Convenience wrapper for network chains.
pub fn run_gsn_chain(model: &GsnModel, corruptor: &Corruptor, run: &ChainRun) -> Result<ChainOutput> {
    run_chain(&GsnChain { model, corruptor }, run)
}

/// Per-variable conditional samplers of a dependency network.
pub trait Conditionals {
    fn n_vars(&self) -> usize;
    fn random_state(&self, rng: &mut RngStream) -> Vec<f64>;
    /// Samples `X_var` given the rest of `x`.
    fn sample_var(&self, var: usize, x: &[f64], rng: &mut RngStream) -> Result<f64>;
}

impl Conditionals for BinaryConditionals {
    fn n_vars(&self) -> usize {
        BinaryConditionals::n_vars(self)
    }

    fn random_state(&self, rng: &mut RngStream) -> Vec<f64> {
        (0..self.n_vars()).map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 }).collect()
    }

    fn sample_var(&self, var: usize, x: &[f64], rng: &mut RngStream) -> Result<f64> {
        let n = self.n_vars();
        let state = VisibleCoding::Bits(n).decode(x, 1 << n)?;
        Ok(if rng.uniform() < self.prob_one(var, state) { 1.0 } else { 0.0 })
    }
}

/// Random-scan Gibbs: each step picks one unclamped variable uniformly and
/// resamples it from its conditional.
pub fn run_depnet_chain(cond: &impl Conditionals, run: &ChainRun) -> Result<Tensor2> {
    let n = cond.n_vars();
    run.validate(n)?;
    let mut rng = RngStream::new(run.seed);
    let mut x = match &run.init {
        Some(x) => x.clone(),
        None => cond.random_state(&mut rng),
    };
    let clamp = run.clamp.as_ref();
    if let Some(c) = clamp {
        c.apply(&mut x);
    }
    let free: Vec<usize> = (0..n).filter(|i| !clamp.is_some_and(|c| c.is_clamped(*i))).collect();
    let step = |x: &mut Vec<f64>, rng: &mut RngStream| -> Result<()> {
        if free.is_empty() {
            return Ok(());
        }
        let s = free[rng.below(free.len())];
        x[s] = cond.sample_var(s, x, rng)?;
        Ok(())
    };
    for _ in 0..run.burn_in {
        step(&mut x, &mut rng)?;
    }
    let mut out = Vec::with_capacity(run.n_samples * n);
    for _ in 0..run.n_samples {
        for _ in 0..run.thin {
            step(&mut x, &mut rng)?;
        }
        out.extend_from_slice(&x);
    }
    Tensor2::new(run.n_samples, n, out)
}

/// Empirical distribution over state indices of rows coded by `coding`.
pub fn empirical_distribution(samples: &Tensor2, coding: VisibleCoding, n_states: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; n_states];
    for row in samples.iter_rows() {
        counts[coding.decode(row, n_states)?] += 1.0;
    }
    let n = samples.rows().max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    Ok(counts)
}
