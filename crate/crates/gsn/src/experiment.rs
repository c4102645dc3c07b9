//! Train, sample, inpaint and evaluate: the steps behind every command,
//! usable directly from tests.

use gsn_core::chain::{run_gsn_chain, ChainOutput, ChainRun, Clamp};
use gsn_core::corruption::Corruptor;
use gsn_core::network::GsnModel;
use gsn_core::numkit::{RngStream, Tensor2};
use gsn_core::parzen::{crossval_scores, default_sigma_grid, ParzenModel};
use gsn_core::trainer::{EpochReport, Trainer};

use crate::config::{parse_corruption, ClampSpec, RunConfig};
use crate::error::{Error, Result};

/// Independent random streams for the phases of one run.
pub struct RunStreams {
    pub init: RngStream,
    pub train: RngStream,
    pub sample: RngStream,
    pub inpaint: RngStream,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let mut root = RngStream::new(seed);
        let mut s = root.fork(4).into_iter();
        let mut next = || s.next().expect("four streams");
        RunStreams { init: next(), train: next(), sample: next(), inpaint: next() }
    }
}

pub struct Trained {
    pub model: GsnModel,
    pub corruptor: Corruptor,
    pub reports: Vec<EpochReport>,
}

pub fn train(cfg: &RunConfig, data: &Tensor2, on_epoch: impl FnMut(&EpochReport)) -> Result<Trained> {
    let mut streams = RunStreams::new(cfg.seed);
    let corruptor = parse_corruption(&cfg.corruption)?;
    let mut model = GsnModel::new(&cfg.model_spec(data.cols())?, &mut streams.init)?;
    let mut trainer = Trainer::new(cfg.train_config()?, &model)?;
    let reports = trainer.fit(&mut model, &corruptor, data, &mut streams.train, on_epoch)?;
    Ok(Trained { model, corruptor, reports })
}

/// Runs `runs` on scoped threads and returns the outputs in input order.
pub fn run_parallel(
    model: &GsnModel,
    corruptor: &Corruptor,
    runs: &[ChainRun],
    threads: usize,
) -> Result<Vec<ChainOutput>> {
    let threads = threads.clamp(1, runs.len().max(1));
    let per = runs.len().div_ceil(threads).max(1);
    let results: Vec<Result<Vec<ChainOutput>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .chunks(per)
            .map(|chunk| {
                scope.spawn(move || {
                    chunk.iter().map(|r| Ok(run_gsn_chain(model, corruptor, r)?)).collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(runs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn stack(parts: impl Iterator<Item = Tensor2>, cols: usize, limit: usize) -> Result<Tensor2> {
    let mut data = Vec::with_capacity(limit * cols);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    data.truncate(limit * cols);
    Ok(Tensor2::new(data.len() / cols.max(1), cols, data)?)
}

/// Draws `cfg.samples` consecutive samples split across `cfg.chains`
/// independent chains. Each chain gets its own forked seed, so the result
/// does not depend on how many threads run them. With
/// `cfg.init_from_data` each chain starts at a random row of `data`.
pub fn generate(
    cfg: &RunConfig,
    model: &GsnModel,
    corruptor: &Corruptor,
    data: &Tensor2,
    rng: &mut RngStream,
) -> Result<ChainOutput> {
    if cfg.init_from_data && data.rows() == 0 {
        return Err(Error::Config("init_from_data needs training rows".into()));
    }
    let per_chain = cfg.samples.div_ceil(cfg.chains);
    let runs: Vec<ChainRun> = rng
        .fork(cfg.chains)
        .into_iter()
        .map(|mut s| ChainRun {
            burn_in: cfg.burn_in,
            thin: cfg.thin,
            init: cfg.init_from_data.then(|| data.row(s.below(data.rows())).to_vec()),
            ..ChainRun::new(per_chain, s.next_u64())
        })
        .collect();
    let outs = run_parallel(model, corruptor, &runs, cfg.chains)?;
    let d = model.visible_dim();
    Ok(ChainOutput {
        samples: stack(outs.iter().map(|o| o.samples.clone()), d, cfg.samples)?,
        means: stack(outs.iter().map(|o| o.means.clone()), d, cfg.samples)?,
    })
}

/// One clamped chain per image, started from the image itself with its
/// unclamped pixels randomized. Rows of the result are grouped by image.
pub fn inpaint(
    cfg: &RunConfig,
    model: &GsnModel,
    corruptor: &Corruptor,
    images: &Tensor2,
    image: (usize, usize),
    rng: &mut RngStream,
) -> Result<(ChainOutput, Vec<Clamp>)> {
    let spec = match &cfg.clamp {
        Some(c) => crate::config::parse_clamp(c)?,
        None => ClampSpec::RightHalf,
    };
    let mut runs = Vec::with_capacity(images.rows());
    let mut clamps = Vec::with_capacity(images.rows());
    for (row, mut s) in images.iter_rows().zip(rng.fork(images.rows())) {
        let clamp = spec.clamp_for(row, image.0, image.1)?;
        let init: Vec<f64> = (0..row.len())
            .map(|i| if clamp.is_clamped(i) { row[i] } else if s.uniform() < 0.5 { 1.0 } else { 0.0 })
            .collect();
        runs.push(ChainRun {
            burn_in: cfg.burn_in,
            thin: cfg.thin,
            clamp: Some(clamp.clone()),
            init: Some(init),
            ..ChainRun::new(cfg.samples, s.next_u64())
        });
        clamps.push(clamp);
    }
    let outs = run_parallel(model, corruptor, &runs, cfg.chains)?;
    let d = model.visible_dim();
    let total = cfg.samples * images.rows();
    Ok((
        ChainOutput {
            samples: stack(outs.iter().map(|o| o.samples.clone()), d, total)?,
            means: stack(outs.iter().map(|o| o.means.clone()), d, total)?,
        },
        clamps,
    ))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ParzenReport {
    pub sigma: f64,
    pub mean: f64,
    pub std_err: f64,
    pub grid: Vec<f64>,
    pub validation_scores: Vec<f64>,
}

/// Picks σ on `valid` and reports the test log-likelihood under a Parzen
/// estimator centered on `centers`.
pub fn parzen_eval(centers: &Tensor2, valid: &Tensor2, test: &Tensor2, grid: Option<&[f64]>) -> Result<ParzenReport> {
    if valid.rows() == 0 || test.rows() == 0 {
        return Err(Error::Config("Parzen evaluation needs nonempty validation and test splits".into()));
    }
    let grid = grid.map(<[f64]>::to_vec).unwrap_or_else(default_sigma_grid);
    let (sigma, validation_scores) = crossval_scores(centers, valid, &grid)?;
    let ll = ParzenModel::new(centers.clone(), sigma)?.loglik(test)?;
    Ok(ParzenReport { sigma, mean: ll.mean, std_err: ll.std_err, grid, validation_scores })
}
