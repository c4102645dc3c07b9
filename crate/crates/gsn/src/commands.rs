//! Command implementations. Each one reads a [`RunConfig`], writes its
//! artifacts into `output_dir` and records them in a manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use gsn_core::numkit::Tensor2;
use gsn_core::recon::HeadKind;
use gsn_core::verify::run_suite;

use crate::artifacts::{metrics_csv, Manifest};
use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::dataset::{load_splits, synthesize, take_rows};
use crate::error::{Error, Result};
use crate::experiment::{generate, inpaint, parzen_eval, train, RunStreams};
use crate::matfile::{write_matrix, Stamp};
use crate::pgm::{encode_pgm, DEFAULT_TILES_PER_ROW};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Sample,
    Inpaint,
    Eval,
    Verify,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Sample => "sample",
            Command::Inpaint => "inpaint",
            Command::Eval => "eval",
            Command::Verify => "verify",
            Command::Synth => "synth",
        }
    }
}

/// Command-line values that replace the config file's.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub walkback: Option<String>,
    pub clamp: Option<String>,
    pub samples: Option<usize>,
    pub burn_in: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = &self.walkback {
            cfg.walkback = v.clone();
        }
        if let Some(v) = &self.clamp {
            cfg.clamp = Some(v.clone());
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
    }
}

struct Output<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Output<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(Error::io(path))?;
        self.manifest.artifacts.push(name.to_string());
        Ok(())
    }

    fn matrix(&mut self, name: &str, m: &Tensor2, stamp: &Stamp) -> Result<()> {
        write_matrix(&self.dir.join(name), m, stamp)?;
        self.manifest.artifacts.push(name.to_string());
        Ok(())
    }
}

fn checkpoint_path(cfg: &RunConfig, given: Option<&Path>) -> PathBuf {
    given.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("model.ckpt"))
}

/// Only Bernoulli means lie in [0, 1] and render as images.
fn renderable(ck: &Checkpoint, image: Option<(usize, usize)>) -> Option<(usize, usize)> {
    image.filter(|_| ck.model.head == HeadKind::Bernoulli)
}

/// Runs `cmd` and returns its manifest. Progress goes to `log`.
pub fn run(cmd: Command, cfg: &RunConfig, checkpoint: Option<&Path>, log: &mut dyn Write) -> Result<Manifest> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let stamp = Stamp { seed: cfg.seed, config_hash: cfg.hash() };
    let manifest = Manifest { command: cmd.name().into(), seed: cfg.seed, config_hash: cfg.hash_hex(), artifacts: Vec::new() };
    let mut out = Output { dir, manifest };
    let say = |log: &mut dyn Write, msg: String| writeln!(log, "{msg}").map_err(Error::io("<log>"));
    match cmd {
        Command::Train => {
            let splits = load_splits(cfg)?;
            say(log, format!("training on {} x {}", splits.train.rows(), splits.train.cols()))?;
            let trained = train(cfg, &splits.train, |r| {
                // progress output is best effort
                let _ = writeln!(log, "epoch {:>3}  nll {:.4}  lr {:.5}", r.epoch, r.mean_nll, r.lr_used);
            })?;
            let ck = Checkpoint { stamp, model: trained.model, corruptor: trained.corruptor };
            save_checkpoint(&dir.join("model.ckpt"), &ck)?;
            out.manifest.artifacts.push("model.ckpt".into());
            out.write("metrics.csv", metrics_csv(&trained.reports).as_bytes())?;
        }
        Command::Sample => {
            let ck = load_checkpoint(&checkpoint_path(cfg, checkpoint))?;
            let splits = load_splits(cfg)?;
            let mut streams = RunStreams::new(cfg.seed);
            let chain = generate(cfg, &ck.model, &ck.corruptor, &splits.train, &mut streams.sample)?;
            say(log, format!("drew {} samples from {} chain(s)", chain.samples.rows(), cfg.chains))?;
            out.matrix("samples.mat", &chain.samples, &stamp)?;
            out.matrix("means.mat", &chain.means, &stamp)?;
            if let Some((w, h)) = renderable(&ck, splits.image) {
                out.write("samples.pgm", &encode_pgm(&chain.means, w, h, DEFAULT_TILES_PER_ROW)?)?;
            }
        }
        Command::Inpaint => {
            let ck = load_checkpoint(&checkpoint_path(cfg, checkpoint))?;
            let splits = load_splits(cfg)?;
            let image = splits.image.ok_or_else(|| Error::Config("inpaint needs image data".into()))?;
            let n = cfg.inpaint_images.min(splits.test.rows());
            if n == 0 {
                return Err(Error::Config("inpaint needs test images".into()));
            }
            let images = take_rows(&splits.test, [0, n])?;
            let mut streams = RunStreams::new(cfg.seed);
            let (chain, _) = inpaint(cfg, &ck.model, &ck.corruptor, &images, image, &mut streams.inpaint)?;
            say(log, format!("inpainted {n} images, {} samples each", cfg.samples))?;
            out.matrix("inpaint.mat", &chain.samples, &stamp)?;
            if let Some((w, h)) = renderable(&ck, Some(image)) {
                // one strip row per image: the original, then its samples
                let per = cfg.samples + 1;
                let strip = Tensor2::from_fn(n * per, w * h, |r, c| match r % per {
                    0 => images.get(r / per, c),
                    k => chain.means.get((r / per) * cfg.samples + k - 1, c),
                });
                out.write("inpaint.pgm", &encode_pgm(&strip, w, h, per)?)?;
            }
        }
        Command::Eval => {
            let ck = load_checkpoint(&checkpoint_path(cfg, checkpoint))?;
            let splits = load_splits(cfg)?;
            let mut streams = RunStreams::new(cfg.seed);
            let chain = generate(cfg, &ck.model, &ck.corruptor, &splits.train, &mut streams.sample)?;
            let report = parzen_eval(&chain.means, &splits.valid, &splits.test, cfg.sigma_grid.as_deref())?;
            say(
                log,
                format!(
                    "Parzen log-likelihood {:.3} ± {:.3} (sigma {:.4}, {} centers)",
                    report.mean,
                    report.std_err,
                    report.sigma,
                    chain.means.rows()
                ),
            )?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            out.write("eval.json", text.as_bytes())?;
        }
        Command::Verify => {
            let outcomes = run_suite(cfg.seed)?;
            let mut csv = String::from("check,passed,worst,tolerance\n");
            for o in &outcomes {
                say(
                    log,
                    format!(
                        "{} {:<24} worst {:.3e} (tol {:.1e}) {}",
                        if o.passed { "PASS" } else { "FAIL" },
                        o.name,
                        o.worst,
                        o.tolerance,
                        o.detail
                    ),
                )?;
                csv.push_str(&format!("{},{},{:?},{:?}\n", o.name, o.passed, o.worst, o.tolerance));
            }
            out.write("verify.csv", csv.as_bytes())?;
            if let Some(o) = outcomes.iter().find(|o| !o.passed) {
                out.manifest.write(dir)?;
                return Err(Error::Config(format!("check {} failed: {}", o.name, o.detail)));
            }
        }
        Command::Synth => {
            let m = synthesize(cfg)?;
            say(log, format!("generated {} x {}", m.rows(), m.cols()))?;
            out.matrix("synth.mat", &m, &stamp)?;
        }
    }
    out.manifest.write(dir)?;
    Ok(out.manifest)
}
