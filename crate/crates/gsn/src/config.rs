//! Flat JSON run configuration plus the option grammars shared with the
//! command line.

use std::path::{Path, PathBuf};

use gsn_core::chain::{Clamp, DEFAULT_BURN_IN};
use gsn_core::corruption::Corruptor;
use gsn_core::network::{LayerNoise, ModelSpec};
use gsn_core::recon::HeadKind;
use gsn_core::trainer::{H0Policy, TrainConfig, Walkback};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Everything a command needs. Unknown keys are rejected; missing keys take
/// the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// IDX image file used for the training and validation splits.
    pub idx_path: Option<PathBuf>,
    /// IDX image file for the test split; the test rows come from
    /// `idx_path` when absent.
    pub test_idx_path: Option<PathBuf>,
    /// Matrix file (see [`crate::matfile`]) used instead of an IDX file.
    pub matrix_path: Option<PathBuf>,
    /// Built-in generator: `continuous` (10-d Gaussian mixture) or
    /// `discrete:p1,p2,...` (state indices).
    pub synthetic: Option<String>,
    pub synthetic_rows: usize,
    /// Half-open row ranges `[start, end)` of each split.
    pub train_rows: [usize; 2],
    pub valid_rows: [usize; 2],
    pub test_rows: [usize; 2],
    /// Square mean-pooling factor applied to IDX images.
    pub downsample: usize,
    /// Pixels `>= threshold` become 1, the rest 0.
    pub binarize_threshold: Option<f64>,

    /// Hidden layer sizes; the visible size comes from the data.
    pub hidden: Vec<usize>,
    /// `bernoulli` or `gaussian`.
    pub head: String,
    /// Pre/post activation noise of the first hidden layer and of deeper ones.
    pub first_layer_noise: f64,
    pub hidden_noise: f64,
    /// Number of scaling factors; defaults to the longest walkback.
    pub alpha_steps: Option<usize>,
    /// `salt-pepper:R`, `gaussian:S`, `uniform:E` or `mask:K`.
    pub corruption: String,

    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    pub minibatch: usize,
    /// `none`, `geom:P` or `fixed:K`.
    pub walkback: String,
    pub collect_intermediate: bool,
    pub persist_hidden: bool,
    pub learn_alpha: bool,

    pub samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Independent chains run in parallel; samples are split between them.
    pub chains: usize,
    /// Start each chain from a random training example instead of uniform
    /// noise.
    pub init_from_data: bool,
    /// `right-half` or a comma-separated index list (values come from the
    /// image being inpainted).
    pub clamp: Option<String>,
    /// Test images completed by `inpaint`.
    pub inpaint_images: usize,
    /// Parzen bandwidths to cross-validate; a log grid over [0.05, 1] when absent.
    pub sigma_grid: Option<Vec<f64>>,

    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            idx_path: None,
            test_idx_path: None,
            matrix_path: None,
            synthetic: None,
            synthetic_rows: 5000,
            train_rows: [0, 0],
            valid_rows: [0, 0],
            test_rows: [0, 0],
            downsample: 1,
            binarize_threshold: None,
            hidden: vec![400],
            head: "bernoulli".into(),
            first_layer_noise: 0.0,
            hidden_noise: 2.0,
            alpha_steps: None,
            corruption: "salt-pepper:0.4".into(),
            epochs: 30,
            lr: 0.25,
            momentum: 0.5,
            lr_decay: 0.99,
            minibatch: 1,
            walkback: "geom:0.5".into(),
            collect_intermediate: true,
            persist_hidden: false,
            learn_alpha: false,
            samples: 100,
            burn_in: DEFAULT_BURN_IN,
            thin: 1,
            chains: 1,
            init_from_data: true,
            clamp: None,
            inpaint_images: 10,
            sigma_grid: None,
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

/// Where examples come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Idx { train: PathBuf, test: Option<PathBuf> },
    Matrix(PathBuf),
    Continuous,
    Discrete(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClampSpec {
    RightHalf,
    Indices(Vec<usize>),
}

fn split_param<'a>(spec: &'a str, what: &str) -> Result<(&'a str, Option<&'a str>)> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    if name.is_empty() {
        return Err(Error::Config(format!("empty {what} spec")));
    }
    Ok((name, arg))
}

fn number<T: std::str::FromStr>(arg: Option<&str>, spec: &str) -> Result<T> {
    arg.and_then(|a| a.parse().ok()).ok_or_else(|| Error::Config(format!("missing or bad number in {spec:?}")))
}

pub fn parse_walkback(spec: &str) -> Result<Walkback> {
    let w = match split_param(spec, "walkback")? {
        ("none", None) => Walkback::None,
        ("geom", arg) => Walkback::Geometric(number(arg, spec)?),
        ("fixed", arg) => Walkback::Fixed(number(arg, spec)?),
        _ => return Err(Error::Config(format!("walkback must be none, geom:P or fixed:K, got {spec:?}"))),
    };
    w.validate()?;
    Ok(w)
}

pub fn parse_corruption(spec: &str) -> Result<Corruptor> {
    let c = match split_param(spec, "corruption")? {
        ("salt-pepper", arg) => Corruptor::SaltPepper { rate: number(arg, spec)? },
        ("gaussian", arg) => Corruptor::AdditiveGaussian { sigma: number(arg, spec)? },
        ("uniform", arg) => Corruptor::LocalUniform { epsilon: number(arg, spec)? },
        ("mask", arg) => Corruptor::SubsetMask { subset_size: number(arg, spec)? },
        _ => return Err(Error::Config(format!("unknown corruption {spec:?}"))),
    };
    c.validate()?;
    Ok(c)
}

pub fn parse_head(spec: &str) -> Result<HeadKind> {
    match spec {
        "bernoulli" => Ok(HeadKind::Bernoulli),
        "gaussian" => Ok(HeadKind::Gaussian),
        _ => Err(Error::Config(format!("head must be bernoulli or gaussian, got {spec:?}"))),
    }
}

pub fn parse_clamp(spec: &str) -> Result<ClampSpec> {
    if spec.trim() == "right-half" {
        return Ok(ClampSpec::RightHalf);
    }
    let idx = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad clamp index {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClampSpec::Indices(idx))
}

impl ClampSpec {
    /// Builds the clamp for one image of `width × height` pixels.
    pub fn clamp_for(&self, image: &[f64], width: usize, height: usize) -> Result<Clamp> {
        Ok(match self {
            ClampSpec::RightHalf => Clamp::right_half(width, height, image)?,
            ClampSpec::Indices(idx) => {
                if let Some(i) = idx.iter().find(|i| **i >= image.len()) {
                    return Err(Error::Config(format!("clamp index {i} out of range for {} pixels", image.len())));
                }
                Clamp::new(idx.clone(), idx.iter().map(|i| image[*i]).collect())?
            }
        })
    }
}

fn check_range(name: &str, r: [usize; 2]) -> Result<()> {
    if r[0] > r[1] {
        return Err(Error::Config(format!("{name} [{}, {}) is reversed", r[0], r[1])));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        // relative data paths are resolved against the config's directory
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.idx_path, &mut cfg.test_idx_path, &mut cfg.matrix_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn data_source(&self) -> Result<DataSource> {
        let given = [self.idx_path.is_some(), self.matrix_path.is_some(), self.synthetic.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(Error::Config("set exactly one of idx_path, matrix_path, synthetic".into()));
        }
        if let Some(p) = &self.idx_path {
            return Ok(DataSource::Idx { train: p.clone(), test: self.test_idx_path.clone() });
        }
        if let Some(p) = &self.matrix_path {
            return Ok(DataSource::Matrix(p.clone()));
        }
        let spec = self.synthetic.as_deref().unwrap_or_default();
        match split_param(spec, "synthetic")? {
            ("continuous", None) => Ok(DataSource::Continuous),
            ("discrete", Some(probs)) => Ok(DataSource::Discrete(
                probs
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad probability {s:?}"))))
                    .collect::<Result<_>>()?,
            )),
            _ => Err(Error::Config(format!("synthetic must be continuous or discrete:p1,p2,..., got {spec:?}"))),
        }
    }

    /// Checks every field, including that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let source = self.data_source()?;
        for p in [&self.idx_path, &self.test_idx_path, &self.matrix_path].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.test_idx_path.is_some() && self.idx_path.is_none() {
            return Err(Error::Config("test_idx_path needs idx_path".into()));
        }
        if let DataSource::Discrete(p) = &source {
            gsn_core::oracle::check_distribution(p, "synthetic spec")?;
        }
        check_range("train_rows", self.train_rows)?;
        check_range("valid_rows", self.valid_rows)?;
        check_range("test_rows", self.test_rows)?;
        if self.downsample == 0 {
            return Err(Error::Config("downsample must be at least 1".into()));
        }
        if let Some(t) = self.binarize_threshold {
            if !t.is_finite() {
                return Err(Error::Config(format!("binarize_threshold {t} is not finite")));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("hidden sizes {:?} must be nonempty and positive", self.hidden)));
        }
        for s in [self.first_layer_noise, self.hidden_noise] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("noise level {s} must be nonnegative")));
            }
        }
        if self.alpha_steps == Some(0) {
            return Err(Error::Config("alpha_steps must be at least 1".into()));
        }
        if self.chains == 0 || self.thin == 0 {
            return Err(Error::Config("chains and thin must be at least 1".into()));
        }
        if let Some(c) = &self.clamp {
            parse_clamp(c)?;
        }
        if let Some(g) = &self.sigma_grid {
            if g.is_empty() || g.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::Config("sigma_grid must hold positive bandwidths".into()));
            }
        }
        parse_head(&self.head)?;
        parse_corruption(&self.corruption)?;
        self.train_config()?.validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            momentum: self.momentum,
            lr_decay: self.lr_decay,
            minibatch: self.minibatch,
            walkback: parse_walkback(&self.walkback)?,
            collect_intermediate: self.collect_intermediate,
            h0_policy: if self.persist_hidden { H0Policy::Persist } else { H0Policy::Zero },
            learn_alpha: self.learn_alpha,
        })
    }

    pub fn model_spec(&self, visible: usize) -> Result<ModelSpec> {
        let mut layer_sizes = vec![visible];
        layer_sizes.extend(&self.hidden);
        let noise = (0..self.hidden.len())
            .map(|l| LayerNoise::symmetric(if l == 0 { self.first_layer_noise } else { self.hidden_noise }))
            .collect();
        let alpha_steps = match self.alpha_steps {
            Some(k) => k,
            None => parse_walkback(&self.walkback)?.max_depth(),
        };
        Ok(ModelSpec { layer_sizes, noise, head: parse_head(&self.head)?, alpha_steps })
    }

    /// SHA-256 of the canonical JSON form. The output directory is left
    /// out so the same run written to two places carries the same hash.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).into()
    }

    pub fn hash_hex(&self) -> String {
        hex(&self.hash())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_grammars() {
        assert_eq!(parse_walkback("none").unwrap(), Walkback::None);
        assert_eq!(parse_walkback("geom:0.5").unwrap(), Walkback::Geometric(0.5));
        assert_eq!(parse_walkback("fixed:4").unwrap(), Walkback::Fixed(4));
        assert!(parse_walkback("geom:1.5").is_err());
        assert!(parse_walkback("fixed").is_err());
        assert_eq!(parse_corruption("salt-pepper:0.3").unwrap(), Corruptor::SaltPepper { rate: 0.3 });
        assert!(parse_corruption("gaussian:-1").is_err());
        assert_eq!(parse_clamp("right-half").unwrap(), ClampSpec::RightHalf);
        assert_eq!(parse_clamp("3, 1,2").unwrap(), ClampSpec::Indices(vec![3, 1, 2]));
        assert!(parse_clamp("1,x").is_err());
    }

    #[test]
    fn unknown_keys_and_missing_files_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epoch": 3}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"idx_path": "/nonexistent/train.idx"}"#).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn exactly_one_source() {
        let cfg = RunConfig::default();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { synthetic: Some("continuous".into()), ..RunConfig::default() };
        cfg.validate().unwrap();
        let cfg = RunConfig { synthetic: Some("discrete:0.5,0.6".into()), ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig { synthetic: Some("continuous".into()), ..RunConfig::default() };
        let b = RunConfig { output_dir: "elsewhere".into(), ..a.clone() };
        let c = RunConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash_hex().len(), 64);
    }
}
