//! Loading and preprocessing the train/validation/test splits.

use gsn_core::numkit::{RngStream, Tensor2};
use gsn_core::synth::{synth_continuous, synth_discrete};

use crate::config::{DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::idx::{idx_dims, parse_idx, read_idx_bytes};
use crate::matfile::read_matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Tensor2,
    pub valid: Tensor2,
    pub test: Tensor2,
    /// Image geometry when the rows are images.
    pub image: Option<(usize, usize)>,
}

/// Averages non-overlapping `factor × factor` blocks of each
/// `width × height` row. Trailing pixels that do not fill a block are dropped.
pub fn downsample(m: &Tensor2, width: usize, height: usize, factor: usize) -> Result<(Tensor2, usize, usize)> {
    if m.cols() != width * height {
        return Err(Error::Format(format!("rows have {} pixels, expected {width}x{height}", m.cols())));
    }
    if factor <= 1 {
        return Ok((m.clone(), width, height));
    }
    let (w, h) = (width / factor, height / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let out = Tensor2::from_fn(m.rows(), w * h, |r, i| {
        let (bx, by) = (i % w, i / w);
        let row = m.row(r);
        let mut s = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                s += row[(by * factor + dy) * width + bx * factor + dx];
            }
        }
        s * norm
    });
    Ok((out, w, h))
}

pub fn binarize(m: &Tensor2, threshold: f64) -> Tensor2 {
    let (r, c) = m.shape();
    Tensor2::from_fn(r, c, |i, j| if m.get(i, j) >= threshold { 1.0 } else { 0.0 })
}

/// Rows `[start, end)`; an empty range selects nothing.
pub fn take_rows(m: &Tensor2, range: [usize; 2]) -> Result<Tensor2> {
    let [start, end] = range;
    if end > m.rows() {
        return Err(Error::Config(format!("rows [{start}, {end}) exceed the {} available", m.rows())));
    }
    let cols = m.cols();
    Ok(Tensor2::new(end - start, cols, m.data()[start * cols..end * cols].to_vec())?)
}

fn load_images(path: &std::path::Path) -> Result<(Tensor2, usize, usize)> {
    let bytes = read_idx_bytes(path)?;
    let dims = idx_dims(&bytes)?;
    if dims.len() != 3 {
        return Err(Error::Format(format!("{} is not an image file", path.display())));
    }
    Ok((parse_idx(&bytes)?, dims[2], dims[1]))
}

fn preprocess(cfg: &RunConfig, m: Tensor2, w: usize, h: usize) -> Result<(Tensor2, usize, usize)> {
    let (m, w, h) = downsample(&m, w, h, cfg.downsample)?;
    let m = match cfg.binarize_threshold {
        Some(t) => binarize(&m, t),
        None => m,
    };
    Ok((m, w, h))
}

pub fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    let split = |m: &Tensor2, test: Option<&Tensor2>, image| -> Result<Splits> {
        Ok(Splits {
            train: take_rows(m, cfg.train_rows)?,
            valid: take_rows(m, cfg.valid_rows)?,
            test: take_rows(test.unwrap_or(m), cfg.test_rows)?,
            image,
        })
    };
    match cfg.data_source()? {
        DataSource::Idx { train, test } => {
            let (m, w, h) = load_images(&train)?;
            let (m, w, h) = preprocess(cfg, m, w, h)?;
            let test = match test {
                Some(p) => {
                    let (t, tw, th) = load_images(&p)?;
                    Some(preprocess(cfg, t, tw, th)?.0)
                }
                None => None,
            };
            if let Some(t) = &test {
                if t.cols() != m.cols() {
                    return Err(Error::Format("train and test images differ in size".into()));
                }
            }
            split(&m, test.as_ref(), Some((w, h)))
        }
        DataSource::Matrix(p) => {
            let m = read_matrix(&p)?.0;
            let m = match cfg.binarize_threshold {
                Some(t) => binarize(&m, t),
                None => m,
            };
            split(&m, None, None)
        }
        DataSource::Continuous => split(&synth_continuous(cfg.synthetic_rows, cfg.seed)?, None, None),
        DataSource::Discrete(p) => split(&synth_discrete(&p, cfg.synthetic_rows, cfg.seed)?, None, None),
    }
}

/// Synthetic rows for the `synth` command.
pub fn synthesize(cfg: &RunConfig) -> Result<Tensor2> {
    match cfg.data_source()? {
        DataSource::Continuous => Ok(synth_continuous(cfg.synthetic_rows, cfg.seed)?),
        DataSource::Discrete(p) => Ok(synth_discrete(&p, cfg.synthetic_rows, cfg.seed)?),
        _ => Err(Error::Config("synth needs a synthetic dataset".into())),
    }
}

/// A random subset of `n` rows, in random order.
pub fn sample_rows(m: &Tensor2, n: usize, rng: &mut RngStream) -> Result<Tensor2> {
    let mut idx: Vec<usize> = (0..m.rows()).collect();
    rng.shuffle(&mut idx);
    idx.truncate(n);
    let cols = m.cols();
    Ok(Tensor2::new(idx.len(), cols, idx.iter().flat_map(|r| m.row(*r).iter().copied()).collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_averages_blocks() {
        let m = Tensor2::new(1, 16, (0..16).map(|v| v as f64).collect()).unwrap();
        let (d, w, h) = downsample(&m, 4, 4, 2).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(d.data(), &[2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn binarize_is_inclusive() {
        let m = Tensor2::new(1, 3, vec![0.49, 0.5, 0.9]).unwrap();
        assert_eq!(binarize(&m, 0.5).data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn rows_out_of_range() {
        let m = Tensor2::zeros(3, 2);
        assert_eq!(take_rows(&m, [1, 3]).unwrap().shape(), (2, 2));
        assert!(take_rows(&m, [0, 4]).is_err());
    }
}
