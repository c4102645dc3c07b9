//! Gaussian Parzen-window log-likelihood and histogram comparison.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::numkit::{log_sum_exp, Tensor2};
use crate::{GsnError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ParzenModel {
    centers: Tensor2,
    sigma: f64,
}

/// Mean log-likelihood over test points and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLik {
    pub mean: f64,
    pub std_err: f64,
}

impl ParzenModel {
    pub fn new(centers: Tensor2, sigma: f64) -> Result<Self> {
        if centers.rows() == 0 {
            return Err(GsnError::Empty("parzen centers"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(GsnError::Param { name: "sigma", value: sigma });
        }
        Ok(ParzenModel { centers, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn centers(&self) -> &Tensor2 {
        &self.centers
    }

    /// Log density of every row of `test`.
    pub fn log_densities(&self, test: &Tensor2) -> Result<Vec<f64>> {
        let d2 = squared_distances(&self.centers, test)?;
        Ok(densities_from_distances(&d2, self.centers.rows(), self.centers.cols(), self.sigma))
    }

    pub fn loglik(&self, test: &Tensor2) -> Result<LogLik> {
        summarize(&self.log_densities(test)?)
    }
}

fn summarize(values: &[f64]) -> Result<LogLik> {
    if values.is_empty() {
        return Err(GsnError::Empty("test set"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(LogLik { mean, std_err: libm::sqrt(var / n) })
}

/// `out[t][i] = ‖test_t − center_i‖²`.
fn squared_distances(centers: &Tensor2, test: &Tensor2) -> Result<Vec<Vec<f64>>> {
    if centers.cols() != test.cols() {
        return Err(GsnError::Shape { op: "parzen", left: centers.shape(), right: test.shape() });
    }
    Ok(test
        .iter_rows()
        .map(|x| {
            centers
                .iter_rows()
                .map(|c| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect())
}

fn densities_from_distances(d2: &[Vec<f64>], n: usize, d: usize, sigma: f64) -> Vec<f64> {
    let log_norm = -0.5 * d as f64 * libm::log(TAU * sigma * sigma) - libm::log(n as f64);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut terms = vec![0.0; n];
    d2.iter()
        .map(|row| {
            for (t, v) in terms.iter_mut().zip(row) {
                *t = -v * inv;
            }
            log_norm + log_sum_exp(&terms)
        })
        .collect()
}

/// Log-spaced grid of `points` bandwidths from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    (0..points).map(|i| libm::exp(a + (b - a) * i as f64 / (points - 1) as f64)).collect()
}

/// Default bandwidth grid: 20 log-spaced values in `[0.05, 1.0]`.
pub fn default_sigma_grid() -> Vec<f64> {
    log_grid(0.05, 1.0, 20)
}

/// Grid bandwidth with the highest mean validation log-likelihood; ties go
/// to the smaller bandwidth.
pub fn crossval_sigma(centers: &Tensor2, validation: &Tensor2, grid: &[f64]) -> Result<f64> {
    Ok(crossval_scores(centers, validation, grid)?.0)
}

/// Best bandwidth plus the mean validation log-likelihood of every grid point.
pub fn crossval_scores(centers: &Tensor2, validation: &Tensor2, grid: &[f64]) -> Result<(f64, Vec<f64>)> {
    if grid.is_empty() {
        return Err(GsnError::Empty("sigma grid"));
    }
    if let Some(s) = grid.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(GsnError::Param { name: "sigma", value: *s });
    }
    if centers.rows() == 0 {
        return Err(GsnError::Empty("parzen centers"));
    }
    let d2 = squared_distances(centers, validation)?;
    let scores: Vec<f64> = grid
        .iter()
        .map(|s| {
            let ll = densities_from_distances(&d2, centers.rows(), centers.cols(), *s);
            ll.iter().sum::<f64>() / ll.len().max(1) as f64
        })
        .collect();
    let mut best = 0;
    for i in 1..grid.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && grid[i] < grid[best]) {
            best = i;
        }
    }
    Ok((grid[best], scores))
}

/// Total variation between the empirical frequencies of integer-valued
/// single-column samples and `reference`.
pub fn histogram_tv(samples: &Tensor2, reference: &[f64]) -> Result<f64> {
    if samples.cols() != 1 {
        return Err(GsnError::Shape { op: "histogram_tv", left: samples.shape(), right: (samples.rows(), 1) });
    }
    let m = reference.len();
    let mut counts = vec![0.0; m];
    for v in samples.data() {
        if *v < 0.0 || libm::trunc(*v) != *v || *v as usize >= m {
            return Err(GsnError::OutOfRange { value: *v, lo: 0.0, hi: m as f64 - 1.0 });
        }
        counts[*v as usize] += 1.0;
    }
    let n = samples.rows().max(1) as f64;
    Ok(0.5 * counts.iter().zip(reference).map(|(c, r)| (c / n - r).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    fn random(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor2 {
        Tensor2::from_fn(rows, cols, |_, _| rng.normal())
    }

    #[test]
    fn single_center_at_test_point() {
        let x = Tensor2::from_rows(&[vec![0.3, -0.2, 1.0, 2.0]]).unwrap();
        let sigma = 0.4;
        let ll = ParzenModel::new(x.clone(), sigma).unwrap().loglik(&x).unwrap();
        assert!((ll.mean + 2.0 * libm::log(TAU * sigma * sigma)).abs() < 1e-12);
        assert_eq!(ll.std_err, 0.0);
    }

    #[test]
    fn duplicate_centers_change_nothing() {
        let mut rng = RngStream::new(1);
        let c = random(1, 3, &mut rng);
        let cc = Tensor2::from_rows(&[c.row(0).to_vec(), c.row(0).to_vec()]).unwrap();
        let t = random(4, 3, &mut rng);
        let a = ParzenModel::new(c, 0.7).unwrap().loglik(&t).unwrap();
        let b = ParzenModel::new(cc, 0.7).unwrap().loglik(&t).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_summation() {
        let mut rng = RngStream::new(2);
        let c = random(5, 3, &mut rng);
        let t = random(1, 3, &mut rng);
        let sigma = 0.9;
        let naive: f64 = c
            .iter_rows()
            .map(|ci| {
                let sq: f64 = ci.iter().zip(t.row(0)).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::pow(TAU * sigma * sigma, -1.5) * libm::exp(-sq / (2.0 * sigma * sigma))
            })
            .sum::<f64>()
            / 5.0;
        let ll = ParzenModel::new(c, sigma).unwrap().loglik(&t).unwrap();
        assert!((ll.mean - libm::log(naive)).abs() < 1e-10);
    }

    #[test]
    fn crossval_cases() {
        let mut rng = RngStream::new(3);
        let c = random(10, 4, &mut rng);
        assert_eq!(crossval_sigma(&c, &c, &[0.3]).unwrap(), 0.3);
        assert_eq!(crossval_sigma(&c, &c, &[0.01, 10.0]).unwrap(), 0.01);
        assert!(crossval_sigma(&c, &c, &[]).is_err());
        let v = random(6, 4, &mut rng);
        let grid = default_sigma_grid();
        let (best, scores) = crossval_scores(&c, &v, &grid).unwrap();
        let i = grid.iter().position(|s| *s == best).unwrap();
        assert!(scores.iter().all(|s| scores[i] >= *s));
    }

    #[test]
    fn default_grid_shape() {
        let g = default_sigma_grid();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[19] - 1.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn histogram_cases() {
        let exact = Tensor2::new(4, 1, vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(histogram_tv(&exact, &[0.25, 0.5, 0.25]).unwrap(), 0.0);
        let m = 5;
        let one = Tensor2::new(3, 1, vec![2.0; 3]).unwrap();
        assert!((histogram_tv(&one, &[0.2; 5]).unwrap() - (1.0 - 1.0 / m as f64)).abs() < 1e-15);
        assert!(histogram_tv(&Tensor2::new(1, 1, vec![5.0]).unwrap(), &[0.2; 5]).is_err());
    }

    #[test]
    fn iid_draws_close_in_tv() {
        let mut rng = RngStream::new(4);
        let p = crate::oracle::random_distribution(10, &mut rng);
        let data: Vec<f64> = (0..1_000_000).map(|_| rng.categorical(&p) as f64).collect();
        let s = Tensor2::new(1_000_000, 1, data).unwrap();
        assert!(histogram_tv(&s, &p).unwrap() < 0.005);
    }

    #[test]
    fn stable_in_high_dimension_small_sigma() {
        let mut rng = RngStream::new(5);
        let c = Tensor2::from_fn(3, 784, |_, _| rng.uniform());
        let t = Tensor2::from_fn(2, 784, |_, _| rng.uniform());
        let ll = ParzenModel::new(c, 1e-3).unwrap().loglik(&t).unwrap();
        assert!(ll.mean.is_finite());
    }
}
