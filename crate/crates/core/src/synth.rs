//! Synthetic datasets: categorical draws and a correlated Gaussian mixture.

use alloc::vec::Vec;

use crate::numkit::{RngStream, Tensor2};
use crate::oracle::check_distribution;
use crate::{GsnError, Result};

/// `n` i.i.d. categorical draws from `spec`, as an `n × 1` matrix of
/// state indices.
pub fn synth_discrete(spec: &[f64], n: usize, seed: u64) -> Result<Tensor2> {
    check_distribution(spec, "discrete spec")?;
    let mut rng = RngStream::new(seed);
    Tensor2::new(n, 1, (0..n).map(|_| rng.categorical(spec) as f64).collect())
}

/// Mixture of Gaussians whose components share a random correlation
/// structure `x = μ_c + L z`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Tensor2,
    /// Lower-triangular mixing matrix shared by all components.
    pub mixing: Tensor2,
}

impl GaussianMixture {
    /// `components` modes in `dim` dimensions with means spread `separation`
    /// apart on average and strongly correlated coordinates.
    pub fn random(dim: usize, components: usize, separation: f64, seed: u64) -> Result<Self> {
        if dim == 0 || components == 0 {
            return Err(GsnError::Empty("mixture"));
        }
        let mut rng = RngStream::new(seed);
        let means = Tensor2::from_fn(components, dim, |_, _| separation * rng.normal());
        let mixing = Tensor2::from_fn(dim, dim, |r, c| match r.cmp(&c) {
            core::cmp::Ordering::Less => 0.0,
            core::cmp::Ordering::Equal => 0.3 + 0.2 * rng.uniform(),
            core::cmp::Ordering::Greater => 0.4 * rng.normal() / libm::sqrt(dim as f64),
        });
        let weights = crate::oracle::random_distribution(components, &mut rng);
        Ok(GaussianMixture { weights, means, mixing })
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Tensor2> {
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let c = rng.categorical(&self.weights);
            let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let lz = self.mixing.matvec(&z)?;
            data.extend(self.means.row(c).iter().zip(lz).map(|(m, v)| m + v));
        }
        Tensor2::new(n, d, data)
    }
}

/// `n` draws from the default 10-dimensional, 4-component mixture.
pub fn synth_continuous(n: usize, seed: u64) -> Result<Tensor2> {
    let mix = GaussianMixture::random(10, 4, 1.5, seed)?;
    mix.sample(n, &mut RngStream::new(seed ^ 0x5eed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn degenerate_spec() {
        let s = synth_discrete(&[1.0, 0.0, 0.0], 100, 3).unwrap();
        assert!(s.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn five_thousand_draws_close_to_spec() {
        let mut rng = RngStream::new(1);
        let p = crate::oracle::random_distribution(10, &mut rng);
        let s = synth_discrete(&p, 5000, 2).unwrap();
        assert!(crate::parzen::histogram_tv(&s, &p).unwrap() < 0.03);
    }

    #[test]
    fn reproducible_and_validated() {
        let p = vec![0.2, 0.3, 0.5];
        assert_eq!(synth_discrete(&p, 50, 9).unwrap(), synth_discrete(&p, 50, 9).unwrap());
        assert!(synth_discrete(&[0.5, 0.6], 5, 1).is_err());
        assert_eq!(synth_continuous(20, 4).unwrap(), synth_continuous(20, 4).unwrap());
        assert_eq!(synth_continuous(20, 4).unwrap().shape(), (20, 10));
    }
}
