//! Fixed corruption processes `C(X̃|X)`.

use alloc::format;
use alloc::vec::Vec;

use crate::numkit::RngStream;
use crate::{GsnError, Result};

/// A fixed corruption distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum Corruptor {
    /// Each coordinate is selected with probability `rate` and, when
    /// selected, replaced by a fair coin flip. Binary inputs only.
    SaltPepper { rate: f64 },
    /// `x + N(0, σ² I)`.
    AdditiveGaussian { sigma: f64 },
    /// `x + Uniform(-ε, ε)` per coordinate.
    LocalUniform { epsilon: f64 },
    /// Hides a uniformly chosen subset of `subset_size` coordinates.
    SubsetMask { subset_size: usize },
}

/// Output of [`Corruptor::corrupt`]. `missing` is sorted and only non-empty
/// for [`Corruptor::SubsetMask`], whose hidden coordinates are zeroed.
#[derive(Clone, Debug, PartialEq)]
pub struct Corrupted {
    pub values: Vec<f64>,
    pub missing: Vec<usize>,
}

fn is_binary(v: f64) -> bool {
    v == 0.0 || v == 1.0
}

impl Corruptor {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Corruptor::SaltPepper { rate } if !(0.0..=1.0).contains(&rate) => {
                Err(GsnError::Param { name: "rate", value: rate })
            }
            Corruptor::AdditiveGaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(GsnError::Param { name: "sigma", value: sigma })
            }
            Corruptor::LocalUniform { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                Err(GsnError::Param { name: "epsilon", value: epsilon })
            }
            Corruptor::SubsetMask { subset_size: 0 } => Err(GsnError::Param {
                name: "subset_size",
                value: 0.0,
            }),
            _ => Ok(()),
        }
    }

    pub fn binary_only(&self) -> bool {
        matches!(self, Corruptor::SaltPepper { .. })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        self.validate()?;
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(GsnError::Domain(format!("non-finite input {v}")));
        }
        if self.binary_only() {
            if let Some(v) = x.iter().find(|v| !is_binary(**v)) {
                return Err(GsnError::Domain(format!(
                    "salt-and-pepper needs binary input, got {v}"
                )));
            }
        }
        if let Corruptor::SubsetMask { subset_size } = *self {
            if subset_size > x.len() {
                return Err(GsnError::Index {
                    index: subset_size,
                    dim: x.len(),
                });
            }
        }
        Ok(())
    }

    pub fn corrupt(&self, x: &[f64], rng: &mut RngStream) -> Result<Corrupted> {
        let mut values = Vec::with_capacity(x.len());
        let missing = self.corrupt_into(x, &mut values, rng)?;
        Ok(Corrupted { values, missing })
    }

    /// Like [`Corruptor::corrupt`] but writes into a reusable buffer.
    pub fn corrupt_into(
        &self,
        x: &[f64],
        out: &mut Vec<f64>,
        rng: &mut RngStream,
    ) -> Result<Vec<usize>> {
        self.check_input(x)?;
        out.clear();
        out.extend_from_slice(x);
        match *self {
            Corruptor::SaltPepper { rate } => {
                if rate > 0.0 {
                    for v in out.iter_mut() {
                        if rng.uniform() < rate {
                            *v = if rng.uniform() < 0.5 { 1.0 } else { 0.0 };
                        }
                    }
                }
                Ok(Vec::new())
            }
            Corruptor::AdditiveGaussian { sigma } => {
                for v in out.iter_mut() {
                    *v += sigma * rng.normal();
                }
                Ok(Vec::new())
            }
            Corruptor::LocalUniform { epsilon } => {
                for v in out.iter_mut() {
                    *v += epsilon * (2.0 * rng.uniform() - 1.0);
                }
                Ok(Vec::new())
            }
            Corruptor::SubsetMask { subset_size } => {
                // partial Fisher-Yates: the first `subset_size` slots are a uniform subset
                let mut idx: Vec<usize> = (0..x.len()).collect();
                for i in 0..subset_size {
                    let j = i + rng.below(x.len() - i);
                    idx.swap(i, j);
                }
                let mut missing = idx[..subset_size].to_vec();
                missing.sort_unstable();
                for &i in &missing {
                    out[i] = 0.0;
                }
                Ok(missing)
            }
        }
    }

    /// Exact pmf (salt-and-pepper) or density (Gaussian, uniform) of `x̃`
    /// given `x`.
    pub fn density(&self, x_tilde: &[f64], x: &[f64]) -> Result<f64> {
        if x_tilde.len() != x.len() {
            return Err(GsnError::Shape {
                op: "density",
                left: (1, x_tilde.len()),
                right: (1, x.len()),
            });
        }
        self.validate()?;
        match *self {
            Corruptor::SaltPepper { rate } => {
                let mut p = 1.0;
                for (t, v) in x_tilde.iter().zip(x) {
                    if !is_binary(*t) || !is_binary(*v) {
                        return Err(GsnError::Domain(format!(
                            "salt-and-pepper pmf needs binary vectors, got {t} / {v}"
                        )));
                    }
                    p *= if t == v { 1.0 - rate + 0.5 * rate } else { 0.5 * rate };
                }
                Ok(p)
            }
            Corruptor::AdditiveGaussian { sigma } => {
                let d = x.len() as f64;
                let sq: f64 = x_tilde.iter().zip(x).map(|(t, v)| (t - v) * (t - v)).sum();
                let log_norm = -0.5 * d * libm::log(core::f64::consts::TAU * sigma * sigma);
                Ok(libm::exp(log_norm - 0.5 * sq / (sigma * sigma)))
            }
            Corruptor::LocalUniform { epsilon } => {
                if x_tilde.iter().zip(x).any(|(t, v)| (t - v).abs() > epsilon) {
                    Ok(0.0)
                } else {
                    Ok(libm::pow(2.0 * epsilon, -(x.len() as f64)))
                }
            }
            Corruptor::SubsetMask { .. } => Err(GsnError::Unsupported(
                "density of a subset mask; the dependency-network sampler handles it directly",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bits(state: usize, d: usize) -> Vec<f64> {
        (0..d).map(|i| ((state >> i) & 1) as f64).collect()
    }

    #[test]
    fn salt_pepper_rate_zero_is_identity() {
        let mut rng = RngStream::new(1);
        let x = vec![1.0, 0.0, 1.0, 1.0];
        let c = Corruptor::SaltPepper { rate: 0.0 };
        assert_eq!(c.corrupt(&x, &mut rng).unwrap().values, x);
    }

    #[test]
    fn salt_pepper_rate_one_is_fair_coin() {
        let mut rng = RngStream::new(2);
        let x = vec![1.0; 1_000_000];
        let c = Corruptor::SaltPepper { rate: 1.0 };
        let out = c.corrupt(&x, &mut rng).unwrap().values;
        let frac = out.iter().sum::<f64>() / out.len() as f64;
        assert!((frac - 0.5).abs() < 0.002, "{frac}");
    }

    #[test]
    fn salt_pepper_rejects_non_binary() {
        let mut rng = RngStream::new(2);
        let c = Corruptor::SaltPepper { rate: 0.4 };
        assert!(matches!(c.corrupt(&[0.5], &mut rng), Err(GsnError::Domain(_))));
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngStream::new(3);
        let c = Corruptor::AdditiveGaussian { sigma: 1.0 };
        let out = c.corrupt(&vec![0.0; 1_000_000], &mut rng).unwrap().values;
        let n = out.len() as f64;
        let mean = out.iter().sum::<f64>() / n;
        let var = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.004, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn salt_pepper_pmf_two_branches() {
        // kept w.p. 0.5, or corrupted and resampled to the same value w.p. 0.25
        let c = Corruptor::SaltPepper { rate: 0.5 };
        assert_eq!(c.density(&[1.0], &[1.0]).unwrap(), 0.75);
        assert_eq!(c.density(&[0.0], &[1.0]).unwrap(), 0.25);
    }

    #[test]
    fn gaussian_density_at_mean() {
        let c = Corruptor::AdditiveGaussian { sigma: 1.0 };
        let x = [0.3, -1.0, 2.0];
        let expected = libm::pow(core::f64::consts::TAU, -1.5);
        assert!((c.density(&x, &x).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn local_uniform_bounded_support() {
        let c = Corruptor::LocalUniform { epsilon: 1.0 };
        assert_eq!(c.density(&[2.5, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(c.density(&[0.5, -0.5], &[0.0, 0.0]).unwrap(), 0.25);
        let mut rng = RngStream::new(4);
        let x = [0.0, 10.0, -3.0];
        for _ in 0..1000 {
            let t = c.corrupt(&x, &mut rng).unwrap().values;
            assert!(t.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1.0));
        }
    }

    #[test]
    fn subset_mask_density_unsupported() {
        let c = Corruptor::SubsetMask { subset_size: 1 };
        assert!(matches!(c.density(&[0.0], &[0.0]), Err(GsnError::Unsupported(_))));
    }

    #[test]
    fn subset_mask_marks_uniform_subset() {
        let c = Corruptor::SubsetMask { subset_size: 2 };
        let mut rng = RngStream::new(5);
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            let out = c.corrupt(&x, &mut rng).unwrap();
            assert_eq!(out.missing.len(), 2);
            for (i, v) in out.values.iter().enumerate() {
                if out.missing.contains(&i) {
                    assert_eq!(*v, 0.0);
                    counts[i] += 1;
                } else {
                    assert_eq!(*v, x[i]);
                }
            }
        }
        for cnt in counts {
            assert!((cnt as f64 / 40_000.0 - 0.5).abs() < 0.01);
        }
        assert!(c.corrupt(&[1.0], &mut rng).is_err());
    }

    #[test]
    fn validate_parameters() {
        assert!(Corruptor::SaltPepper { rate: 1.2 }.validate().is_err());
        assert!(Corruptor::AdditiveGaussian { sigma: 0.0 }.validate().is_err());
        assert!(Corruptor::LocalUniform { epsilon: -1.0 }.validate().is_err());
        assert!(Corruptor::SubsetMask { subset_size: 0 }.validate().is_err());
    }

    #[test]
    fn salt_pepper_pmf_sums_to_one() {
        for d in 1..=3 {
            for rate in [0.0, 0.3, 0.5, 1.0] {
                let c = Corruptor::SaltPepper { rate };
                for s in 0..1 << d {
                    let x = bits(s, d);
                    let total: f64 = (0..1 << d).map(|t| c.density(&bits(t, d), &x).unwrap()).sum();
                    assert!((total - 1.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn salt_pepper_samples_match_pmf_chi_square() {
        let d = 4;
        let n = 100_000;
        let c = Corruptor::SaltPepper { rate: 0.4 };
        let x = bits(0b1010, d);
        let mut rng = RngStream::new(6);
        let mut counts = vec![0usize; 1 << d];
        for _ in 0..n {
            let t = c.corrupt(&x, &mut rng).unwrap().values;
            let idx = t.iter().enumerate().map(|(i, v)| (*v as usize) << i).sum::<usize>();
            counts[idx] += 1;
        }
        let chi2: f64 = (0..1 << d)
            .map(|s| {
                let e = n as f64 * c.density(&bits(s, d), &x).unwrap();
                (counts[s] as f64 - e).powi(2) / e
            })
            .sum();
        // 15 degrees of freedom; the 0.999 quantile is 37.7
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }

    #[test]
    fn continuous_densities_integrate_to_one() {
        // importance sampling with a broader Gaussian proposal around x
        let mut rng = RngStream::new(7);
        let x = [0.2, -0.4];
        let n = 400_000;
        for (c, scale) in [
            (Corruptor::AdditiveGaussian { sigma: 0.8 }, 0.8),
            (Corruptor::LocalUniform { epsilon: 0.5 }, 0.5),
        ] {
            let s = 1.5 * scale;
            let proposal = Corruptor::AdditiveGaussian { sigma: s };
            let mut acc = 0.0;
            for _ in 0..n {
                let t = [x[0] + s * rng.normal(), x[1] + s * rng.normal()];
                acc += c.density(&t, &x).unwrap() / proposal.density(&t, &x).unwrap();
            }
            let integral = acc / n as f64;
            assert!((integral - 1.0).abs() < 0.01, "{c:?}: {integral}");
        }
    }
}
