use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{GsnError, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded, counter-addressable random stream (ChaCha8 keystream).
///
/// The state is fully described by `(seed, counter)`: [`RngStream::at`]
/// rebuilds a stream positioned anywhere in the keystream. A stream must not
/// be shared between threads; [`RngStream::fork`] hands out independent
/// children instead.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream with the given seed, advanced to `counter` 64-bit draws.
    pub fn at(seed: u64, counter: u64) -> Self {
        let mut s = Self::new(seed);
        s.inner.set_word_pos(u128::from(counter) * 2);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit draws consumed so far.
    pub fn counter(&self) -> u64 {
        (self.inner.get_word_pos() / 2) as u64
    }

    /// `n` child streams with pairwise distinct sub-seeds.
    ///
    /// The sub-seeds are derived from the parent's `(seed, counter)`, and
    /// the parent advances by one draw so that successive forks differ.
    pub fn fork(&mut self, n: usize) -> Vec<RngStream> {
        let base = mix64(self.seed ^ mix64(self.counter().wrapping_add(GOLDEN_GAMMA)));
        self.next_u64();
        (0..n as u64)
            .map(|i| RngStream::new(base.wrapping_add(i.wrapping_mul(GOLDEN_GAMMA))))
            .collect()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_pos(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Standard normal draw (Box–Muller, one variate per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_pos();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; the bias is below 2^-64 · n
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Index drawn from a discrete distribution given by (unnormalized) weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        // rounding can leave u marginally above the last weight
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Geometric draw on `{1, 2, …}` with success probability `p`.
pub fn draw_geometric(p: f64, rng: &mut RngStream) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(GsnError::Param { name: "p", value: p });
    }
    if p == 1.0 {
        return Ok(1);
    }
    let u = rng.uniform_pos();
    let k = libm::floor(libm::log(u) / libm::log1p(-p));
    Ok(1 + k as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn at_restores_position() {
        let mut a = RngStream::new(7);
        for _ in 0..13 {
            a.next_u64();
        }
        assert_eq!(a.counter(), 13);
        let mut b = RngStream::at(7, 13);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn fork_gives_distinct_streams() {
        let mut parent = RngStream::new(1);
        let mut kids = parent.fork(4);
        let firsts: Vec<u64> = kids.iter_mut().map(|k| k.next_u64()).collect();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(kids[i].seed(), kids[j].seed());
                assert_ne!(firsts[i], firsts[j]);
            }
        }
        let again = parent.fork(4);
        assert_ne!(again[0].seed(), kids[0].seed());
    }

    #[test]
    fn geometric_p_one_is_one() {
        let mut rng = RngStream::new(5);
        for _ in 0..1000 {
            assert_eq!(draw_geometric(1.0, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn geometric_rejects_bad_p() {
        let mut rng = RngStream::new(5);
        assert!(draw_geometric(0.0, &mut rng).is_err());
        assert!(draw_geometric(1.5, &mut rng).is_err());
        assert!(draw_geometric(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn geometric_half_matches_closed_form() {
        let mut rng = RngStream::new(2024);
        let n = 1_000_000;
        let mut ones = 0usize;
        let mut total = 0usize;
        for _ in 0..n {
            let k = draw_geometric(0.5, &mut rng).unwrap();
            assert!(k >= 1);
            ones += usize::from(k == 1);
            total += k;
        }
        let p1 = ones as f64 / n as f64;
        let mean = total as f64 / n as f64;
        assert!((p1 - 0.5).abs() < 0.002, "P(k=1) = {p1}");
        assert!((mean - 2.0).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(9);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut rng = RngStream::new(3);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[rng.below(5)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 50_000.0 - 0.2).abs() < 0.01);
        }
    }
}
