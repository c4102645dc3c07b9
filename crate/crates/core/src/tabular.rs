//! Tabular chains over small discrete spaces, used both as Monte-Carlo
//! counterparts of the exact oracle and as counting-trained denoisers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::{RngStream, Tensor2};
use crate::oracle::check_column_stochastic;
use crate::trainer::Denoiser;
use crate::{GsnError, Result};

/// How a visible state index is laid out as a vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VisibleCoding {
    /// A single coordinate holding the index.
    Index,
    /// `n` binary coordinates; bit `i` of the index is coordinate `i`.
    Bits(usize),
}

impl VisibleCoding {
    pub fn dim(&self) -> usize {
        match self {
            VisibleCoding::Index => 1,
            VisibleCoding::Bits(n) => *n,
        }
    }

    pub fn encode(&self, state: usize) -> Vec<f64> {
        match self {
            VisibleCoding::Index => vec![state as f64],
            VisibleCoding::Bits(n) => (0..*n).map(|i| ((state >> i) & 1) as f64).collect(),
        }
    }

    pub fn decode(&self, x: &[f64], n_states: usize) -> Result<usize> {
        let bad = || GsnError::Domain(format!("vector {x:?} is not a state of a {n_states}-state space"));
        if x.len() != self.dim() {
            return Err(GsnError::Shape { op: "visible coding", left: (1, x.len()), right: (1, self.dim()) });
        }
        let s = match self {
            VisibleCoding::Index => {
                let v = x[0];
                if v < 0.0 || libm::trunc(v) != v {
                    return Err(bad());
                }
                v as usize
            }
            VisibleCoding::Bits(_) => {
                let mut s = 0usize;
                for (i, v) in x.iter().enumerate() {
                    match *v {
                        0.0 => {}
                        1.0 => s |= 1 << i,
                        _ => return Err(bad()),
                    }
                }
                s
            }
        };
        if s >= n_states {
            return Err(bad());
        }
        Ok(s)
    }
}

/// `x → h ~ f(·|x) → x' ~ g(·|h)`. As a denoiser, `f` is the corruption
/// and `g` the reconstruction distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularChain {
    /// `n_h × n_x`.
    pub f: Tensor2,
    /// `n_x × n_h`.
    pub g: Tensor2,
    pub coding: VisibleCoding,
}

impl TabularChain {
    pub fn new(f: Tensor2, g: Tensor2, coding: VisibleCoding) -> Result<Self> {
        if f.rows() != g.cols() || f.cols() != g.rows() {
            return Err(GsnError::Shape { op: "tabular chain", left: f.shape(), right: g.shape() });
        }
        if let VisibleCoding::Bits(n) = coding {
            if n >= usize::BITS as usize || 1usize << n != g.rows() {
                return Err(GsnError::Consistency(format!("{n} bits cannot code {} states", g.rows())));
            }
        }
        check_column_stochastic(&f, "encoder")?;
        check_column_stochastic(&g, "decoder")?;
        Ok(TabularChain { f, g, coding })
    }

    pub fn n_x(&self) -> usize {
        self.g.rows()
    }

    pub fn n_h(&self) -> usize {
        self.f.rows()
    }

    pub fn sample_hidden(&self, x: usize, rng: &mut RngStream) -> usize {
        rng.categorical(&self.f.col(x))
    }

    /// Samples `x' ~ g(·|h)` restricted to `allowed` (all states when
    /// `None`) and renormalized.
    pub fn sample_visible(&self, h: usize, allowed: Option<&[usize]>, rng: &mut RngStream) -> Result<usize> {
        match allowed {
            None => Ok(rng.categorical(&self.g.col(h))),
            Some(states) => {
                let w: Vec<f64> = states.iter().map(|x| self.g.get(*x, h)).collect();
                if w.iter().sum::<f64>() <= 0.0 {
                    return Err(GsnError::Domain(format!("hidden state {h} cannot decode into the clamped set")));
                }
                Ok(states[rng.categorical(&w)])
            }
        }
    }
}

impl Denoiser for TabularChain {
    fn corrupt_sample(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        let s = self.coding.decode(x, self.n_x())?;
        Ok(vec![self.sample_hidden(s, rng) as f64])
    }

    fn reconstruct_sample(&self, x_tilde: &[f64], _step: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        let h = VisibleCoding::Index.decode(x_tilde, self.n_h())?;
        Ok(self.coding.encode(self.sample_visible(h, None, rng)?))
    }
}

/// Maximum-likelihood `P_θ(x | x̃)` from observed `(x, x̃)` pairs.
/// Corrupted states never observed get a uniform column.
pub fn count_posterior(pairs: &[(usize, usize)], n_x: usize, n_tilde: usize) -> Result<Tensor2> {
    let mut counts = Tensor2::zeros(n_x, n_tilde);
    for &(x, t) in pairs {
        if x >= n_x {
            return Err(GsnError::Index { index: x, dim: n_x });
        }
        if t >= n_tilde {
            return Err(GsnError::Index { index: t, dim: n_tilde });
        }
        counts.set(x, t, counts.get(x, t) + 1.0);
    }
    let sums = counts.column_sums();
    Ok(Tensor2::from_fn(n_x, n_tilde, |x, t| {
        if sums[t] > 0.0 {
            counts.get(x, t) / sums[t]
        } else {
            1.0 / n_x as f64
        }
    }))
}

/// Per-variable conditionals `P(X_s = 1 | x_{-s})` over `n` binary variables.
/// `table[s][x]` is read with bit `s` of `x` ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryConditionals {
    table: Vec<Vec<f64>>,
}

impl BinaryConditionals {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        let n = table.len();
        if n == 0 {
            return Err(GsnError::Empty("conditionals"));
        }
        if n >= 20 {
            return Err(GsnError::Unsupported("tabular conditionals over 20 or more variables"));
        }
        for (s, t) in table.iter().enumerate() {
            if t.len() != 1 << n {
                return Err(GsnError::Shape { op: "conditional table", left: (s, t.len()), right: (s, 1 << n) });
            }
            if let Some(p) = t.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(GsnError::Param { name: "conditional probability", value: *p });
            }
        }
        Ok(BinaryConditionals { table })
    }

    /// The exact conditionals of a joint over `2^n` states.
    pub fn from_joint(joint: &[f64]) -> Result<Self> {
        crate::oracle::check_distribution(joint, "joint")?;
        let n = joint.len().trailing_zeros() as usize;
        if 1 << n != joint.len() {
            return Err(GsnError::Domain(format!("joint over {} states is not a power of two", joint.len())));
        }
        let table = (0..n)
            .map(|s| {
                (0..joint.len())
                    .map(|x| {
                        let on = joint[x | (1 << s)];
                        let off = joint[x & !(1 << s)];
                        if on + off > 0.0 {
                            on / (on + off)
                        } else {
                            0.5
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(table)
    }

    pub fn n_vars(&self) -> usize {
        self.table.len()
    }

    pub fn prob_one(&self, var: usize, state: usize) -> f64 {
        self.table[var][state & !(1 << var)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coding_round_trip() {
        let c = VisibleCoding::Bits(3);
        for s in 0..8 {
            assert_eq!(c.decode(&c.encode(s), 8).unwrap(), s);
        }
        assert!(c.decode(&[0.5, 0.0, 0.0], 8).is_err());
        assert!(VisibleCoding::Index.decode(&[3.0], 3).is_err());
        assert_eq!(VisibleCoding::Index.decode(&[2.0], 3).unwrap(), 2);
    }

    #[test]
    fn counting_normalizes_columns() {
        let p = count_posterior(&[(0, 0), (1, 0), (1, 0), (2, 1)], 3, 3).unwrap();
        assert_eq!(p.col(0), vec![1.0 / 3.0, 2.0 / 3.0, 0.0]);
        assert_eq!(p.col(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(p.col(2), vec![1.0 / 3.0; 3]);
        assert!(count_posterior(&[(3, 0)], 3, 3).is_err());
    }

    #[test]
    fn conditionals_from_joint() {
        let joint = [0.1, 0.2, 0.3, 0.4];
        let c = BinaryConditionals::from_joint(&joint).unwrap();
        assert_eq!(c.n_vars(), 2);
        // P(x0 = 1 | x1 = 1) = 0.4 / 0.7
        assert!((c.prob_one(0, 2) - 0.4 / 0.7).abs() < 1e-15);
        assert!((c.prob_one(0, 3) - 0.4 / 0.7).abs() < 1e-15);
        assert!((c.prob_one(1, 0) - 0.3 / 0.4).abs() < 1e-15);
    }

    #[test]
    fn bits_coding_must_cover_states() {
        let f = Tensor2::identity(3);
        assert!(TabularChain::new(f.clone(), f, VisibleCoding::Bits(2)).is_err());
    }
}
