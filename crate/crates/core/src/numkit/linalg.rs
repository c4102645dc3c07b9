//! Gaussian elimination with partial pivoting: linear solves, inverses and
//! numerical rank for the small dense matrices of the finite-state checks.

use alloc::vec::Vec;

use super::Tensor2;
use crate::{GsnError, Result};

const PIVOT_EPS: f64 = 1e-14;

fn check_square(a: &Tensor2, op: &'static str) -> Result<usize> {
    if a.rows() != a.cols() {
        return Err(GsnError::Shape {
            op,
            left: a.shape(),
            right: (a.cols(), a.rows()),
        });
    }
    Ok(a.rows())
}

/// Solves `A X = B` for a square `A` (columns of `B` are right-hand sides).
pub fn solve_many(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    let n = check_square(a, "solve")?;
    if b.rows() != n {
        return Err(GsnError::Shape {
            op: "solve",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let m = b.cols();
    let scale = a.data().iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1.0);
    let mut lhs = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lhs.get(i, col).abs().total_cmp(&lhs.get(j, col).abs()))
            .unwrap_or(col);
        if lhs.get(pivot, col).abs() <= PIVOT_EPS * scale {
            return Err(GsnError::Singular);
        }
        if pivot != col {
            for c in 0..n {
                let tmp = lhs.get(col, c);
                lhs.set(col, c, lhs.get(pivot, c));
                lhs.set(pivot, c, tmp);
            }
            for c in 0..m {
                let tmp = rhs.get(col, c);
                rhs.set(col, c, rhs.get(pivot, c));
                rhs.set(pivot, c, tmp);
            }
        }
        let p = lhs.get(col, col);
        for r in col + 1..n {
            let f = lhs.get(r, col) / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                lhs.set(r, c, lhs.get(r, c) - f * lhs.get(col, c));
            }
            for c in 0..m {
                rhs.set(r, c, rhs.get(r, c) - f * rhs.get(col, c));
            }
        }
    }
    let mut x = Tensor2::zeros(n, m);
    for c in 0..m {
        for r in (0..n).rev() {
            let mut s = rhs.get(r, c);
            for k in r + 1..n {
                s -= lhs.get(r, k) * x.get(k, c);
            }
            x.set(r, c, s / lhs.get(r, r));
        }
    }
    Ok(x)
}

pub fn solve(a: &Tensor2, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = Tensor2::new(b.len(), 1, b.to_vec())?;
    Ok(solve_many(a, &rhs)?.into_data())
}

pub fn inverse(a: &Tensor2) -> Result<Tensor2> {
    let n = check_square(a, "inverse")?;
    solve_many(a, &Tensor2::identity(n))
}

/// Numerical rank by row reduction with partial pivoting; pivots below
/// `tol · max|a_ij|` count as zero.
pub fn rank(a: &Tensor2, tol: f64) -> usize {
    let mut m = a.clone();
    let scale = a.data().iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let (rows, cols) = m.shape();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let pivot = (r..rows)
            .max_by(|&i, &j| m.get(i, c).abs().total_cmp(&m.get(j, c).abs()))
            .unwrap_or(r);
        if m.get(pivot, c).abs() <= tol * scale {
            continue;
        }
        for k in 0..cols {
            let tmp = m.get(r, k);
            m.set(r, k, m.get(pivot, k));
            m.set(pivot, k, tmp);
        }
        for i in r + 1..rows {
            let f = m.get(i, c) / m.get(r, c);
            for k in c..cols {
                m.set(i, k, m.get(i, k) - f * m.get(r, k));
            }
        }
        r += 1;
    }
    r
}
