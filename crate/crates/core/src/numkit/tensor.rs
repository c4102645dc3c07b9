use alloc::vec;
use alloc::vec::Vec;

use crate::{GsnError, Result};

/// Row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GsnError::Shape {
                op: "Tensor2::new",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(GsnError::Param {
                name: "tensor entry",
                value: *bad,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// A `1 × n` tensor.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(GsnError::Shape {
                    op: "Tensor2::from_rows",
                    left: (rows.len(), cols),
                    right: (1, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(GsnError::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a column vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(GsnError::Shape {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok(self.iter_rows().map(|row| dot(row, v)).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(GsnError::Shape {
                op: "sub",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Induced ∞-norm: maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.iter_rows()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Induced 1-norm: maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[r, c] = Σ_k input[r, k] · weights[k, c] + bias[c]`.
pub fn affine(input: &Tensor2, weights: &Tensor2, bias: &[f64]) -> Result<Tensor2> {
    if input.cols != weights.rows {
        return Err(GsnError::Shape {
            op: "affine",
            left: input.shape(),
            right: weights.shape(),
        });
    }
    if bias.len() != weights.cols {
        return Err(GsnError::Shape {
            op: "affine bias",
            left: weights.shape(),
            right: (1, bias.len()),
        });
    }
    let mut out = input.matmul(weights)?;
    for r in 0..out.rows {
        for (o, b) in out.row_mut(r).iter_mut().zip(bias) {
            *o += b;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineGrads {
    pub input: Tensor2,
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

/// Gradients of [`affine`] given the gradient of its output.
pub fn affine_backward(input: &Tensor2, weights: &Tensor2, grad_out: &Tensor2) -> Result<AffineGrads> {
    if grad_out.shape() != (input.rows, weights.cols) || input.cols != weights.rows {
        return Err(GsnError::Shape {
            op: "affine_backward",
            left: input.shape(),
            right: grad_out.shape(),
        });
    }
    let grad_input = grad_out.matmul(&weights.transpose())?;
    let grad_weights = input.transpose().matmul(grad_out)?;
    Ok(AffineGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_out.column_sums(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    fn naive_matmul(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn affine_identity() {
        let x = Tensor2::row_vector(vec![1.0, 2.0]);
        let out = affine(&x, &Tensor2::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_zero_weights_gives_bias() {
        let mut rng = RngStream::new(3);
        let x = Tensor2::from_fn(4, 3, |_, _| rng.normal());
        let out = affine(&x, &Tensor2::zeros(3, 2), &[0.5, -1.5]).unwrap();
        for row in out.iter_rows() {
            assert_eq!(row, &[0.5, -1.5]);
        }
    }

    #[test]
    fn affine_matches_triple_loop() {
        let mut rng = RngStream::new(11);
        let x = Tensor2::from_fn(3, 4, |_, _| rng.normal());
        let w = Tensor2::from_fn(4, 2, |_, _| rng.normal());
        let b = [0.25, -0.75];
        let out = affine(&x, &w, &b).unwrap();
        let mut expected = naive_matmul(&x, &w);
        for r in 0..3 {
            for c in 0..2 {
                expected.set(r, c, expected.get(r, c) + b[c]);
            }
        }
        // same summation order, so exact
        assert_eq!(out, expected);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let err = affine(&Tensor2::zeros(1, 3), &Tensor2::zeros(2, 2), &[0.0, 0.0]).unwrap_err();
        assert_eq!(
            err,
            GsnError::Shape {
                op: "affine",
                left: (1, 3),
                right: (2, 2)
            }
        );
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(Tensor2::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Tensor2::new(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn norms() {
        let m = Tensor2::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]).unwrap();
        assert_eq!(m.norm_inf(), 3.5);
        assert_eq!(m.norm_1(), 4.0);
    }
}
