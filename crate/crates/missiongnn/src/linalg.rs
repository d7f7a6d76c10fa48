//! Minimal row-major dense matrix used by the GNN and temporal stacks.
//!
//! The whole numeric stack is generic over [`Scalar`] so that training runs
//! in `f32` while verification (finite differences, reference forwards) runs
//! the same code in `f64`.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type for the numeric stack.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, panicking only on genuinely
    /// unrepresentable values (never for finite constants).
    fn from_f64c(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must match shape");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    /// `self · b` with an i-k-j loop for cache-friendly row-major access.
    pub fn matmul(&self, b: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, b.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for (k, &a) in arow.iter().enumerate() {
                let brow = b.row(k);
                for j in 0..b.cols {
                    orow[j] += a * brow[j];
                }
            }
        }
        out
    }

    /// `self · bᵀ`.
    pub fn matmul_bt(&self, b: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, b.cols, "matmul_bt shape mismatch");
        let mut out = Mat::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for j in 0..b.rows {
                let brow = b.row(j);
                let mut acc = F::zero();
                for k in 0..self.cols {
                    acc += arow[k] * brow[k];
                }
                orow[j] = acc;
            }
        }
        out
    }

    /// `selfᵀ · b`, accumulated into `out` (used for weight gradients).
    pub fn matmul_at_accum(&self, b: &Mat<F>, out: &mut Mat<F>) {
        assert_eq!(self.rows, b.rows, "matmul_at shape mismatch");
        assert_eq!(out.rows, self.cols);
        assert_eq!(out.cols, b.cols);
        for r in 0..self.rows {
            let arow = self.row(r);
            let brow = b.row(r);
            for (i, &a) in arow.iter().enumerate() {
                let orow = out.row_mut(i);
                for j in 0..b.cols {
                    orow[j] += a * brow[j];
                }
            }
        }
    }

    /// Adds `v` to every row.
    pub fn add_row_vec(&mut self, v: &[F]) {
        assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            let row = self.row_mut(i);
            for (x, &b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[F]> {
        self.data.chunks_exact(self.cols.max(1))
    }
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Converts a slice between scalar types through `f64`.
pub fn cast_slice<A: Scalar, B: Scalar>(xs: &[A]) -> Vec<B> {
    xs.iter()
        .map(|x| B::from_f64c(x.to_f64().expect("finite")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_against_triple_loop() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        let mut want = Mat::<f64>::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..3 {
                    let v = want.get(i, j) + a.get(i, k) * b.get(k, j);
                    want.set(i, j, v);
                }
            }
        }
        assert_eq!(c, want);
    }

    #[test]
    fn matmul_bt_matches_explicit_transpose() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(4, 3, (0..12).map(|x| x as f64).collect());
        let got = a.matmul_bt(&b);
        let mut bt = Mat::zeros(3, 4);
        for i in 0..4 {
            for j in 0..3 {
                bt.set(j, i, b.get(i, j));
            }
        }
        assert_eq!(got, a.matmul(&bt));
    }

    #[test]
    fn matmul_at_accum_matches_transpose_product() {
        let a = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 4, (0..12).map(|x| x as f64 * 0.5).collect());
        let mut got = Mat::zeros(2, 4);
        a.matmul_at_accum(&b, &mut got);
        let mut at = Mat::zeros(2, 3);
        for i in 0..3 {
            for j in 0..2 {
                at.set(j, i, a.get(i, j));
            }
        }
        assert_eq!(got, at.matmul(&b));
    }
}
