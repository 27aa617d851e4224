//! Dense row-major `f64` matrices and the handful of products the
//! training loops need.
//!
//! Every product has a sequential kernel that computes one output row at a
//! time. With the `parallel` feature the rows are distributed over a rayon
//! pool; since each output element is still accumulated in the same order,
//! parallel and sequential results are bitwise identical.

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many scalar multiply-adds the rayon dispatch overhead is not
/// worth paying and the parallel entry points fall back to the sequential
/// kernel. Both paths are bitwise identical, so this is purely a speed knob.
#[cfg(feature = "parallel")]
const PAR_FLOP_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::from_vec",
                expected: format!("{} values", rows * cols),
                actual: format!("{}", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from per-row slices; all rows must share a length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "Matrix::from_rows",
                    expected: format!("{cols} columns"),
                    actual: format!("{}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Copies the given rows into a new matrix, in the order given.
    pub fn gather_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// `self · other`, parallelized over output rows when available.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} vs {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        #[cfg(feature = "parallel")]
        {
            self.matmul_par(other)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.matmul_seq(other)
        }
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.rows, other.rows,
            "matmul_tn: {}x{} vs {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        #[cfg(feature = "parallel")]
        {
            self.matmul_tn_par(other)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.matmul_tn_seq(other)
        }
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.cols,
            "matmul_nt: {}x{} vs {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        #[cfg(feature = "parallel")]
        {
            self.matmul_nt_par(other)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.matmul_nt_seq(other)
        }
    }

    pub fn matmul_seq(&self, other: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows, other.cols);
        for (i, out_row) in out.data.chunks_mut(other.cols).enumerate() {
            mm_row(self.row(i), other, out_row);
        }
        out
    }

    #[cfg(feature = "parallel")]
    pub fn matmul_par(&self, other: &Matrix) -> Matrix {
        if self.rows * self.cols * other.cols < PAR_FLOP_THRESHOLD {
            return self.matmul_seq(other);
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        out.data
            .par_chunks_mut(other.cols)
            .enumerate()
            .for_each(|(i, out_row)| mm_row(self.row(i), other, out_row));
        out
    }

    pub fn matmul_tn_seq(&self, other: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.cols, other.cols);
        for (i, out_row) in out.data.chunks_mut(other.cols).enumerate() {
            mm_tn_row(self, other, i, out_row);
        }
        out
    }

    #[cfg(feature = "parallel")]
    pub fn matmul_tn_par(&self, other: &Matrix) -> Matrix {
        if self.rows * self.cols * other.cols < PAR_FLOP_THRESHOLD {
            return self.matmul_tn_seq(other);
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        out.data
            .par_chunks_mut(other.cols)
            .enumerate()
            .for_each(|(i, out_row)| mm_tn_row(self, other, i, out_row));
        out
    }

    pub fn matmul_nt_seq(&self, other: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows, other.rows);
        for (i, out_row) in out.data.chunks_mut(other.rows).enumerate() {
            mm_nt_row(self.row(i), other, out_row);
        }
        out
    }

    #[cfg(feature = "parallel")]
    pub fn matmul_nt_par(&self, other: &Matrix) -> Matrix {
        if self.rows * self.cols * other.rows < PAR_FLOP_THRESHOLD {
            return self.matmul_nt_seq(other);
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        out.data
            .par_chunks_mut(other.rows)
            .enumerate()
            .for_each(|(i, out_row)| mm_nt_row(self.row(i), other, out_row));
        out
    }

    /// Column sums, `1×cols` result flattened to a Vec.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += *v;
            }
        }
        out
    }

    /// Mean of each column.
    pub fn col_means(&self) -> Vec<f64> {
        let mut out = self.col_sums();
        let n = self.rows as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }
}

/// One row of `a · b`: accumulate over k in increasing order so the result
/// does not depend on how rows are scheduled.
fn mm_row(a_row: &[f64], b: &Matrix, out_row: &mut [f64]) {
    for (k, &aik) in a_row.iter().enumerate() {
        let b_row = b.row(k);
        for (o, &bkj) in out_row.iter_mut().zip(b_row) {
            *o += aik * bkj;
        }
    }
}

/// Row `i` of `aᵀ · b`: out[j] = Σ_n a[n,i]·b[n,j].
fn mm_tn_row(a: &Matrix, b: &Matrix, i: usize, out_row: &mut [f64]) {
    for n in 0..a.rows() {
        let ani = a.get(n, i);
        let b_row = b.row(n);
        for (o, &bnj) in out_row.iter_mut().zip(b_row) {
            *o += ani * bnj;
        }
    }
}

/// Row `i` of `a · bᵀ`: out[j] = dot(a_row, b_row_j).
fn mm_nt_row(a_row: &[f64], b: &Matrix, out_row: &mut [f64]) {
    for (j, o) in out_row.iter_mut().enumerate() {
        let b_row = b.row(j);
        let mut acc = 0.0;
        for (&x, &y) in a_row.iter().zip(b_row) {
            acc += x * y;
        }
        *o = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.0]).unwrap();
        let b = Matrix::from_vec(2, 4, vec![2.0, 1.0, 0.0, -1.0, 3.0, -2.0, 1.0, 0.5]).unwrap();
        // aᵀ (3x2) · b (2x4)
        let tn = a.matmul_tn(&b);
        let mut at = Matrix::zeros(3, 2);
        for i in 0..2 {
            for j in 0..3 {
                at.set(j, i, a.get(i, j));
            }
        }
        assert_eq!(tn, at.matmul_seq(&b));

        // a (2x3) · cᵀ where c is 4x3
        let c = Matrix::from_vec(
            4,
            3,
            vec![1.0, 0.0, 2.0, -1.0, 1.0, 0.5, 2.0, 2.0, 2.0, 0.0, -3.0, 1.0],
        )
        .unwrap();
        let nt = a.matmul_nt(&c);
        let mut ct = Matrix::zeros(3, 4);
        for i in 0..4 {
            for j in 0..3 {
                ct.set(j, i, c.get(i, j));
            }
        }
        assert_eq!(nt, a.matmul_seq(&ct));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_kernels_bitwise_match_sequential() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = Matrix::from_vec(67, 43, (0..67 * 43).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let b = Matrix::from_vec(43, 51, (0..43 * 51).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        assert_eq!(a.matmul_seq(&b), a.matmul_par(&b));

        let c = Matrix::from_vec(67, 51, (0..67 * 51).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        assert_eq!(a.matmul_tn_seq(&c), a.matmul_tn_par(&c));
        assert_eq!(c.matmul_nt_seq(&b.matmul_tn(&b)), c.matmul_nt_par(&b.matmul_tn(&b)));
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn gather_rows_copies_in_order() {
        let m = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let g = m.gather_rows(&[2, 0]);
        assert_eq!(g.data(), &[5.0, 6.0, 1.0, 2.0]);
    }
}
