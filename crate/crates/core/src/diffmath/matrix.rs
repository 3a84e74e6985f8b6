use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Rows are samples throughout the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Whether an operand enters a product as-is or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix buffer", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::dim("matrix row", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(v: &[T]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact(0) panics, so zero-width matrices yield empty rows
        let cols = self.cols.max(1);
        let n = self.rows;
        self.data
            .chunks_exact(cols)
            .take(if self.cols == 0 { 0 } else { n })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Horizontal concatenation `[a | b | ...]`.
    pub fn hconcat(parts: &[&Matrix<T>]) -> Result<Self> {
        let rows = parts.first().map_or(0, |m| m.rows);
        for p in parts {
            if p.rows != rows {
                return Err(Error::dim("hconcat rows", rows, p.rows));
            }
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Split columns at `at` into `(left, right)`.
    pub fn split_cols(&self, at: usize) -> (Self, Self) {
        assert!(at <= self.cols, "split point past last column");
        let mut left = Vec::with_capacity(self.rows * at);
        let mut right = Vec::with_capacity(self.rows * (self.cols - at));
        for r in 0..self.rows {
            let row = self.row(r);
            left.extend_from_slice(&row[..at]);
            right.extend_from_slice(&row[at..]);
        }
        (
            Self {
                rows: self.rows,
                cols: at,
                data: left,
            },
            Self {
                rows: self.rows,
                cols: self.cols - at,
                data: right,
            },
        )
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// `self = alpha * op(a) * op(b) + beta * self`.
    pub fn gemm(
        &mut self,
        alpha: T,
        a: &Matrix<T>,
        ta: Trans,
        b: &Matrix<T>,
        tb: Trans,
        beta: T,
    ) -> Result<()> {
        let (m, ka, rsa, csa) = strided(a, ta);
        let (kb, n, rsb, csb) = strided(b, tb);
        if ka != kb {
            return Err(Error::dim("gemm inner dimension", ka, kb));
        }
        if self.rows != m || self.cols != n {
            return Err(Error::dim("gemm output", m * n, self.rows * self.cols));
        }
        if ka == 0 {
            self.scale(beta);
            return Ok(());
        }
        T::gemm(
            m,
            ka,
            n,
            alpha,
            &a.data,
            rsa,
            csa,
            &b.data,
            rsb,
            csb,
            beta,
            &mut self.data,
            self.cols as isize,
            1,
        );
        Ok(())
    }

    /// `op(self) * op(other)` into a fresh matrix.
    pub fn matmul(&self, other: &Matrix<T>) -> Result<Self> {
        let mut out = Self::zeros(self.rows, other.cols);
        out.gemm(T::one(), self, Trans::No, other, Trans::No, T::zero())?;
        Ok(out)
    }

    /// Column sums, as a vector of length `cols`.
    pub fn col_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for row in self.iter_rows() {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

fn strided<T>(m: &Matrix<T>, t: Trans) -> (usize, usize, isize, isize) {
    match t {
        Trans::No => (m.rows, m.cols, m.cols as isize, 1),
        Trans::Yes => (m.cols, m.rows, 1, m.cols as isize),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a = Matrix::<f64>::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.5 - 1.0);
        let b = Matrix::<f64>::from_fn(3, 2, |r, c| (r as f64 + 1.0) * (c as f64 - 0.5));
        let mut out = Matrix::zeros(4, 2);
        out.gemm(1.0, &a, Trans::Yes, &b, Trans::No, 0.0).unwrap();
        let naive = a.transpose().matmul(&b).unwrap();
        for r in 0..4 {
            for c in 0..2 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += a.get(k, r) * b.get(k, c);
                }
                assert!((out.get(r, c) - acc).abs() < 1e-12);
                assert!((naive.get(r, c) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_then_split_is_identity() {
        let a = Matrix::<f32>::from_fn(2, 3, |r, c| (r * 3 + c) as f32);
        let b = Matrix::<f32>::from_fn(2, 1, |r, _| -(r as f32));
        let ab = Matrix::hconcat(&[&a, &b]).unwrap();
        let (l, r) = ab.split_cols(3);
        assert_eq!(l, a);
        assert_eq!(r, b);
    }

    #[test]
    fn mismatched_inner_dimension_is_rejected() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Dimension { .. })));
    }
}
