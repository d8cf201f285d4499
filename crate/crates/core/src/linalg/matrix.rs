use serde::{Deserialize, Serialize};

use crate::linalg::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Invalid(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: Vec<f64>) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    /// I.i.d. standard-normal entries.
    pub fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Self {
        let data = (0..rows * cols).map(|_| rng.gaussian()).collect();
        Matrix { rows, cols, data }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// `self * b`.
    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows {
            return Err(self.shape_err("matmul", b));
        }
        Ok(gemm(
            self.rows,
            self.cols,
            b.cols,
            (&self.data, self.cols as isize, 1),
            (&b.data, b.cols as isize, 1),
        ))
    }

    /// `self^T * b` without materialising the transpose.
    pub fn t_matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.rows != b.rows {
            return Err(self.shape_err("t_matmul", b));
        }
        Ok(gemm(
            self.cols,
            self.rows,
            b.cols,
            (&self.data, 1, self.cols as isize),
            (&b.data, b.cols as isize, 1),
        ))
    }

    /// `self * b^T` without materialising the transpose.
    pub fn matmul_t(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.cols {
            return Err(self.shape_err("matmul_t", b));
        }
        Ok(gemm(
            self.rows,
            self.cols,
            b.rows,
            (&self.data, self.cols as isize, 1),
            (&b.data, 1, b.cols as isize),
        ))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with("add", b, |x, y| x + y)
    }

    pub fn sub(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with("sub", b, |x, y| x - y)
    }

    pub fn hadamard(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with("hadamard", b, |x, y| x * y)
    }

    pub fn add_assign(&mut self, b: &Matrix) -> Result<()> {
        self.check_same("add_assign", b)?;
        self.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        Ok(())
    }

    /// `self += factor * b`.
    pub fn axpy(&mut self, factor: f64, b: &Matrix) -> Result<()> {
        self.check_same("axpy", b)?;
        self.data
            .iter_mut()
            .zip(&b.data)
            .for_each(|(x, y)| *x += factor * y);
        Ok(())
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        self.map(|x| x * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, row: &Matrix) -> Result<Matrix> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(self.shape_err("add_row", row));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            out.row_mut(r)
                .iter_mut()
                .zip(&row.data)
                .for_each(|(x, y)| *x += y);
        }
        Ok(out)
    }

    /// Column sums as a `1 x cols` row.
    pub fn sum_rows(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for r in 0..self.rows {
            out.data
                .iter_mut()
                .zip(self.row(r))
                .for_each(|(acc, x)| *acc += x);
        }
        out
    }

    pub fn mean_rows(&self) -> Matrix {
        let n = self.rows.max(1) as f64;
        self.sum_rows().scale(1.0 / n)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.sum_sq().sqrt()
    }

    /// Frobenius inner product.
    pub fn dot(&self, b: &Matrix) -> Result<f64> {
        self.check_same("dot", b)?;
        Ok(self.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
    }

    pub fn max_abs_diff(&self, b: &Matrix) -> Result<f64> {
        self.check_same("max_abs_diff", b)?;
        Ok(self
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Errors with `what` in the message if any entry is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Index of the largest entry in each row.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    fn zip_with(&self, op: &'static str, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.check_same(op, b)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        })
    }

    fn check_same(&self, op: &'static str, b: &Matrix) -> Result<()> {
        if self.shape() != b.shape() {
            return Err(self.shape_err(op, b));
        }
        Ok(())
    }

    fn shape_err(&self, op: &'static str, b: &Matrix) -> Error {
        Error::Shape {
            op,
            left: self.shape(),
            right: b.shape(),
        }
    }
}

/// `m x k` times `k x n` with explicit (row, col) strides for each operand.
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize)) -> Matrix {
    let mut out = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: strides describe in-bounds views of `a`, `b` and the freshly
    // allocated `m x n` output; dimensions were checked by the callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
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
    fn identity_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&a).unwrap(), a);
    }

    #[test]
    fn column_product_matches_triple_loop() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[5.0], [6.0]]).unwrap();
        let expected = naive(&a, &b);
        assert_eq!(expected.data(), &[17.0, 39.0]);
        assert_eq!(a.matmul(&b).unwrap(), expected);
    }

    #[test]
    fn zero_times_anything() {
        let mut rng = Rng::new(3);
        let b = Matrix::gaussian(&mut rng, 4, 5);
        let p = Matrix::zeros(3, 4).matmul(&b).unwrap();
        assert_eq!(p, Matrix::zeros(3, 5));
    }

    #[test]
    fn mismatch_reports_both_shapes() {
        let err = Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).unwrap_err();
        match err {
            Error::Shape { left, right, .. } => {
                assert_eq!(left, (2, 3));
                assert_eq!(right, (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn transposed_products_agree_with_naive() {
        let mut rng = Rng::new(11);
        let a = Matrix::gaussian(&mut rng, 7, 5);
        let b = Matrix::gaussian(&mut rng, 7, 3);
        let c = Matrix::gaussian(&mut rng, 4, 5);
        let tn = a.t_matmul(&b).unwrap();
        assert!(tn.max_abs_diff(&naive(&a.transpose(), &b)).unwrap() < 1e-12);
        let nt = a.matmul_t(&c).unwrap();
        assert!(nt.max_abs_diff(&naive(&a, &c.transpose())).unwrap() < 1e-12);
        let big_a = Matrix::gaussian(&mut rng, 37, 61);
        let big_b = Matrix::gaussian(&mut rng, 61, 29);
        let diff = big_a.matmul(&big_b).unwrap().max_abs_diff(&naive(&big_a, &big_b)).unwrap();
        assert!(diff < 1e-10);
    }

    #[test]
    fn small_helpers() {
        let a = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(a.frobenius_norm(), 5.0);
        let mut rng = Rng::new(1);
        let m = Matrix::gaussian(&mut rng, 3, 4);
        assert_eq!(m.transpose().transpose(), m);
        assert_eq!(m.add(&m.scale(-1.0)).unwrap(), Matrix::zeros(3, 4));
        assert!(m.add(&Matrix::zeros(4, 3)).is_err());
        let mut bad = m.clone();
        bad.set(1, 1, f64::NAN);
        assert!(bad.check_finite("bad").is_err());
        assert!(m.check_finite("m").is_ok());
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use crate::linalg::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn transpose_of_product(seed in any::<u64>(), m in 1usize..9, k in 1usize..9, n in 1usize..9) {
                let mut rng = Rng::new(seed);
                let a = Matrix::gaussian(&mut rng, m, k);
                let b = Matrix::gaussian(&mut rng, k, n);
                let lhs = a.matmul(&b).unwrap().transpose();
                let rhs = b.transpose().matmul(&a.transpose()).unwrap();
                prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
            }

            #[test]
            fn matmul_is_associative(seed in any::<u64>(), m in 1usize..8, k in 1usize..8, l in 1usize..8, n in 1usize..8) {
                let mut rng = Rng::new(seed);
                let a = Matrix::gaussian(&mut rng, m, k);
                let b = Matrix::gaussian(&mut rng, k, l);
                let c = Matrix::gaussian(&mut rng, l, n);
                let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
                let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
                let scale = left.frobenius_norm().max(1.0);
                prop_assert!(left.max_abs_diff(&right).unwrap() / scale < 1e-9);
            }
        }
    }
}
