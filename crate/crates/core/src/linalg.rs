//! Small dense vector/matrix helpers for state dimensions in the single digits.

use crate::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row vectors. Panics if rows are ragged.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_f64_rows(rows: &[&[f64]]) -> Self {
        let converted: Vec<Vec<T>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| T::lit(v)).collect())
            .collect();
        Self::from_rows(&converted)
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `out += self * v`
    pub fn mul_vec_acc(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(v.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o += dot(self.row(i), v);
        }
    }

    /// `selfᵀ * v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Matrix<T>, s: T) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] == T::zero()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y += s * x`
pub fn axpy<T: Scalar>(s: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products() {
        let a = Matrix::<f64>::from_f64_rows(&[&[0.6, 1.2], &[-0.8, 3.4]]);
        assert_eq!(a.mul_vec(&[0.0, 2.0]), vec![2.4, 6.8]);
        let t = a.tr_mul_vec(&[1.0, 1.0]);
        approx::assert_relative_eq!(t[0], -0.2, epsilon = 1e-15);
        approx::assert_relative_eq!(t[1], 4.6, epsilon = 1e-15);
        assert!(Matrix::<f64>::identity(3).is_diagonal());
        assert!(!a.is_diagonal());
    }
}
