//! Dense vector and matrix helpers on plain `f64` slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    math::sqrt(norm_sq(a))
}

/// `‖a − b‖²`
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(dist_sq(a, b))
}

/// `a − b`
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + s·b`
pub fn add_scaled(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// `y ← y + s·x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

/// Row-major dense matrix.
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

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `A·x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ·x`, accumulated row by row.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Orthogonal factor of the Householder QR decomposition of a square matrix.
///
/// Columns are sign-corrected so that `R` has a nonnegative diagonal, which
/// makes the factor of a Gaussian matrix Haar distributed.
pub fn orthogonal_factor(a: &Matrix) -> Matrix {
    assert_eq!(a.rows(), a.cols(), "orthogonal_factor needs a square matrix");
    let n = a.rows();
    // Work column-wise so every reflector touches contiguous memory.
    let mut cols: Vec<Vec<f64>> = a.transpose().data.chunks(n).map(|c| c.to_vec()).collect();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut signs = vec![1.0; n];

    for k in 0..n {
        let mut v = cols[k][k..].to_vec();
        let alpha = norm(&v);
        if alpha == 0.0 {
            reflectors.push(None);
            continue;
        }
        let s = if v[0] >= 0.0 { -alpha } else { alpha };
        v[0] -= s;
        let vnorm = norm(&v);
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= vnorm;
        }
        for col in cols.iter_mut().skip(k) {
            reflect(&v, &mut col[k..]);
        }
        signs[k] = if cols[k][k] < 0.0 { -1.0 } else { 1.0 };
        reflectors.push(Some(v));
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the identity, one column at a time.
    let mut q = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        for k in (0..n).rev() {
            if let Some(v) = &reflectors[k] {
                reflect(v, &mut e[k..]);
            }
        }
        for i in 0..n {
            q[(i, j)] = signs[j] * e[i];
        }
    }
    q
}

/// `x ← (I − 2vvᵀ)x` for unit `v`.
fn reflect(v: &[f64], x: &mut [f64]) {
    let proj = dot(v, x);
    if proj != 0.0 {
        axpy(-2.0 * proj, v, x);
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration, stopping when the Rayleigh quotient changes by less than
/// `rel_tol` relative.
pub fn power_iteration<F>(apply: F, start: Vec<f64>, rel_tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut v = start;
    let n0 = norm(&v);
    if n0 == 0.0 || !n0.is_finite() {
        return Err(Error::Numeric("power iteration: degenerate start vector".into()));
    }
    for vi in v.iter_mut() {
        *vi /= n0;
    }
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        let rayleigh = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        if !wn.is_finite() {
            return Err(Error::Numeric("power iteration: non-finite iterate".into()));
        }
        v = w;
        for vi in v.iter_mut() {
            *vi /= wn;
        }
        if math::abs(rayleigh - estimate) <= rel_tol * math::abs(rayleigh) {
            return Ok(rayleigh);
        }
        estimate = rayleigh;
    }
    Err(Error::Numeric(alloc::format!(
        "power iteration did not converge in {max_iter} steps"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                c[(i, j)] = (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum();
            }
        }
        c
    }

    #[test]
    fn householder_factor_is_orthogonal() {
        let n = 7;
        let data: Vec<f64> = (0..n * n)
            .map(|k| ((k * 37 + 11) % 17) as f64 - 8.0 + 0.1 * k as f64)
            .collect();
        let a = Matrix::from_row_major(n, n, data);
        let q = orthogonal_factor(&a);
        let qtq = product(&q.transpose(), &q);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - want).abs() < 1e-13, "QtQ[{i},{j}]");
            }
        }
        // Qᵀ A is upper triangular with a nonnegative diagonal.
        let r = product(&q.transpose(), &a);
        for i in 0..n {
            assert!(r[(i, i)] >= 0.0);
            for j in 0..i {
                assert!(r[(i, j)].abs() < 1e-12, "R[{i},{j}] = {}", r[(i, j)]);
            }
        }
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let d = [0.5, 3.0, 1.0, 2.0];
        let top = power_iteration(
            |x| x.iter().zip(&d).map(|(a, b)| a * b).collect(),
            vec![1.0; 4],
            1e-12,
            100_000,
        )
        .unwrap();
        assert!((top - 3.0).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_reports_nonconvergence() {
        // A nearly repeated top eigenvalue converges far slower than allowed.
        let err = power_iteration(|x| vec![x[0], 0.999_999 * x[1]], vec![1.0, 1.0], 1e-15, 20);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn transpose_product_matches_explicit_transpose() {
        let a = Matrix::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = [1.0, -1.0];
        assert_eq!(a.tr_mul_vec(&x), a.transpose().mul_vec(&x));
    }
}
