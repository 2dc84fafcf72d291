//! Minimal dense complex linear algebra: row-major matrices, the handful of
//! products the detectors need, a Hermitian positive-definite solver, and a
//! power-iteration spectral norm.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of rows `start..end`.
    pub fn row_block(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Stacks blocks vertically. All blocks must share a column count.
    pub fn vstack(blocks: &[Self]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    got: b.cols,
                });
            }
            rows += b.rows;
            data.extend_from_slice(&b.data);
        }
        Ok(Self { rows, cols, data })
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(Complex::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// `Aᴴ v`.
    pub fn mul_adjoint_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![Complex::zero(); self.cols];
        for (r, vr) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * vr;
            }
        }
        out
    }

    /// `AᴴA`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ai = row[i].conj();
                for j in 0..n {
                    g.data[i * n + j] += ai * row[j];
                }
            }
        }
        g
    }

    /// Squared Euclidean norm of every column.
    pub fn column_norms_sqr(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.norm_sqr();
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|a| a.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a = a.scale(s);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn norm_sqr<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// `a - b` elementwise.
pub fn sub<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Vec<Complex<T>> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Solves `A x = b` for Hermitian positive-definite `A` by Cholesky factorization.
pub fn cholesky_solve<T: Real>(a: &CMatrix<T>, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: a.cols(),
        });
    }
    if b.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: b.len(),
        });
    }
    // Lower-triangular L with A = L Lᴴ.
    let mut l = CMatrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::Solver(format!(
                "matrix is not positive definite (pivot {j} = {d})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex::new(djj, T::zero());
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s.unscale(djj);
        }
    }
    // Forward: L w = b.
    let mut w = b.to_vec();
    for i in 0..n {
        let mut s = w[i];
        for k in 0..i {
            s -= l[(i, k)] * w[k];
        }
        w[i] = s.unscale(l[(i, i)].re);
    }
    // Backward: Lᴴ x = w.
    let mut x = w;
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)].conj() * x[k];
        }
        x[i] = s.unscale(l[(i, i)].re);
    }
    Ok(x)
}

/// Spectral norm of a Hermitian positive-semidefinite matrix by power iteration.
pub fn spectral_norm_psd<T: Real>(a: &CMatrix<T>, max_iter: usize, tol: T) -> T {
    spectral_norm_psd_op(a.cols(), |v| a.mul_vec(v), max_iter, tol)
}

/// Power iteration on an arbitrary Hermitian PSD operator given as a closure.
pub fn spectral_norm_psd_op<T: Real>(
    n: usize,
    mut apply: impl FnMut(&[Complex<T>]) -> Vec<Complex<T>>,
    max_iter: usize,
    tol: T,
) -> T {
    if n == 0 {
        return T::zero();
    }
    // Deterministic, non-degenerate start vector.
    let mut v: Vec<Complex<T>> = (0..n)
        .map(|i| Complex::new(T::one(), T::lit(0.1 * (i as f64 + 1.0))))
        .collect();
    let nv = norm_sqr(&v).sqrt();
    v.iter_mut().for_each(|a| *a = a.unscale(nv));
    let mut lambda = T::zero();
    for _ in 0..max_iter {
        let w = apply(&v);
        let nw = norm_sqr(&w).sqrt();
        if nw == T::zero() {
            return T::zero();
        }
        let converged = (nw - lambda).abs() <= tol * nw;
        lambda = nw;
        v = w.into_iter().map(|a| a.unscale(nw)).collect();
        if converged {
            break;
        }
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn gram_of_identity_is_identity() {
        let i = CMatrix::<f64>::identity(3);
        assert_eq!(i.gram(), i);
        assert_relative_eq!(i.frobenius_norm(), 3f64.sqrt());
    }

    #[test]
    fn cholesky_solves_small_hermitian_system() {
        // A = [[4, 1+i], [1-i, 3]], b = A * (1, -i).
        let a = CMatrix::from_row_major(2, 2, vec![c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)]).unwrap();
        let x_true = [c(1.0, 0.0), c(0.0, -1.0)];
        let b = a.mul_vec(&x_true);
        let x = cholesky_solve(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert_relative_eq!(u.re, v.re, epsilon = 1e-12);
            assert_relative_eq!(u.im, v.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = CMatrix::<f64>::zeros(2, 2);
        assert!(matches!(cholesky_solve(&a, &[c(1.0, 0.0); 2]), Err(Error::Solver(_))));
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let mut a = CMatrix::<f64>::identity(3);
        a[(1, 1)] = c(5.0, 0.0);
        a[(2, 2)] = c(2.0, 0.0);
        assert_relative_eq!(spectral_norm_psd(&a, 500, 1e-14), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn adjoint_product_matches_explicit() {
        let a = CMatrix::from_fn(3, 2, |r, k| c(r as f64 + 1.0, k as f64 - 0.5));
        let v = [c(1.0, 2.0), c(-1.0, 0.5), c(0.25, -3.0)];
        let got = a.mul_adjoint_vec(&v);
        for k in 0..2 {
            let want: Complex<f64> = (0..3).map(|r| a[(r, k)].conj() * v[r]).sum();
            assert_relative_eq!(got[k].re, want.re, epsilon = 1e-12);
            assert_relative_eq!(got[k].im, want.im, epsilon = 1e-12);
        }
    }
}
