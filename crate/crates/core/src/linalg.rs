//! Small dense and tridiagonal linear algebra, generic over the scalar type.
//!
//! Matrices here are tiny (metric tensors, Gram matrices, least-squares bases with
//! at most a handful of columns) or tridiagonal, so plain row-major storage is enough.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        Mat { rows: r, cols: c, data: rows.iter().flatten().copied().collect() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, rhs.rows);
        Self::from_fn(self.rows, rhs.cols, |i, j| {
            (0..self.cols).fold(T::zero(), |acc, k| acc + self[(i, k)] * rhs[(k, j)])
        })
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).fold(T::zero(), |acc, k| acc + self[(i, k)] * v[k]))
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec()).collect()
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Inverse by Gauss–Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Option<Mat<T>> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        for col in 0..n {
            let pivot = (col..n).max_by(|&p, &q| {
                a[(p, col)].abs().partial_cmp(&a[(q, col)].abs()).unwrap()
            })?;
            if a[(pivot, col)] == T::zero() || !a[(pivot, col)].is_finite() {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                    inv.data.swap(pivot * n + j, col * n + j);
                }
            }
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for i in 0..n {
                if i != col {
                    let factor = a[(i, col)];
                    if factor != T::zero() {
                        for j in 0..n {
                            let aij = a[(col, j)];
                            let vij = inv[(col, j)];
                            a[(i, j)] -= factor * aij;
                            inv[(i, j)] -= factor * vij;
                        }
                    }
                }
            }
        }
        Some(inv)
    }

    /// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
    pub fn cholesky(&self) -> Option<Mat<T>> {
        assert!(self.is_square());
        let n = self.rows;
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= T::zero() || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(l)
    }

    pub fn determinant(&self) -> T {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut det = T::one();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[(p, col)].abs().partial_cmp(&a[(q, col)].abs()).unwrap())
                .unwrap();
            if a[(pivot, col)] == T::zero() {
                return T::zero();
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[(col, col)];
            det *= p;
            for i in col + 1..n {
                let factor = a[(i, col)] / p;
                for j in col..n {
                    let v = a[(col, j)];
                    a[(i, j)] -= factor * v;
                }
            }
        }
        det
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as columns.
pub fn symmetric_eigen<T: Real>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    assert!(a.is_square());
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut scale = T::zero();
        for i in 0..n {
            scale += m[(i, i)] * m[(i, i)];
            for j in 0..n {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off <= eps * eps * scale.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let two = T::lit(2.0);
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Singular values (descending) by one-sided Jacobi; accurate even when the
/// condition number is large.
pub fn singular_values<T: Real>(a: &Mat<T>) -> Vec<T> {
    let (rows, cols) = (a.rows(), a.cols());
    let mut u = a.clone();
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..rows {
                    alpha += u[(i, p)] * u[(i, p)];
                    beta += u[(i, q)] * u[(i, q)];
                    gamma += u[(i, p)] * u[(i, q)];
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = (0..cols)
        .map(|j| (0..rows).fold(T::zero(), |acc, i| acc + u[(i, j)] * u[(i, j)]).sqrt())
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Least-squares solution of `A x ≈ b` (`rows ≥ cols`) by Householder QR.
///
/// Returns `x` and the residual norm `‖A x − b‖₂`, or `None` when `A` is
/// rank deficient.
pub fn least_squares<T: Real>(a: &Mat<T>, b: &[T]) -> Option<(Vec<T>, T)> {
    let (rows, cols) = (a.rows(), a.cols());
    assert!(rows >= cols && b.len() == rows);
    let mut r = a.clone();
    let mut y = b.to_vec();
    for k in 0..cols {
        let norm = (k..rows).map(|i| r[(i, k)] * r[(i, k)]).sum::<T>().sqrt();
        if norm == T::zero() {
            return None;
        }
        let alpha = if r[(k, k)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..rows).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        for j in k..cols {
            let dot: T = v.iter().enumerate().map(|(i, &vi)| vi * r[(k + i, j)]).sum();
            let f = (dot + dot) / vnorm2;
            for (i, &vi) in v.iter().enumerate() {
                r[(k + i, j)] -= f * vi;
            }
        }
        let dot: T = v.iter().enumerate().map(|(i, &vi)| vi * y[k + i]).sum();
        let f = (dot + dot) / vnorm2;
        for (i, &vi) in v.iter().enumerate() {
            y[k + i] -= f * vi;
        }
    }
    let mut x = vec![T::zero(); cols];
    for k in (0..cols).rev() {
        if r[(k, k)] == T::zero() {
            return None;
        }
        let s: T = (k + 1..cols).map(|j| r[(k, j)] * x[j]).sum();
        x[k] = (y[k] - s) / r[(k, k)];
    }
    let residual = y[cols..].iter().map(|&v| v * v).sum::<T>().sqrt();
    Some((x, residual))
}

/// Symmetric tridiagonal matrix with `diag` of length n and `off` of length n−1.
#[derive(Clone, Debug)]
pub struct SymTridiagonal<T> {
    pub diag: Vec<T>,
    pub off: Vec<T>,
}

impl<T: Real> SymTridiagonal<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence / LDLᵀ inertia).
    pub fn count_below(&self, x: T) -> usize {
        let mut count = 0;
        let mut d = T::one();
        let tiny = T::min_positive_value().sqrt();
        for i in 0..self.diag.len() {
            let b2 = if i == 0 { T::zero() } else { self.off[i - 1] * self.off[i - 1] };
            d = self.diag[i] - x - if i == 0 { T::zero() } else { b2 / d };
            if d == T::zero() {
                d = -tiny;
            }
            if d < T::zero() {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin interval enclosing the spectrum.
    pub fn gershgorin(&self) -> (T, T) {
        let n = self.diag.len();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..n {
            let mut r = T::zero();
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k` smallest eigenvalues by bisection on the Sturm count.
    ///
    /// Returns `None` if bisection fails to reach the requested relative tolerance.
    pub fn smallest_eigenvalues(&self, k: usize, rel_tol: T) -> Option<Vec<T>> {
        let k = k.min(self.len());
        let (lo, hi) = self.gershgorin();
        let mut out = Vec::with_capacity(k);
        for idx in 0..k {
            // find x with count_below(x) == idx and count_below(x') == idx+1 limit
            let mut a = lo;
            let mut b = hi;
            let mut converged = false;
            for _ in 0..400 {
                let mid = T::lit(0.5) * (a + b);
                if mid <= a || mid >= b {
                    converged = true;
                    break;
                }
                if self.count_below(mid) > idx {
                    b = mid;
                } else {
                    a = mid;
                }
                if (b - a) <= rel_tol * a.abs().max(b.abs()).max(T::one()) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return None;
            }
            out.push(T::lit(0.5) * (a + b));
        }
        Some(out)
    }

    /// Solves `(shift·I + scale·A) x = rhs` by the Thomas algorithm.
    pub fn solve_shifted(&self, scale: T, shift: T, rhs: &[T]) -> Vec<T> {
        let n = self.diag.len();
        let mut c_prime = vec![T::zero(); n];
        let mut d_prime = vec![T::zero(); n];
        let mut x = vec![T::zero(); n];
        if n == 0 {
            return x;
        }
        let b0 = shift + scale * self.diag[0];
        c_prime[0] = if n > 1 { scale * self.off[0] / b0 } else { T::zero() };
        d_prime[0] = rhs[0] / b0;
        for i in 1..n {
            let a = scale * self.off[i - 1];
            let b = shift + scale * self.diag[i];
            let m = b - a * c_prime[i - 1];
            c_prime[i] = if i + 1 < n { scale * self.off[i] / m } else { T::zero() };
            d_prime[i] = (rhs[i] - a * d_prime[i - 1]) / m;
        }
        x[n - 1] = d_prime[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d_prime[i] - c_prime[i] * x[i + 1];
        }
        x
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_two_by_two() {
        // [[1,2],[2,1]] has eigenvalues -1 and 3
        let a = Mat::<f64>::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let (vals, vecs) = symmetric_eigen(&a);
        assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let v0 = vecs.column(0);
        let av = a.mul_vec(&v0);
        assert!((av[0] + v0[0]).abs() < 1e-14 && (av[1] + v0[1]).abs() < 1e-14);
    }

    #[test]
    fn inverse_cholesky_determinant() {
        let a = Mat::<f64>::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ]);
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-14);
            }
        }
        let l = a.cholesky().unwrap();
        let llt = l.matmul(&l.transpose());
        assert!(llt.data.iter().zip(&a.data).all(|(x, y)| (x - y).abs() < 1e-14));
        let det = a.determinant();
        let d2 = l[(0, 0)] * l[(1, 1)] * l[(2, 2)];
        assert!((det - d2 * d2).abs() < 1e-12);
        assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).cholesky().is_none());
    }

    #[test]
    fn singular_values_of_diagonal_scaling() {
        let a = Mat::<f64>::from_rows(&[vec![3.0, 0.0], vec![0.0, 1e-9], vec![0.0, 0.0]]);
        let s = singular_values(&a);
        assert!((s[0] - 3.0).abs() < 1e-15);
        assert!((s[1] - 1e-9).abs() < 1e-22);
    }

    #[test]
    fn tridiagonal_bisection_matches_closed_form() {
        // -u'' on n interior points: eigenvalues 4 sin^2(k pi / (2(n+1)))
        let n = 50;
        let t = SymTridiagonal { diag: vec![2.0; n], off: vec![-1.0; n - 1] };
        let ev = t.smallest_eigenvalues(5, 1e-15).unwrap();
        for (k, v) in ev.iter().enumerate() {
            let s = ((k + 1) as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin();
            assert!((v - 4.0 * s * s).abs() < 1e-13);
        }
        let rhs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = t.solve_shifted(0.5, 1.0, &rhs);
        let back: Vec<f64> =
            t.mul_vec(&x).iter().zip(&x).map(|(ax, xi)| 0.5 * ax + xi).collect();
        assert!(back.iter().zip(&rhs).all(|(a, b)| (a - b).abs() < 1e-11));
    }

    #[test]
    fn least_squares_fits_a_line() {
        let a = Mat::<f64>::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]);
        let (x, res) = least_squares(&a, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14 && res < 1e-13);
        let (_, res) = least_squares(&a, &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((res - 0.8f64.sqrt()).abs() < 1e-14);
    }
}