//! Dense row-major matrix/vector arithmetic and the symmetric positive
//! definite solves the closed-form estimators are built on.
//!
//! Everything here is deliberately small and deterministic: plain loops,
//! no BLAS backend, no threading. Results are bit-reproducible across runs
//! on the same target.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    /// A Cholesky pivot came out non-positive. The matrix is not positive
    /// definite; callers that can tolerate rank deficiency should add a
    /// ridge term and retry.
    #[error("matrix is not positive definite (non-positive pivot at row {row})")]
    NotPositiveDefinite { row: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
}

/// Dense vector of finite `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self, NumericsError> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { index });
        }
        Ok(Self { data })
    }

    /// Construction for values produced by internal arithmetic, which is
    /// finite-preserving. Checked in debug builds only.
    pub(crate) fn new_unchecked(data: Vec<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite entry");
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Concatenates two vectors, e.g. a label vector with imputed labels.
    pub fn concat(&self, tail: &Vector) -> Vector {
        let mut data = self.data.clone();
        data.extend_from_slice(&tail.data);
        Vector { data }
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

/// Dense matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::EntryCount {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn new_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count mismatch");
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite entry");
        Self { rows, cols, data }
    }

    /// Loader-internal constructor that tolerates NaN markers for missing
    /// cells. Every other path requires finite entries.
    pub(crate) fn with_missing_markers(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count mismatch");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Test-friendly construction from row slices.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Self::new_unchecked(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self * rhs`, plain triple loop in a cache-friendly order.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul: inner dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lhs_row = self.row(i);
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row(k);
                for (o, &b) in out_row.iter_mut().zip(rhs_row.iter()) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * v`.
    pub fn matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.cols, v.len(), "matvec: dimension mismatch");
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut acc = 0.0;
            for (a, b) in self.row(i).iter().zip(v.as_slice()) {
                acc += a * b;
            }
            out.push(acc);
        }
        Vector::new_unchecked(out)
    }

    /// `self^T * v` without forming the transpose.
    pub fn transpose_matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.rows, v.len(), "transpose_matvec: dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let s = v[i];
            if s == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += s * a;
            }
        }
        Vector::new_unchecked(out)
    }

    /// Stacks `top` over `bottom`.
    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Matrix {
        assert_eq!(top.cols, bottom.cols, "vstack: column count mismatch");
        let mut data = Vec::with_capacity(top.data.len() + bottom.data.len());
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Matrix {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        }
    }

    /// Copies a contiguous range of columns into a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        let mut out = Matrix::zeros(self.rows, end - start);
        for i in 0..self.rows {
            let src = &self.row(i)[start..end];
            out.row_mut(i).copy_from_slice(src);
        }
        out
    }
}

/// Gram matrix `X^T X`. The upper triangle is computed once and mirrored,
/// so the result is symmetric down to the bit level.
pub fn gram(x: &Matrix) -> Matrix {
    let d = x.cols();
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for r in 0..x.rows() {
                let row = x.row(r);
                acc += row[i] * row[j];
            }
            out.set(i, j, acc);
            out.set(j, i, acc);
        }
    }
    out
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Factor once, then solve against any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

/// Pivots below this fraction of the original diagonal entry are treated as
/// non-positive; rounding can leave an exactly singular matrix with a pivot
/// a few ulps either side of zero.
const PIVOT_RELATIVE_FLOOR: f64 = 1e-12;

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self, NumericsError> {
        assert_eq!(a.rows(), a.cols(), "cholesky: matrix must be square");
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let original = a.get(j, j);
            let mut diag = original;
            for k in 0..j {
                let v = l.get(j, k);
                diag -= v * v;
            }
            // Non-positive (or NaN) pivot: not positive definite.
            if !(diag > PIVOT_RELATIVE_FLOOR * original) {
                return Err(NumericsError::NotPositiveDefinite { row: j });
            }
            let pivot = diag.sqrt();
            l.set(j, j, pivot);
            for i in (j + 1)..n {
                let mut acc = a.get(i, j);
                for k in 0..j {
                    acc -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, acc / pivot);
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `A x = b` via forward/back substitution.
    pub fn solve_vec(&self, b: &Vector) -> Vector {
        let n = self.dim();
        assert_eq!(b.len(), n, "solve_vec: dimension mismatch");
        let mut x: Vec<f64> = b.as_slice().to_vec();
        // L z = b
        for i in 0..n {
            let mut acc = x[i];
            let row = self.l.row(i);
            for (k, xv) in x.iter().enumerate().take(i) {
                acc -= row[k] * xv;
            }
            x[i] = acc / row[i];
        }
        // L^T x = z
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in (i + 1)..n {
                acc -= self.l.get(k, i) * x[k];
            }
            x[i] = acc / self.l.get(i, i);
        }
        Vector::new_unchecked(x)
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        assert_eq!(b.rows(), n, "solve_mat: dimension mismatch");
        let mut out = Matrix::zeros(n, b.cols());
        let mut col = vec![0.0; n];
        for j in 0..b.cols() {
            for i in 0..n {
                col[i] = b.get(i, j);
            }
            let solved = self.solve_vec(&Vector::new_unchecked(col.clone()));
            for i in 0..n {
                out.set(i, j, solved[i]);
            }
        }
        out
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn spd_solve_vec(a: &Matrix, b: &Vector) -> Result<Vector, NumericsError> {
    Ok(Cholesky::new(a)?.solve_vec(b))
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn spd_solve_mat(a: &Matrix, b: &Matrix) -> Result<Matrix, NumericsError> {
    Ok(Cholesky::new(a)?.solve_mat(b))
}

const POWER_ITERATION_CAP: usize = 200;
const POWER_ITERATION_INFLATION: f64 = 1.01;

/// Upper bound on the largest eigenvalue of a symmetric PSD matrix.
///
/// Power iteration from the normalized all-ones vector, capped at 200
/// iterations, inflated by 1% so the returned value dominates the true
/// spectral radius once the iteration has settled. If the all-ones start
/// is annihilated by `H`, the basis vectors are tried in order; if every
/// column is zero the matrix is zero and the bound is 0.
pub fn spectral_bound(h: &Matrix) -> f64 {
    assert_eq!(h.rows(), h.cols(), "spectral_bound: matrix must be square");
    let n = h.rows();
    if n == 0 {
        return 0.0;
    }
    let start = Vector::new_unchecked(vec![1.0 / (n as f64).sqrt(); n]);
    let mut v = start;
    if h.matvec(&v).norm() == 0.0 {
        let mut found = None;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let e = Vector::new_unchecked(e);
            if h.matvec(&e).norm() > 0.0 {
                found = Some(e);
                break;
            }
        }
        match found {
            Some(e) => v = e,
            None => return 0.0,
        }
    }
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATION_CAP {
        let hv = h.matvec(&v);
        let norm = hv.norm();
        if norm == 0.0 {
            break;
        }
        let next = Vector::new_unchecked(hv.iter().map(|x| x / norm).collect());
        let rayleigh = next.dot(&h.matvec(&next));
        let settled = (rayleigh - lambda).abs() <= 1e-13 * rayleigh.abs().max(1.0);
        lambda = rayleigh;
        v = next;
        if settled {
            break;
        }
    }
    lambda.max(0.0) * POWER_ITERATION_INFLATION
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn gram_identity_is_identity() {
        let x = Matrix::identity(2);
        assert_eq!(gram(&x), Matrix::identity(2));
    }

    #[test]
    fn gram_hand_multiplication() {
        let x = Matrix::from_rows(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0]]);
        let g = gram(&x);
        assert_eq!(g, Matrix::from_rows(&[&[3.0, 3.0], &[3.0, 5.0]]));
    }

    #[test]
    fn gram_single_row_is_outer_product() {
        let (a, b) = (1.5, -2.0);
        let x = Matrix::from_rows(&[&[a, b]]);
        let g = gram(&x);
        assert_eq!(g.get(0, 0), a * a);
        assert_eq!(g.get(0, 1), a * b);
        assert_eq!(g.get(1, 0), a * b);
        assert_eq!(g.get(1, 1), b * b);
        // rank 1: determinant zero up to rounding
        assert_close(g.get(0, 0) * g.get(1, 1) - g.get(0, 1) * g.get(1, 0), 0.0, 1e-12);
    }

    #[test]
    fn gram_is_bit_symmetric() {
        let x = Matrix::from_rows(&[
            &[0.3, -1.7, 2.9],
            &[1.1, 0.2, -0.4],
            &[-2.2, 0.9, 0.5],
            &[0.7, 1.3, -1.9],
        ]);
        let g = gram(&x);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn spd_solve_identity_returns_rhs() {
        let a = Matrix::identity(3);
        let b = Vector::new(vec![4.0, -1.0, 0.5]).unwrap();
        let x = spd_solve_vec(&a, &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn spd_solve_matches_analytic_2x2_inverse() {
        // A = [[3,3],[3,5]], b = (1,2); A^{-1} = [[5,-3],[-3,3]]/6
        let a = Matrix::from_rows(&[&[3.0, 3.0], &[3.0, 5.0]]);
        let b = Vector::new(vec![1.0, 2.0]).unwrap();
        let x = spd_solve_vec(&a, &b).unwrap();
        assert_close(x[0], -1.0 / 6.0, 1e-14);
        assert_close(x[1], 0.5, 1e-14);
    }

    #[test]
    fn spd_solve_rejects_singular_matrix() {
        let a = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let b = Vector::new(vec![1.0, 2.0]).unwrap();
        match spd_solve_vec(&a, &b) {
            Err(NumericsError::NotPositiveDefinite { row }) => assert_eq!(row, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn spd_solve_residual_on_random_spd_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let n = 2 + (trial % 5);
            let mut b = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    b.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            // B^T B + I/2 keeps the system comfortably positive definite.
            let mut a = gram(&b);
            for i in 0..n {
                a.set(i, i, a.get(i, i) + 0.5);
            }
            let rhs =
                Vector::new((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let x = spd_solve_vec(&a, &rhs).unwrap();
            let residual: f64 = a
                .matvec(&x)
                .iter()
                .zip(rhs.iter())
                .map(|(l, r)| (l - r) * (l - r))
                .sum::<f64>()
                .sqrt();
            assert!(residual <= 1e-8 * (1.0 + rhs.norm()), "residual {residual}");
        }
    }

    #[test]
    fn spd_solve_matrix_rhs_matches_columnwise() {
        let a = Matrix::from_rows(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let b = Matrix::from_rows(&[&[1.0, 0.0, 2.0], &[0.0, 1.0, -1.0]]);
        let x = spd_solve_mat(&a, &b).unwrap();
        for j in 0..3 {
            let col = Vector::new(vec![b.get(0, j), b.get(1, j)]).unwrap();
            let xcol = spd_solve_vec(&a, &col).unwrap();
            assert_eq!(x.get(0, j), xcol[0]);
            assert_eq!(x.get(1, j), xcol[1]);
        }
    }

    #[test]
    fn spectral_bound_scaled_identity() {
        let mut h = Matrix::identity(4);
        for i in 0..4 {
            h.set(i, i, 2.0);
        }
        let b = spectral_bound(&h);
        assert!((2.0..=2.02).contains(&b), "bound {b}");
    }

    #[test]
    fn spectral_bound_diagonal_spectrum() {
        let mut h = Matrix::zeros(3, 3);
        h.set(0, 0, 1.0);
        h.set(1, 1, 5.0);
        h.set(2, 2, 3.0);
        let b = spectral_bound(&h);
        assert!((5.0..=5.05).contains(&b), "bound {b}");
    }

    #[test]
    fn spectral_bound_zero_matrix_is_zero() {
        assert_eq!(spectral_bound(&Matrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn spectral_bound_survives_ones_in_null_space() {
        // H * (1,1) = 0 yet the top eigenvalue is 2.
        let h = Matrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let b = spectral_bound(&h);
        assert!((2.0..=2.0201).contains(&b), "bound {b}");
    }

    /// Jacobi eigenvalue sweep; the independent oracle for spectra.
    fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
        let n = m.rows();
        let mut a = m.clone();
        for _ in 0..100 {
            let mut off = 0.0;
            let (mut p, mut q) = (0, 1);
            for i in 0..n {
                for j in (i + 1)..n {
                    if a.get(i, j).abs() > off {
                        off = a.get(i, j).abs();
                        p = i;
                        q = j;
                    }
                }
            }
            if off < 1e-13 {
                break;
            }
            let theta = 0.5 * (2.0 * a.get(p, q)).atan2(a.get(p, p) - a.get(q, q));
            let (c, s) = (theta.cos(), theta.sin());
            let mut next = a.clone();
            for k in 0..n {
                let akp = c * a.get(k, p) + s * a.get(k, q);
                let akq = -s * a.get(k, p) + c * a.get(k, q);
                next.set(k, p, akp);
                next.set(k, q, akq);
            }
            a = next.clone();
            for k in 0..n {
                let apk = c * a.get(p, k) + s * a.get(q, k);
                let aqk = -s * a.get(p, k) + c * a.get(q, k);
                next.set(p, k, apk);
                next.set(q, k, aqk);
            }
            a = next;
        }
        (0..n).map(|i| a.get(i, i)).collect()
    }

    #[test]
    fn spectral_bound_dominates_jacobi_oracle_on_random_psd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut b = Matrix::zeros(4, 4);
            for i in 0..4 {
                for j in 0..4 {
                    b.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let h = gram(&b);
            let bound = spectral_bound(&h);
            let max_eig = jacobi_eigenvalues(&h)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                bound >= max_eig - 1e-10,
                "bound {bound} below oracle max eigenvalue {max_eig}"
            );
            assert!(bound <= max_eig * 1.0101 + 1e-12, "bound {bound} too loose");
        }
    }

    #[test]
    fn spectral_bound_dominates_rayleigh_quotients() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut b = Matrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                b.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let h = gram(&b);
        let bound = spectral_bound(&h);
        for _ in 0..100 {
            let v = Vector::new((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            if v.norm() == 0.0 {
                continue;
            }
            let quotient = h.matvec(&v).norm() / v.norm();
            assert!(bound >= quotient - 1e-10, "bound {bound} < quotient {quotient}");
        }
    }

    #[test]
    fn matrix_constructor_rejects_non_finite() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(NumericsError::NonFinite { index: 1 })
        ));
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0, 2.0, 3.0]),
            Err(NumericsError::EntryCount { expected: 4, got: 3 })
        ));
    }
}
