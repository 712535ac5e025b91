//! Dense row-major linear algebra.
//!
//! Everything the gradient-adjustment formulas need and nothing more:
//! products, Frobenius geometry, Cholesky-based SPD solves, a cyclic Jacobi
//! symmetric eigensolver and Gram-based numerical rank. Summation order is
//! fixed (row-major), so results are bit-identical across runs.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-7;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_THRESHOLD: f64 = 1e-12;

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::from_vec(raw.rows, raw.cols, raw.data)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite entry at index {i}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from a generator `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape {rows}x{cols}");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Entrywise combination of two equally shaped matrices.
    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.expect_same_shape("zip_map", other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// `(self + selfᵀ) / 2`; requires a square matrix.
    pub fn symmetrize(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::InvalidMatrix(format!(
                "cannot symmetrize non-square {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self.get(i, j) + self.get(j, i))
        }))
    }

    /// `self + shift·I`.
    pub fn add_diag(&self, shift: f64) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out.data[i * self.cols + i] += shift;
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        gemm(self, other, false, false)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        gemm(self, other, true, false)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        gemm(self, other, false, true)
    }

    pub fn try_add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a - b)
    }

    fn expect_same_shape(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

// Operator forms panic on shape mismatch; the `try_*` methods return errors.
impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        self.try_add(rhs).expect("matrix add")
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        self.try_sub(rhs).expect("matrix sub")
    }
}

impl Mul<f64> for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: f64) -> Matrix {
        self.scale(rhs)
    }
}

impl Neg for &Matrix {
    type Output = Matrix;

    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

/// General matrix product `op(a) · op(b)` where `op` optionally transposes.
pub fn gemm(a: &Matrix, b: &Matrix, transpose_a: bool, transpose_b: bool) -> Result<Matrix> {
    let (m, k) = if transpose_a {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (k2, n) = if transpose_b {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    if k != k2 {
        return Err(Error::DimensionMismatch {
            op: "gemm",
            left: (m, k),
            right: (k2, n),
        });
    }
    let at = |i: usize, p: usize| if transpose_a { a.get(p, i) } else { a.get(i, p) };
    let bt = |p: usize, j: usize| if transpose_b { b.get(j, p) } else { b.get(p, j) };

    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = at(i, p);
            if aip == 0.0 {
                continue;
            }
            for (j, slot) in row.iter_mut().enumerate() {
                *slot += aip * bt(p, j);
            }
        }
    }
    Ok(Matrix {
        rows: m,
        cols: n,
        data: out,
    })
}

/// Frobenius inner product `Σ aᵢⱼ bᵢⱼ`.
pub fn frob_inner(a: &Matrix, b: &Matrix) -> Result<f64> {
    a.expect_same_shape("frob_inner", b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Lower Cholesky factor of `(p + pᵀ)/2 + damping·I`.
pub(crate) fn cholesky(p: &Matrix, damping: f64) -> Result<Matrix> {
    if damping < 0.0 || !damping.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "damping must be finite and >= 0, got {damping}"
        )));
    }
    let sym = p.symmetrize()?.add_diag(damping);
    let n = sym.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = sym.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                minor: j + 1,
                pivot: d,
            });
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = sym.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `(p + damping·I) · x = rhs` through a Cholesky factorization.
///
/// `p` is symmetrized as `(p + pᵀ)/2` before factoring. No explicit inverse
/// is formed unless `rhs` is the identity.
pub fn spd_solve(p: &Matrix, rhs: &Matrix, damping: f64) -> Result<Matrix> {
    if !p.is_square() {
        return Err(Error::InvalidMatrix(format!(
            "spd_solve needs a square matrix, got {}x{}",
            p.rows, p.cols
        )));
    }
    if rhs.rows != p.rows {
        return Err(Error::DimensionMismatch {
            op: "spd_solve",
            left: p.shape(),
            right: rhs.shape(),
        });
    }
    let l = cholesky(p, damping)?;
    let n = p.rows;
    let mut x = rhs.clone();
    for c in 0..rhs.cols {
        // L y = b
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// `(p + damping·I)⁻¹`, computed as a solve against the identity.
pub fn spd_inverse(p: &Matrix, damping: f64) -> Result<Matrix> {
    spd_solve(p, &Matrix::identity(p.rows), damping)
}

/// Symmetric eigendecomposition `p = V·diag(λ)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthogonal matrix whose columns are the matching eigenvectors.
    pub vectors: Matrix,
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Converges when the off-diagonal Frobenius norm drops below
/// `1e-12·‖p‖_F`; one extra polishing sweep follows so that eigenvalues of
/// (near) rank-deficient Gram matrices sit at the rounding floor.
pub fn sym_eig(p: &Matrix) -> Result<SymEig> {
    if !p.is_square() {
        return Err(Error::InvalidMatrix(format!(
            "sym_eig needs a square matrix, got {}x{}",
            p.rows, p.cols
        )));
    }
    let n = p.rows;
    let mut a = p.symmetrize()?;
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_REL_THRESHOLD * p.frob_norm();

    let mut converged_at = None;
    for sweep in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off == 0.0 {
            converged_at = Some(sweep);
            break;
        }
        if off <= threshold {
            if converged_at.is_some() {
                break;
            }
            converged_at = Some(sweep);
        }
        for pi in 0..n {
            for qi in pi + 1..n {
                jacobi_rotate(&mut a, &mut v, pi, qi);
            }
        }
    }
    if converged_at.is_none() {
        let off = off_diagonal_norm(&a);
        if off > threshold {
            return Err(Error::EigenNoConvergence {
                sweeps: JACOBI_MAX_SWEEPS,
                residual: off,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok(SymEig { values, vectors })
}

fn jacobi_rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.rows;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a.set(k, p, new_kp);
        a.set(p, k, new_kp);
        a.set(k, q, new_kq);
        a.set(q, k, new_kq);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Singular values in descending order, from the eigenvalues of the smaller
/// Gram matrix.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let gram = if m.rows <= m.cols {
        m.matmul_t(m)?
    } else {
        m.t_matmul(m)?
    };
    let eig = sym_eig(&gram)?;
    Ok(eig
        .values
        .iter()
        .rev()
        .map(|&l| l.max(0.0).sqrt())
        .collect())
}

/// Number of singular values above `rel_tol·σ₁`; zero for the zero matrix.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> usize {
    let sv = match singular_values(m) {
        Ok(sv) => sv,
        // Jacobi on a finite Gram matrix converges well inside the sweep cap.
        Err(_) => return m.rows.min(m.cols),
    };
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn naive_product(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(0, 2, vec![]).is_err());
        assert!(Matrix::from_vec(1, 1, vec![f64::NAN]).is_err());
        assert!(Matrix::from_rows(&[&[1.0, 2.0], &[3.0]]).is_err());
    }

    #[test]
    fn gemm_examples() {
        let g = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(gemm(&Matrix::identity(2), &g, false, false).unwrap(), g);

        let a = m(&[&[1.0], &[0.0]]);
        let out = gemm(&a, &g, true, false).unwrap();
        assert_eq!(out, m(&[&[1.0, 2.0]]));
        assert_eq!(out, naive_product(&a.transpose(), &g));

        let z = Matrix::zeros(3, 2);
        assert!(gemm(&z, &g, false, false).unwrap().is_zero());
    }

    #[test]
    fn gemm_transpose_flags_agree_with_naive() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.0);
        let b = Matrix::from_fn(3, 2, |i, j| (i as f64) * 0.5 - j as f64);
        let tn = gemm(&a, &b, true, false).unwrap();
        assert_eq!(tn, naive_product(&a.transpose(), &b));
        let c = Matrix::from_fn(5, 4, |i, j| (i + 2 * j) as f64 * 0.25);
        let nt = gemm(&a, &c, false, true).unwrap();
        assert_eq!(nt, naive_product(&a, &c.transpose()));
        let tt = gemm(&b, &a.transpose(), true, true).unwrap();
        assert_eq!(tt, naive_product(&b.transpose(), &a));
    }

    #[test]
    fn gemm_dimension_error_names_shapes() {
        let a = Matrix::zeros(2, 3);
        let err = gemm(&a, &a, false, false).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                op: "gemm",
                left: (2, 3),
                right: (2, 3)
            }
        );
        assert!(err.to_string().contains("(2, 3)"));
    }

    #[test]
    fn frob_inner_examples() {
        let g = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let direct: f64 = [1.0, 2.0, 3.0, 4.0].iter().map(|v| v * v).sum();
        assert_eq!(frob_inner(&g, &g).unwrap(), direct);
        assert_eq!(direct, 30.0);
        assert_eq!(frob_inner(&g, &Matrix::zeros(2, 2)).unwrap(), 0.0);
        let i2 = Matrix::identity(2);
        assert_eq!(frob_inner(&i2, &i2).unwrap(), 2.0);
        assert!((g.frob_norm() - 30f64.sqrt()).abs() < 1e-15);
        assert!(frob_inner(&g, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn spd_solve_examples() {
        let x = spd_solve(&m(&[&[2.0]]), &m(&[&[4.0]]), 0.0).unwrap();
        assert!((x.get(0, 0) - 2.0).abs() < 1e-15);

        let g = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(spd_solve(&Matrix::identity(2), &g, 0.0).unwrap(), g);

        let p = Matrix::diag(&[4.0, 9.0]);
        let inv = spd_solve(&p, &Matrix::identity(2), 0.0).unwrap();
        let residual = (&p.matmul(&inv).unwrap() - &Matrix::identity(2)).frob_norm();
        assert!(residual < 1e-12);
        assert!((inv.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((inv.get(1, 1) - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(inv.get(0, 1), 0.0);
    }

    #[test]
    fn spd_solve_reports_failing_minor() {
        let p = m(&[&[1.0, 0.0], &[0.0, -1.0]]);
        match spd_solve(&p, &Matrix::identity(2), 0.0) {
            Err(Error::NotPositiveDefinite { minor, .. }) => assert_eq!(minor, 2),
            other => panic!("unexpected {other:?}"),
        }
        // damping rescues a singular PSD matrix
        let singular = Matrix::zeros(2, 2);
        assert!(spd_solve(&singular, &Matrix::identity(2), 0.0).is_err());
        let x = spd_solve(&singular, &Matrix::identity(2), 0.5).unwrap();
        assert!((&x - &Matrix::diag(&[2.0, 2.0])).max_abs() < 1e-15);
    }

    #[test]
    fn sym_eig_examples() {
        let e = sym_eig(&Matrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);
        assert_eq!(e.vectors.get(1, 0).abs(), 1.0);
        assert_eq!(e.vectors.get(0, 1).abs(), 1.0);

        let e = sym_eig(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // λ = −1 ↔ (1, −1)/√2 up to sign
        assert!((e.vectors.get(0, 0).abs() - h).abs() < 1e-14);
        assert!((e.vectors.get(0, 0) + e.vectors.get(1, 0)).abs() < 1e-14);
        assert!((e.vectors.get(0, 1) - e.vectors.get(1, 1)).abs() < 1e-14);

        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn numerical_rank_examples() {
        assert_eq!(numerical_rank(&Matrix::zeros(4, 2), DEFAULT_RANK_TOL), 0);
        let cols = m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(numerical_rank(&cols, DEFAULT_RANK_TOL), 2);
        let u = m(&[&[1.0], &[-2.0], &[0.5]]);
        let v = m(&[&[3.0, 1.0, 0.0, -1.0]]);
        assert_eq!(numerical_rank(&u.matmul(&v).unwrap(), DEFAULT_RANK_TOL), 1);
    }

    #[test]
    fn symmetrize_and_add_diag() {
        let p = m(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert_eq!(p.symmetrize().unwrap(), m(&[&[1.0, 1.0], &[1.0, 1.0]]));
        assert_eq!(p.add_diag(1.0), m(&[&[2.0, 2.0], &[0.0, 2.0]]));
        assert!(Matrix::zeros(2, 3).symmetrize().is_err());
    }

    #[test]
    fn serde_roundtrip_validates() {
        let g = m(&[&[1.0, 2.5], &[-3.0, 1e-300]]);
        let s = serde_json::to_string(&g).unwrap();
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"rows":2,"cols":2,"data":[1.0]}"#;
        assert!(serde_json::from_str::<Matrix>(bad).is_err());
    }
}
