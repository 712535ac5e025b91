//! Sylvester equation `P·X + X·Q = C` with symmetric PSD coefficients.
//!
//! Both coefficients are Gram matrices in every call the gradient adjustment
//! makes, so diagonalizing each one with the Jacobi solver is enough: in the
//! joint eigenbasis the equation decouples entrywise.

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix};

const SYMMETRY_REL_TOL: f64 = 1e-10;
const DENOMINATOR_REL_FLOOR: f64 = 1e-12;

/// Coefficients of `P·X + X·Q = C`, all `r×r`.
#[derive(Debug, Clone)]
pub struct SylvesterProblem {
    pub p: Matrix,
    pub q: Matrix,
    pub c: Matrix,
}

impl SylvesterProblem {
    pub fn new(p: Matrix, q: Matrix, c: Matrix) -> Result<Self> {
        let r = p.rows();
        for mat in [&p, &q, &c] {
            if mat.shape() != (r, r) {
                return Err(Error::DimensionMismatch {
                    op: "sylvester",
                    left: (r, r),
                    right: mat.shape(),
                });
            }
        }
        for (name, mat) in [("p", &p), ("q", &q)] {
            let asym = (mat - &mat.transpose()).frob_norm();
            if asym > SYMMETRY_REL_TOL * mat.frob_norm().max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidMatrix(format!(
                    "sylvester coefficient {name} is not symmetric (‖{name}−{name}ᵀ‖ = {asym:e})"
                )));
            }
        }
        Ok(Self { p, q, c })
    }

    /// `‖P·X + X·Q − C‖_F`.
    pub fn residual(&self, x: &Matrix) -> Result<f64> {
        let lhs = &self.p.matmul(x)? + &x.matmul(&self.q)?;
        Ok((&lhs - &self.c).frob_norm())
    }
}

/// Solves the problem after adding `damping·I` to `P`.
///
/// Errors when some eigenvalue sum `λᵢ + μⱼ` falls below
/// `1e-12·(‖P‖_F + ‖Q‖_F)`; no silent regularization happens here.
pub fn solve_sylvester(prob: &SylvesterProblem, damping: f64) -> Result<Matrix> {
    if damping < 0.0 || !damping.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sylvester damping must be finite and >= 0, got {damping}"
        )));
    }
    let p = prob.p.add_diag(damping);
    let ep = sym_eig(&p)?;
    let eq = sym_eig(&prob.q)?;
    let floor = DENOMINATOR_REL_FLOOR * (p.frob_norm() + prob.q.frob_norm());

    let u = &ep.vectors;
    let v = &eq.vectors;
    let rotated = u.t_matmul(&prob.c)?.matmul(v)?;
    let r = rotated.rows();
    let mut scaled = Matrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            let denom = ep.values[i] + eq.values[j];
            if !(denom > floor) || denom == 0.0 {
                return Err(Error::SharedEigenvalue {
                    i,
                    j,
                    lambda: ep.values[i],
                    mu: eq.values[j],
                    floor,
                });
            }
            scaled.set(i, j, rotated.get(i, j) / denom);
        }
    }
    u.matmul(&scaled)?.matmul_t(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn scalar_equation() {
        let prob = SylvesterProblem::new(m(&[&[1.0]]), m(&[&[1.0]]), m(&[&[-1.0]])).unwrap();
        let x = solve_sylvester(&prob, 0.0).unwrap();
        assert!((x.get(0, 0) + 0.5).abs() < 1e-15);
        assert!(prob.residual(&x).unwrap() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let p = m(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let q = m(&[&[1.0, -0.2], &[-0.2, 3.0]]);
        let prob = SylvesterProblem::new(p, q, Matrix::zeros(2, 2)).unwrap();
        assert!(solve_sylvester(&prob, 0.0).unwrap().max_abs() < 1e-300);
    }

    #[test]
    fn diagonal_closed_form() {
        let prob = SylvesterProblem::new(
            Matrix::diag(&[1.0, 2.0]),
            Matrix::diag(&[3.0, 4.0]),
            m(&[&[4.0, 5.0], &[5.0, 6.0]]),
        )
        .unwrap();
        let x = solve_sylvester(&prob, 0.0).unwrap();
        let expected = Matrix::from_fn(2, 2, |_, _| 1.0);
        assert!((&x - &expected).frob_norm() < 1e-14);
        assert!(prob.residual(&x).unwrap() < 1e-13);
    }

    #[test]
    fn shared_eigenvalue_is_reported() {
        let prob =
            SylvesterProblem::new(Matrix::zeros(2, 2), Matrix::diag(&[0.0, 1.0]), Matrix::identity(2))
                .unwrap();
        match solve_sylvester(&prob, 0.0) {
            Err(Error::SharedEigenvalue { i, j, .. }) => assert_eq!((i, j), (0, 0)),
            other => panic!("unexpected {other:?}"),
        }
        // damping lifts P off zero
        assert!(solve_sylvester(&prob, 1e-3).is_ok());
    }

    #[test]
    fn rejects_asymmetric_or_misshaped() {
        let asym = m(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(SylvesterProblem::new(asym, Matrix::identity(2), Matrix::identity(2)).is_err());
        assert!(SylvesterProblem::new(
            Matrix::identity(2),
            Matrix::identity(3),
            Matrix::identity(2)
        )
        .is_err());
    }
}
