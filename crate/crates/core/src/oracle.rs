//! Brute-force references for the closed-form math.
//!
//! Nothing here calls into `gradadjust`'s closed forms: the optimal factor
//! gradients come from an explicit vectorized least-squares system, the
//! Sylvester reference from a dense Kronecker system solved by Gaussian
//! elimination, and gradients from central differences.

use crate::error::{Error, Result};
use crate::gradadjust::{adjust_with_x, DampingPolicy, GradBundle};
use crate::linalg::{numerical_rank, spd_inverse, spd_solve, Matrix, DEFAULT_RANK_TOL};
use crate::lora::LoraLayer;

/// Upper bound on `m·n` for the dense least-squares oracle.
pub const MAX_ORACLE_ENTRIES: usize = 4096;

const REFINEMENT_STEPS: usize = 3;

/// Vectorized form of `min ‖s·B·g_a + s·g_b·A − g‖²_F`.
///
/// Unknowns are `vec(g_a)` (`r·n`, row-major) followed by `vec(g_b)`
/// (`m·r`, row-major); rows are `vec(g̃)` in row-major order.
#[derive(Debug, Clone)]
pub struct LeastSquaresSystem {
    pub design: Matrix,
    pub rhs: Matrix,
}

impl LeastSquaresSystem {
    pub fn build(layer: &LoraLayer, g_full: &Matrix) -> Result<Self> {
        let (m, n) = layer.shape();
        let r = layer.rank();
        if g_full.shape() != (m, n) {
            return Err(Error::DimensionMismatch {
                op: "least squares target",
                left: (m, n),
                right: g_full.shape(),
            });
        }
        let s = layer.scaling();
        let cols = r * n + m * r;
        let mut design = Matrix::zeros(m * n, cols);
        for i in 0..m {
            for j in 0..n {
                let row = i * n + j;
                for k in 0..r {
                    // ∂g̃ᵢⱼ/∂(g_a)ₖⱼ = s·Bᵢₖ
                    design.set(row, k * n + j, s * layer.b.get(i, k));
                    // ∂g̃ᵢⱼ/∂(g_b)ᵢₖ = s·Aₖⱼ
                    design.set(row, r * n + i * r + k, s * layer.a.get(k, j));
                }
            }
        }
        let rhs = Matrix::from_vec(m * n, 1, g_full.data().to_vec())?;
        Ok(Self { design, rhs })
    }

    /// `‖design·x − rhs‖²`.
    pub fn objective(&self, x: &Matrix) -> Result<f64> {
        Ok((&self.design.matmul(x)? - &self.rhs).frob_norm_sq())
    }
}

/// A minimizer of the least-squares objective and its value.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub g_a: Matrix,
    pub g_b: Matrix,
    pub objective: f64,
}

/// Solves the normal equations of [`LeastSquaresSystem`] with a damping of
/// `1e-12·trace`, followed by a few rounds of iterative refinement. The minimizer is not unique (the `r²`-dimensional X family
/// lies in the null space) but the objective value is.
pub fn brute_force_optimal_grads(layer: &LoraLayer, g_full: &Matrix) -> Result<OracleSolution> {
    let (m, n) = layer.shape();
    let r = layer.rank();
    if m * n > MAX_ORACLE_ENTRIES {
        return Err(Error::InvalidParameter(format!(
            "oracle limited to m·n ≤ {MAX_ORACLE_ENTRIES}, got {}",
            m * n
        )));
    }
    let rank_b = numerical_rank(&layer.b, DEFAULT_RANK_TOL);
    let rank_a = numerical_rank(&layer.a, DEFAULT_RANK_TOL);
    if rank_b < r || rank_a < r {
        return Err(Error::RankDeficient(format!(
            "factor ranks B={rank_b}, A={rank_a} below r={r}"
        )));
    }
    let sys = LeastSquaresSystem::build(layer, g_full)?;
    let normal = sys.design.t_matmul(&sys.design)?;
    let moment = sys.design.t_matmul(&sys.rhs)?;
    let damping = 1e-12 * normal.trace().max(f64::MIN_POSITIVE);
    let mut x = spd_solve(&normal, &moment, damping)?;
    // Refinement removes the bias the damping leaves on the range.
    for _ in 0..REFINEMENT_STEPS {
        let resid = &sys.rhs - &sys.design.matmul(&x)?;
        let step = spd_solve(&normal, &sys.design.t_matmul(&resid)?, damping)?;
        x = &x + &step;
    }
    let objective = sys.objective(&x)?;
    let g_a = Matrix::from_vec(r, n, x.data()[..r * n].to_vec())?;
    let g_b = Matrix::from_vec(m, r, x.data()[r * n..].to_vec())?;
    Ok(OracleSolution { g_a, g_b, objective })
}

/// `‖(I − P_B)·g·(I − P_A)‖²_F` with `P_B = B(BᵀB)⁻¹Bᵀ` and
/// `P_A = Aᵀ(AAᵀ)⁻¹A`: the part of `g` no factor update can reach.
pub fn double_projection_residual(layer: &LoraLayer, g_full: &Matrix) -> Result<f64> {
    let (m, n) = layer.shape();
    let b = &layer.b;
    let a = &layer.a;
    let p_b = b.matmul(&spd_inverse(&b.t_matmul(b)?, 0.0)?)?.matmul_t(b)?;
    let p_a = a.t_matmul(&spd_inverse(&a.matmul_t(a)?, 0.0)?)?.matmul(a)?;
    let left = &Matrix::identity(m) - &p_b;
    let right = &Matrix::identity(n) - &p_a;
    Ok(left.matmul(g_full)?.matmul(&right)?.frob_norm_sq())
}

/// `‖g_a(X) − g_a_lora‖² + ‖g_b(X) − g_b_lora‖²` at the adjusted gradients
/// parameterized by `x`.
pub fn x_objective_scan(
    layer: &LoraLayer,
    bundle: &GradBundle,
    x: &Matrix,
    policy: &DampingPolicy,
) -> Result<f64> {
    let adj = adjust_with_x(layer, bundle, x, policy)?;
    Ok((&adj.g_a - &bundle.g_a_lora).frob_norm_sq() + (&adj.g_b - &bundle.g_b_lora).frob_norm_sq())
}

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Central differences `(f(x + h·Eᵢⱼ) − f(x − h·Eᵢⱼ)) / 2h` entrywise.
pub fn finite_diff_grad(f: impl Fn(&Matrix) -> f64, at: &Matrix, h: f64) -> Matrix {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut out = Matrix::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for i in 0..at.rows() {
        for j in 0..at.cols() {
            let x0 = at.get(i, j);
            probe.set(i, j, x0 + h);
            let up = f(&probe);
            probe.set(i, j, x0 - h);
            let down = f(&probe);
            probe.set(i, j, x0);
            out.set(i, j, (up - down) / (2.0 * h));
        }
    }
    out
}

/// Solves `P·X + X·Q = C` through the dense `r²×r²` system
/// `(P ⊗ I + I ⊗ Qᵀ)·vec(X) = vec(C)` (row-major `vec`).
pub fn kronecker_sylvester(p: &Matrix, q: &Matrix, c: &Matrix) -> Result<Matrix> {
    let r = p.rows();
    if p.shape() != (r, r) || q.shape() != (r, r) || c.shape() != (r, r) {
        return Err(Error::DimensionMismatch {
            op: "kronecker_sylvester",
            left: p.shape(),
            right: q.shape(),
        });
    }
    let dim = r * r;
    let mut sys = Matrix::zeros(dim, dim);
    for i in 0..r {
        for j in 0..r {
            let row = i * r + j;
            for k in 0..r {
                // (P·X)ᵢⱼ = Σₖ Pᵢₖ Xₖⱼ
                let col = k * r + j;
                sys.set(row, col, sys.get(row, col) + p.get(i, k));
                // (X·Q)ᵢⱼ = Σₖ Xᵢₖ Qₖⱼ
                let col = i * r + k;
                sys.set(row, col, sys.get(row, col) + q.get(k, j));
            }
        }
    }
    let rhs: Vec<f64> = c.data().to_vec();
    let x = gaussian_elimination(sys, rhs)?;
    Matrix::from_vec(r, r, x)
}

/// Dense LU solve with partial pivoting.
fn gaussian_elimination(mut a: Matrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.rows();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a.get(x, col).abs().total_cmp(&a.get(y, col).abs()))
            .expect("non-empty range");
        if a.get(pivot, col).abs() <= 1e-14 * scale {
            return Err(Error::RankDeficient(format!("singular Kronecker system at column {col}")));
        }
        if pivot != col {
            for k in 0..n {
                let tmp = a.get(col, k);
                a.set(col, k, a.get(pivot, k));
                a.set(pivot, k, tmp);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a.get(row, col) / a.get(col, col);
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a.set(row, k, a.get(row, k) - factor * a.get(col, k));
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a.get(i, k) * x[k];
        }
        x[i] = s / a.get(i, i);
    }
    Ok(x)
}
