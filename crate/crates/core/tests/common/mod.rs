//! Naive dense reference routines on `Vec<Vec<f64>>`, kept separate from the
//! library's kernels so the tests check it against independent arithmetic.

#![allow(dead_code)]

use lorapro::lora::{LoraLayer, ScalingMode};
use lorapro::Matrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type M = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn of(m: &Matrix) -> M {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect()).collect()
}

pub fn to(m: &M) -> Matrix {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    Matrix::from_vec(rows, cols, m.iter().flatten().copied().collect()).unwrap()
}

pub fn gauss(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> M {
    (0..rows).map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

pub fn zeros(rows: usize, cols: usize) -> M {
    vec![vec![0.0; cols]; rows]
}

pub fn eye(n: usize) -> M {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn t(a: &M) -> M {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn mul(a: &M, b: &M) -> M {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner, "inner dimensions");
            (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect()
        })
        .collect()
}

pub fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn sub(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
}

pub fn scale(a: &M, s: f64) -> M {
    a.iter().map(|x| x.iter().map(|v| v * s).collect()).collect()
}

pub fn frob_sq(a: &M) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

pub fn frob(a: &M) -> f64 {
    frob_sq(a).sqrt()
}

pub fn inner(a: &M, b: &M) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inv(a: &M) -> M {
    let n = a.len();
    let mut w: M = a.iter().zip(eye(n)).map(|(row, e)| row.iter().copied().chain(e).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| w[i][col].abs().total_cmp(&w[j][col].abs())).unwrap();
        w.swap(col, piv);
        let d = w[col][col];
        assert!(d != 0.0, "singular");
        for v in w[col].iter_mut() {
            *v /= d;
        }
        for i in 0..n {
            if i != col {
                let f = w[i][col];
                if f != 0.0 {
                    let pivot_row = w[col].clone();
                    for (v, p) in w[i].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    w.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// Solves `A·x = b` for a square system.
pub fn solve_vec(a: &M, b: &[f64]) -> Vec<f64> {
    let ai = inv(a);
    ai.iter().map(|row| row.iter().zip(b).map(|(x, y)| x * y).sum()).collect()
}

/// `B(BᵀB)⁻¹Bᵀ`.
pub fn col_projector(b: &M) -> M {
    mul(&mul(b, &inv(&mul(&t(b), b))), &t(b))
}

/// `Aᵀ(AAᵀ)⁻¹A`.
pub fn row_projector(a: &M) -> M {
    mul(&mul(&t(a), &inv(&mul(a, &t(a)))), a)
}

/// `‖(I − P_B)·g·(I − P_A)‖²_F`.
pub fn double_projection(b: &M, a: &M, g: &M) -> f64 {
    let m = b.len();
    let n = a[0].len();
    let left = sub(&eye(m), &col_projector(b));
    let right = sub(&eye(n), &row_projector(a));
    frob_sq(&mul(&mul(&left, g), &right))
}

/// `s·B·g_a + s·g_b·A`.
pub fn equivalent(s: f64, b: &M, a: &M, g_a: &M, g_b: &M) -> M {
    scale(&add(&mul(b, g_a), &mul(g_b, a)), s)
}

/// Zero-`X` adjusted gradients from their closed forms.
pub fn adjusted_zero(s: f64, b: &M, a: &M, g_a_lora: &M, g_b_lora: &M) -> (M, M) {
    let m = b.len();
    let bb_inv = inv(&mul(&t(b), b));
    let aa_inv = inv(&mul(a, &t(a)));
    let ga0 = scale(&mul(&bb_inv, g_a_lora), 1.0 / (s * s));
    let proj = sub(&eye(m), &col_projector(b));
    let gb0 = scale(&mul(&mul(&proj, g_b_lora), &aa_inv), 1.0 / (s * s));
    (ga0, gb0)
}

/// `P·X + X·Q = C` via the `r²×r²` Kronecker system.
pub fn kron_sylvester(p: &M, q: &M, c: &M) -> M {
    let r = p.len();
    let mut k = zeros(r * r, r * r);
    for i in 0..r {
        for j in 0..r {
            let row = i * r + j;
            for l in 0..r {
                k[row][l * r + j] += p[i][l];
                k[row][i * r + l] += q[l][j];
            }
        }
    }
    let rhs: Vec<f64> = c.iter().flatten().copied().collect();
    let x = solve_vec(&k, &rhs);
    x.chunks(r).map(<[f64]>::to_vec).collect()
}

/// Central differences of `f` at `at`.
pub fn fd_grad(f: &dyn Fn(&M) -> f64, at: &M, h: f64) -> M {
    let mut out = zeros(at.len(), at[0].len());
    for i in 0..at.len() {
        for j in 0..at[0].len() {
            let mut plus = at.clone();
            plus[i][j] += h;
            let mut minus = at.clone();
            minus[i][j] -= h;
            out[i][j] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    out
}

/// Numerical rank from the eigenvalues of the smaller Gram matrix, computed
/// with plain cyclic Jacobi.
pub fn rank(a: &M, rel_tol: f64) -> usize {
    let gram = if a.len() <= a[0].len() { mul(a, &t(a)) } else { mul(&t(a), a) };
    let n = gram.len();
    let mut w = gram;
    for _ in 0..200 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| w[i][j] * w[i][j]).sum();
        if off < 1e-30 * frob_sq(&w).max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if w[p][q] == 0.0 {
                    continue;
                }
                let theta = (w[q][q] - w[p][p]) / (2.0 * w[p][q]);
                let tt = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let tt = if theta == 0.0 { 1.0 } else { tt };
                let c = 1.0 / (tt * tt + 1.0).sqrt();
                let s = tt * c;
                for k in 0..n {
                    let (wkp, wkq) = (w[k][p], w[k][q]);
                    w[k][p] = c * wkp - s * wkq;
                    w[k][q] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let (wpk, wqk) = (w[p][k], w[q][k]);
                    w[p][k] = c * wpk - s * wqk;
                    w[q][k] = s * wpk + c * wqk;
                }
            }
        }
    }
    let sv: Vec<f64> = (0..n).map(|i| w[i][i].max(0.0).sqrt()).collect();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > rel_tol * top).count()
}

/// A test instance: layer factors, scaling and a full gradient.
pub struct Inst {
    pub layer: LoraLayer,
    pub b: M,
    pub a: M,
    pub g: M,
    pub s: f64,
}

/// `m, n ∈ {2..8}`, `r ∈ {1..3}` (at most `min(m, n)`), `s ∈ {0.5, 1, 2}`.
pub fn instance(rng: &mut ChaCha8Rng) -> Inst {
    let m = rng.gen_range(2..=8);
    let n = rng.gen_range(2..=8);
    let r = rng.gen_range(1..=3usize.min(m).min(n));
    let s = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    let w0 = gauss(m, n, rng);
    let b = gauss(m, r, rng);
    let a = gauss(r, n, rng);
    let g = gauss(m, n, rng);
    let layer = LoraLayer::new(to(&w0), to(&b), to(&a), s * r as f64, ScalingMode::Lora).unwrap();
    assert_eq!(layer.scaling(), s);
    Inst { layer, b, a, g, s }
}

pub fn instances(seed: u64, count: usize) -> Vec<Inst> {
    let mut r = rng(seed);
    (0..count).map(|_| instance(&mut r)).collect()
}

/// `|a − b| / max(|b|, floor)`.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor).max(f64::MIN_POSITIVE)
}
