//! Closed-form LoRA gradient adjustment.
//!
//! Given the raw factor gradients `g_a_lora = s·Bᵀ·g` and
//! `g_b_lora = s·g·Aᵀ`, the adjusted pair
//!
//! ```text
//! g_a = (1/s²)·(BᵀB)⁻¹·g_a_lora + X·A
//! g_b = (1/s²)·[I − B(BᵀB)⁻¹Bᵀ]·g_b_lora·(AAᵀ)⁻¹ − B·X
//! ```
//!
//! makes the equivalent gradient `s·B·g_a + s·g_b·A` the Frobenius-nearest
//! point to `g` reachable through the factors, for every `r×r` matrix `X`.
//! The choice of `X` only moves the factor updates, never the equivalent
//! gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frob_inner, numerical_rank, spd_inverse, Matrix, DEFAULT_RANK_TOL};
use crate::lora::LoraLayer;
use crate::sylvester::{solve_sylvester, SylvesterProblem};

/// Raw LoRA gradients of one layer and, when known, the full gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    /// `r×n`
    pub g_a_lora: Matrix,
    /// `m×r`
    pub g_b_lora: Matrix,
    /// `m×n`
    pub g_full: Option<Matrix>,
}

impl GradBundle {
    /// Largest deviation from `g_a_lora = s·Bᵀg`, `g_b_lora = s·g·Aᵀ`,
    /// relative to the size of the expected values. `None` without `g_full`.
    pub fn consistency_residual(&self, layer: &LoraLayer) -> Option<f64> {
        let g = self.g_full.as_ref()?;
        let expected = lora_raw_grads(layer, g).ok()?;
        let ra = (&self.g_a_lora - &expected.g_a_lora).frob_norm()
            / expected.g_a_lora.frob_norm().max(1.0);
        let rb = (&self.g_b_lora - &expected.g_b_lora).frob_norm()
            / expected.g_b_lora.frob_norm().max(1.0);
        Some(ra.max(rb))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XStrategy {
    Zero,
    Symmetry,
    #[default]
    Sylvester,
}

impl XStrategy {
    pub const ALL: [XStrategy; 3] = [XStrategy::Zero, XStrategy::Symmetry, XStrategy::Sylvester];

    pub fn name(self) -> &'static str {
        match self {
            XStrategy::Zero => "zero",
            XStrategy::Symmetry => "symmetry",
            XStrategy::Sylvester => "sylvester",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Tikhonov damping on both Gram matrices.
    #[default]
    Damp,
    /// Raw LoRA gradients while `B` is exactly rank zero.
    Passthrough,
}

/// How Gram matrices are regularized before inversion.
///
/// The shift added to a Gram matrix `G` of size `r` is
/// `rel_epsilon·trace(G)/r`, or `rel_epsilon` itself when `G = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingPolicy {
    pub rel_epsilon: f64,
    pub fallback: Fallback,
}

impl Default for DampingPolicy {
    fn default() -> Self {
        Self {
            rel_epsilon: 1e-8,
            fallback: Fallback::Damp,
        }
    }
}

impl DampingPolicy {
    /// No damping at all; requires full-rank factors.
    pub fn exact() -> Self {
        Self {
            rel_epsilon: 0.0,
            fallback: Fallback::Damp,
        }
    }

    pub fn passthrough() -> Self {
        Self {
            fallback: Fallback::Passthrough,
            ..Self::default()
        }
    }

    pub fn shift_for(&self, gram: &Matrix) -> f64 {
        let tr = gram.trace();
        if tr > 0.0 {
            self.rel_epsilon * tr / gram.rows() as f64
        } else {
            self.rel_epsilon
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_epsilon >= 0.0) || !self.rel_epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "damping rel_epsilon must be >= 0, got {}",
                self.rel_epsilon
            )));
        }
        Ok(())
    }
}

/// Adjusted factor gradients together with the `X` that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedGrads {
    pub g_a: Matrix,
    pub g_b: Matrix,
    pub x: Matrix,
    /// `None` when `X` was supplied by the caller.
    pub x_strategy: Option<XStrategy>,
    /// Raw LoRA gradients were returned unchanged (rank-zero `B` under
    /// [`Fallback::Passthrough`]).
    pub passthrough: bool,
}

/// Per-step quantities shared by the adjustment, the `X` strategies and the
/// certificate.
struct Projection {
    s: f64,
    bb_inv: Matrix,
    aa_inv: Matrix,
    bb_shift: f64,
    /// `(1/s²)·(BᵀB)⁻¹·g_a_lora`
    ga0: Matrix,
    /// `(1/s²)·[I − B(BᵀB)⁻¹Bᵀ]·g_b_lora·(AAᵀ)⁻¹`
    gb0: Matrix,
}

impl Projection {
    fn new(layer: &LoraLayer, bundle: &GradBundle, policy: &DampingPolicy) -> Result<Self> {
        policy.validate()?;
        let s = layer.scaling();
        let inv_s2 = 1.0 / (s * s);
        let bb = layer.b.t_matmul(&layer.b)?;
        let aa = layer.a.matmul_t(&layer.a)?;
        let bb_shift = policy.shift_for(&bb);
        let bb_inv = spd_inverse(&bb, bb_shift)?;
        let aa_inv = spd_inverse(&aa, policy.shift_for(&aa))?;

        let ga0 = bb_inv.matmul(&bundle.g_a_lora)?.scale(inv_s2);
        // [I − B(BᵀB)⁻¹Bᵀ]·g_b_lora without forming the m×m projector.
        let along_b = layer.b.matmul(&bb_inv.matmul(&layer.b.t_matmul(&bundle.g_b_lora)?)?)?;
        let gb0 = (&bundle.g_b_lora - &along_b).matmul(&aa_inv)?.scale(inv_s2);
        Ok(Self {
            s,
            bb_inv,
            aa_inv,
            bb_shift,
            ga0,
            gb0,
        })
    }

    fn choose_x(&self, layer: &LoraLayer, bundle: &GradBundle, strategy: XStrategy) -> Result<Matrix> {
        let r = layer.rank();
        match strategy {
            XStrategy::Zero => Ok(Matrix::zeros(r, r)),
            XStrategy::Sylvester => {
                let p = layer.b.t_matmul(&layer.b)?;
                let q = layer.a.matmul_t(&layer.a)?;
                let c = -&self.ga0.matmul_t(&layer.a)?;
                let prob = SylvesterProblem::new(p, q, c)?;
                solve_sylvester(&prob, self.bb_shift)
            }
            XStrategy::Symmetry => {
                // −(1/(2s²))·(BᵀB)⁻¹·Bᵀ·g_b_lora·(AAᵀ)⁻¹
                let inner = layer.b.t_matmul(&bundle.g_b_lora)?;
                let x = self.bb_inv.matmul(&inner)?.matmul(&self.aa_inv)?;
                Ok(x.scale(-0.5 / (self.s * self.s)))
            }
        }
        .map_err(|e| Error::Strategy {
            strategy: strategy.name(),
            source: Box::new(e),
        })
    }

    fn combine(&self, layer: &LoraLayer, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let g_a = &self.ga0 + &x.matmul(&layer.a)?;
        let g_b = &self.gb0 - &layer.b.matmul(x)?;
        Ok((g_a, g_b))
    }
}

fn check_bundle_shapes(layer: &LoraLayer, bundle: &GradBundle) -> Result<()> {
    let (m, n) = layer.shape();
    let r = layer.rank();
    if bundle.g_a_lora.shape() != (r, n) {
        return Err(Error::DimensionMismatch {
            op: "g_a_lora",
            left: (r, n),
            right: bundle.g_a_lora.shape(),
        });
    }
    if bundle.g_b_lora.shape() != (m, r) {
        return Err(Error::DimensionMismatch {
            op: "g_b_lora",
            left: (m, r),
            right: bundle.g_b_lora.shape(),
        });
    }
    if let Some(g) = &bundle.g_full {
        if g.shape() != (m, n) {
            return Err(Error::DimensionMismatch {
                op: "g_full",
                left: (m, n),
                right: g.shape(),
            });
        }
    }
    Ok(())
}

fn wants_passthrough(layer: &LoraLayer, policy: &DampingPolicy) -> bool {
    policy.fallback == Fallback::Passthrough && numerical_rank(&layer.b, DEFAULT_RANK_TOL) == 0
}

/// Chain-rule gradients of the factors: `s·Bᵀ·g` and `s·g·Aᵀ`.
pub fn lora_raw_grads(layer: &LoraLayer, g_full: &Matrix) -> Result<GradBundle> {
    if g_full.shape() != layer.shape() {
        return Err(Error::DimensionMismatch {
            op: "lora_raw_grads",
            left: layer.shape(),
            right: g_full.shape(),
        });
    }
    let s = layer.scaling();
    Ok(GradBundle {
        g_a_lora: layer.b.t_matmul(g_full)?.scale(s),
        g_b_lora: g_full.matmul_t(&layer.a)?.scale(s),
        g_full: Some(g_full.clone()),
    })
}

/// `s·B·g_a + s·g_b·A`: the update a factor step induces on `W`.
pub fn equivalent_gradient(layer: &LoraLayer, g_a: &Matrix, g_b: &Matrix) -> Result<Matrix> {
    let (m, n) = layer.shape();
    let r = layer.rank();
    if g_a.shape() != (r, n) {
        return Err(Error::DimensionMismatch {
            op: "equivalent_gradient g_a",
            left: (r, n),
            right: g_a.shape(),
        });
    }
    if g_b.shape() != (m, r) {
        return Err(Error::DimensionMismatch {
            op: "equivalent_gradient g_b",
            left: (m, r),
            right: g_b.shape(),
        });
    }
    let s = layer.scaling();
    Ok((&layer.b.matmul(g_a)? + &g_b.matmul(&layer.a)?).scale(s))
}

/// Selects `X` for the adjustment.
pub fn choose_x(
    layer: &LoraLayer,
    bundle: &GradBundle,
    strategy: XStrategy,
    policy: &DampingPolicy,
) -> Result<Matrix> {
    check_bundle_shapes(layer, bundle)?;
    Projection::new(layer, bundle, policy)?.choose_x(layer, bundle, strategy)
}

/// Adjusts the raw gradients with `X` picked by `strategy`.
pub fn adjust(
    layer: &LoraLayer,
    bundle: &GradBundle,
    strategy: XStrategy,
    policy: &DampingPolicy,
) -> Result<AdjustedGrads> {
    check_bundle_shapes(layer, bundle)?;
    if wants_passthrough(layer, policy) {
        return Ok(passthrough(layer, bundle, Some(strategy)));
    }
    let proj = Projection::new(layer, bundle, policy)?;
    let x = proj.choose_x(layer, bundle, strategy)?;
    let (g_a, g_b) = proj.combine(layer, &x)?;
    Ok(AdjustedGrads {
        g_a,
        g_b,
        x,
        x_strategy: Some(strategy),
        passthrough: false,
    })
}

/// Adjusts the raw gradients with a caller-supplied `X`.
pub fn adjust_with_x(
    layer: &LoraLayer,
    bundle: &GradBundle,
    x: &Matrix,
    policy: &DampingPolicy,
) -> Result<AdjustedGrads> {
    check_bundle_shapes(layer, bundle)?;
    let r = layer.rank();
    if x.shape() != (r, r) {
        return Err(Error::DimensionMismatch {
            op: "adjust_with_x",
            left: (r, r),
            right: x.shape(),
        });
    }
    if wants_passthrough(layer, policy) {
        return Ok(passthrough(layer, bundle, None));
    }
    let proj = Projection::new(layer, bundle, policy)?;
    let (g_a, g_b) = proj.combine(layer, x)?;
    Ok(AdjustedGrads {
        g_a,
        g_b,
        x: x.clone(),
        x_strategy: None,
        passthrough: false,
    })
}

fn passthrough(layer: &LoraLayer, bundle: &GradBundle, strategy: Option<XStrategy>) -> AdjustedGrads {
    let r = layer.rank();
    AdjustedGrads {
        g_a: bundle.g_a_lora.clone(),
        g_b: bundle.g_b_lora.clone(),
        x: Matrix::zeros(r, r),
        x_strategy: strategy,
        passthrough: true,
    }
}

/// Tolerances used by [`loss_decrease_certificate`].
const CERT_SIGN_TOL: f64 = 1e-10;
const CERT_IDENTITY_REL_TOL: f64 = 1e-9;

/// First-order loss change of the step `A ← A − γ·g_a`, `B ← B − γ·g_b`:
///
/// ```text
/// dL = −γ·( ⟨g_a_lora, (1/s²)(BᵀB)⁻¹ g_a_lora⟩ + ⟨g_b_lora, (1/s²)[I − B(BᵀB)⁻¹Bᵀ] g_b_lora (AAᵀ)⁻¹⟩ )
/// ```
///
/// Both terms are non-negative, so `dL ≤ 0`. The value is cross-checked
/// against `−γ·(⟨g_a_lora, g_a⟩ + ⟨g_b_lora, g_b⟩)`, which must agree for any `X`.
pub fn loss_decrease_certificate(
    layer: &LoraLayer,
    bundle: &GradBundle,
    adjusted: &AdjustedGrads,
    lr: f64,
    policy: &DampingPolicy,
) -> Result<f64> {
    if !(lr >= 0.0) {
        return Err(Error::InvalidParameter(format!("lr must be >= 0, got {lr}")));
    }
    check_bundle_shapes(layer, bundle)?;
    let direct = -lr
        * (frob_inner(&bundle.g_a_lora, &adjusted.g_a)? + frob_inner(&bundle.g_b_lora, &adjusted.g_b)?);
    let closed = if adjusted.passthrough {
        -lr * (bundle.g_a_lora.frob_norm_sq() + bundle.g_b_lora.frob_norm_sq())
    } else {
        let proj = Projection::new(layer, bundle, policy)?;
        -lr * (frob_inner(&bundle.g_a_lora, &proj.ga0)? + frob_inner(&bundle.g_b_lora, &proj.gb0)?)
    };
    if closed > CERT_SIGN_TOL {
        return Err(Error::CertificateViolation(closed));
    }
    let scale = lr
        * (bundle.g_a_lora.frob_norm() * adjusted.g_a.frob_norm()
            + bundle.g_b_lora.frob_norm() * adjusted.g_b.frob_norm());
    if (closed - direct).abs() > CERT_IDENTITY_REL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidParameter(format!(
            "certificate identity broken: closed form {closed:e} vs inner products {direct:e}"
        )));
    }
    Ok(closed)
}
