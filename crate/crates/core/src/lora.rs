//! LoRA reparameterization `W = W0 + s·B·A`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_RANK: usize = 8;
pub const DEFAULT_ALPHA: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// `s = α / r`
    Lora,
    /// `s = α / √r`
    #[default]
    Rslora,
}

impl ScalingMode {
    pub fn scaling(self, alpha: f64, rank: usize) -> f64 {
        match self {
            ScalingMode::Lora => alpha / rank as f64,
            ScalingMode::Rslora => alpha / (rank as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// `A ~ U(−1/√n, 1/√n)`, `B = 0`.
    Standard,
    /// Both factors i.i.d. `N(0, 1/r)`; full rank from the first step.
    GaussianBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitScheme {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitScheme {
    pub fn standard(seed: u64) -> Self {
        Self {
            kind: InitKind::Standard,
            seed,
        }
    }

    pub fn gaussian_both(seed: u64) -> Self {
        Self {
            kind: InitKind::GaussianBoth,
            seed,
        }
    }
}

/// Frozen base weight plus trainable factors.
///
/// Shapes: `w0` is `m×n`, `b` is `m×r`, `a` is `r×n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayer")]
pub struct LoraLayer {
    pub w0: Matrix,
    pub b: Matrix,
    pub a: Matrix,
    pub alpha: f64,
    pub scaling_mode: ScalingMode,
}

#[derive(Deserialize)]
struct RawLayer {
    w0: Matrix,
    b: Matrix,
    a: Matrix,
    alpha: f64,
    scaling_mode: ScalingMode,
}

impl TryFrom<RawLayer> for LoraLayer {
    type Error = Error;

    fn try_from(raw: RawLayer) -> Result<Self> {
        LoraLayer::new(raw.w0, raw.b, raw.a, raw.alpha, raw.scaling_mode)
    }
}

impl LoraLayer {
    pub fn new(w0: Matrix, b: Matrix, a: Matrix, alpha: f64, scaling_mode: ScalingMode) -> Result<Self> {
        let (m, n) = w0.shape();
        let r = a.rows();
        if b.shape() != (m, r) {
            return Err(Error::DimensionMismatch {
                op: "lora factor b",
                left: (m, r),
                right: b.shape(),
            });
        }
        if a.cols() != n {
            return Err(Error::DimensionMismatch {
                op: "lora factor a",
                left: (r, n),
                right: a.shape(),
            });
        }
        if r > m.min(n) {
            return Err(Error::RankTooLarge { rank: r, m, n });
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            w0,
            b,
            a,
            alpha,
            scaling_mode,
        })
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    /// `(m, n)` of the full weight.
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.w0.shape()
    }

    #[inline]
    pub fn scaling(&self) -> f64 {
        self.scaling_mode.scaling(self.alpha, self.rank())
    }

    /// `s·B·A`.
    pub fn delta(&self) -> Matrix {
        self.b
            .matmul(&self.a)
            .expect("factor shapes checked at construction")
            .scale(self.scaling())
    }

    /// `W0 + s·B·A`.
    pub fn effective_weight(&self) -> Matrix {
        &self.w0 + &self.delta()
    }

    /// Scales `W0` by `factor` and each adapter factor by `√factor`.
    pub(crate) fn decay_in_place(&mut self, factor: f64) {
        let root = factor.sqrt();
        self.w0 = self.w0.scale(factor);
        self.b = self.b.scale(root);
        self.a = self.a.scale(root);
    }
}

/// Builds an adapter around `w0` with the given rank and initialization.
pub fn init_layer(
    w0: Matrix,
    rank: usize,
    alpha: f64,
    mode: ScalingMode,
    scheme: InitScheme,
) -> Result<LoraLayer> {
    let (m, n) = w0.shape();
    if rank == 0 || rank > m.min(n) {
        return Err(Error::RankTooLarge { rank, m, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    let (b, a) = match scheme.kind {
        InitKind::Standard => {
            let bound = 1.0 / (n as f64).sqrt();
            let dist = Uniform::new(-bound, bound);
            let a = Matrix::from_fn(rank, n, |_, _| dist.sample(&mut rng));
            (Matrix::zeros(m, rank), a)
        }
        InitKind::GaussianBoth => {
            let dist = Normal::new(0.0, 1.0 / (rank as f64).sqrt()).expect("positive std");
            let b = Matrix::from_fn(m, rank, |_, _| dist.sample(&mut rng));
            let a = Matrix::from_fn(rank, n, |_, _| dist.sample(&mut rng));
            (b, a)
        }
    };
    LoraLayer::new(w0, b, a, alpha, mode)
}

/// Decoupled weight decay split across the factorization:
/// `W0 ← (1−γλ)·W0`, `B ← √(1−γλ)·B`, `A ← √(1−γλ)·A`, so the effective
/// weight scales by `1−γλ`.
pub fn apply_decayed_merge_step(layer: &LoraLayer, lr: f64, weight_decay: f64) -> Result<LoraLayer> {
    let factor = decay_factor(lr, weight_decay)?;
    let mut out = layer.clone();
    if factor != 1.0 {
        out.decay_in_place(factor);
    }
    Ok(out)
}

pub(crate) fn decay_factor(lr: f64, weight_decay: f64) -> Result<f64> {
    let gl = lr * weight_decay;
    if !(0.0..1.0).contains(&gl) {
        return Err(Error::InvalidParameter(format!(
            "lr·weight_decay must lie in [0, 1), got {gl}"
        )));
    }
    Ok(1.0 - gl)
}

/// Random base weight with i.i.d. `N(0, std²)` entries.
pub fn random_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Matrix {
    let dist = Normal::new(0.0, std).expect("finite std");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{numerical_rank, DEFAULT_RANK_TOL};

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn standard_init_zeroes_b() {
        let layer = init_layer(Matrix::identity(4), 2, 16.0, ScalingMode::Rslora, InitScheme::standard(7)).unwrap();
        assert_eq!(layer.b, Matrix::zeros(4, 2));
        assert_eq!(numerical_rank(&layer.b, DEFAULT_RANK_TOL), 0);
        assert_eq!(numerical_rank(&layer.a, DEFAULT_RANK_TOL), 2);
        let bound = 0.5;
        assert!(layer.a.data().iter().all(|v| v.abs() < bound));
        assert_eq!(layer.effective_weight(), Matrix::identity(4));
    }

    #[test]
    fn gaussian_both_is_full_rank() {
        let layer =
            init_layer(Matrix::zeros(6, 5), 3, 16.0, ScalingMode::Lora, InitScheme::gaussian_both(1)).unwrap();
        assert_eq!(numerical_rank(&layer.b, DEFAULT_RANK_TOL), 3);
        assert_eq!(numerical_rank(&layer.a, DEFAULT_RANK_TOL), 3);
    }

    #[test]
    fn scaling_modes() {
        let rs = ScalingMode::Rslora.scaling(16.0, 8);
        assert!((rs - 16.0 / 8f64.sqrt()).abs() < 1e-15);
        assert!((rs - 5.657).abs() < 1e-3);
        assert_eq!(ScalingMode::Lora.scaling(16.0, 8), 2.0);
        assert_eq!(ScalingMode::default(), ScalingMode::Rslora);
    }

    #[test]
    fn rank_too_large() {
        let err = init_layer(Matrix::zeros(3, 5), 4, 16.0, ScalingMode::Lora, InitScheme::standard(0));
        assert!(matches!(err, Err(Error::RankTooLarge { rank: 4, m: 3, n: 5 })));
        assert!(init_layer(Matrix::zeros(3, 5), 0, 16.0, ScalingMode::Lora, InitScheme::standard(0)).is_err());
    }

    #[test]
    fn effective_weight_examples() {
        let layer = LoraLayer::new(
            Matrix::zeros(2, 2),
            m(&[&[1.0], &[0.0]]),
            m(&[&[1.0, 0.0]]),
            1.0,
            ScalingMode::Lora,
        )
        .unwrap();
        assert_eq!(layer.effective_weight(), m(&[&[1.0, 0.0], &[0.0, 0.0]]));

        let mut doubled = layer.clone();
        doubled.alpha = 2.0;
        assert_eq!(doubled.delta(), layer.delta().scale(2.0));
    }

    #[test]
    fn decayed_merge_examples() {
        let layer = init_layer(Matrix::identity(3), 2, 4.0, ScalingMode::Lora, InitScheme::gaussian_both(3)).unwrap();
        assert_eq!(apply_decayed_merge_step(&layer, 0.1, 0.0).unwrap(), layer);

        let decayed = apply_decayed_merge_step(&layer, 0.19, 1.0).unwrap();
        assert!((&decayed.w0 - &layer.w0.scale(0.81)).max_abs() < 1e-15);
        assert!((&decayed.b - &layer.b.scale(0.9)).max_abs() < 1e-15);
        assert!((&decayed.a - &layer.a.scale(0.9)).max_abs() < 1e-15);
        let before = layer.effective_weight().scale(0.81);
        assert!((&decayed.effective_weight() - &before).max_abs() < 1e-12);

        let zero_b = init_layer(Matrix::identity(3), 1, 4.0, ScalingMode::Lora, InitScheme::standard(3)).unwrap();
        let d = apply_decayed_merge_step(&zero_b, 0.5, 0.5).unwrap();
        assert_eq!(d.w0, Matrix::identity(3).scale(0.75));
        assert!(d.b.is_zero());

        assert!(apply_decayed_merge_step(&layer, 1.0, 1.0).is_err());
        assert!(apply_decayed_merge_step(&layer, 2.0, 0.6).is_err());
    }

    #[test]
    fn serde_rejects_inconsistent_shapes() {
        let layer = init_layer(Matrix::identity(3), 2, 4.0, ScalingMode::Lora, InitScheme::gaussian_both(3)).unwrap();
        let json = serde_json::to_string(&layer).unwrap();
        let back: LoraLayer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, layer);

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["a"] = serde_json::to_value(Matrix::zeros(2, 4)).unwrap();
        assert!(serde_json::from_value::<LoraLayer>(v).is_err());
    }
}
