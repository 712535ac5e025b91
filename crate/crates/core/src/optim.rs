//! Optimizer steps: LoRA-Pro SGD and AdamW, plus the plain LoRA and full
//! fine-tuning baselines they are compared against.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradadjust::{
    adjust, equivalent_gradient, lora_raw_grads, loss_decrease_certificate, AdjustedGrads,
    DampingPolicy, GradBundle, XStrategy,
};
use crate::linalg::Matrix;
use crate::lora::{decay_factor, LoraLayer};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_WARMUP_RATIO: f64 = 0.03;

/// Adam moments for one parameter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamWState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self::with_betas(rows, cols, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
    }

    pub fn with_betas(rows: usize, cols: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    /// Advances the moments with `grad` and returns `m̂ / (√v̂ + ε)`.
    pub fn update(&mut self, grad: &Matrix) -> Result<Matrix> {
        if grad.shape() != self.m.shape() {
            return Err(Error::DimensionMismatch {
                op: "adamw moments",
                left: self.m.shape(),
                right: grad.shape(),
            });
        }
        let (b1, b2) = (self.beta1, self.beta2);
        self.t += 1;
        self.m = self.m.zip_map(grad, |m, g| b1 * m + (1.0 - b1) * g)?;
        self.v = self.v.zip_map(grad, |v, g| b2 * v + (1.0 - b2) * g * g)?;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let eps = self.epsilon;
        self.m.zip_map(&self.v, |m, v| (m / c1) / ((v / c2).sqrt() + eps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    Constant,
    CosineWithWarmup { warmup_ratio: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::CosineWithWarmup {
            warmup_ratio: DEFAULT_WARMUP_RATIO,
        }
    }
}

/// Where decoupled weight decay sits relative to the factor update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayOrder {
    #[default]
    BeforeUpdate,
    AfterUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub decay_order: DecayOrder,
}

impl HyperParams {
    pub fn constant(lr: f64) -> Self {
        Self {
            lr,
            weight_decay: 0.0,
            schedule: Schedule::Constant,
            decay_order: DecayOrder::BeforeUpdate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidParameter(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if let Schedule::CosineWithWarmup { warmup_ratio } = self.schedule {
            if !(0.0..1.0).contains(&warmup_ratio) {
                return Err(Error::InvalidParameter(format!(
                    "warmup_ratio must lie in [0, 1), got {warmup_ratio}"
                )));
            }
        }
        Ok(())
    }

    /// Concrete parameters for 0-based `step` of a `total_steps` run.
    pub fn at(&self, step: usize, total_steps: usize) -> StepParams {
        StepParams {
            lr: lr_at(self, step, total_steps),
            weight_decay: self.weight_decay,
            decay_order: self.decay_order,
        }
    }
}

/// Hyper-parameters of a single step, after the schedule is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub lr: f64,
    pub weight_decay: f64,
    pub decay_order: DecayOrder,
}

impl StepParams {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            weight_decay: 0.0,
            decay_order: DecayOrder::BeforeUpdate,
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }
}

/// Learning rate at `step`: linear warmup over `ceil(ratio·total)` steps,
/// then cosine decay reaching zero at `total_steps`. Steps past the end clamp.
pub fn lr_at(hp: &HyperParams, step: usize, total_steps: usize) -> f64 {
    let total = total_steps.max(1);
    let step = step.min(total);
    match hp.schedule {
        Schedule::Constant => hp.lr,
        Schedule::CosineWithWarmup { warmup_ratio } => {
            let warmup = (warmup_ratio * total as f64).ceil() as usize;
            if step < warmup {
                return hp.lr * step as f64 / warmup as f64;
            }
            let decay_len = total - warmup;
            if decay_len == 0 {
                return hp.lr;
            }
            let progress = (step - warmup) as f64 / decay_len as f64;
            hp.lr * 0.5 * (1.0 + (PI * progress).cos())
        }
    }
}

fn update_factors(layer: &mut LoraLayer, g_a: &Matrix, g_b: &Matrix, lr: f64) {
    layer.a = &layer.a - &g_a.scale(lr);
    layer.b = &layer.b - &g_b.scale(lr);
}

/// One LoRA-Pro SGD step: adjust, then `A ← A − γ·g_a`, `B ← B − γ·g_b`.
/// No weight decay.
pub fn lorapro_sgd_step(
    layer: &LoraLayer,
    bundle: &GradBundle,
    sp: &StepParams,
    strategy: XStrategy,
    policy: &DampingPolicy,
) -> Result<LoraLayer> {
    let adjusted = adjust(layer, bundle, strategy, policy)?;
    let mut out = layer.clone();
    update_factors(&mut out, &adjusted.g_a, &adjusted.g_b, sp.lr);
    Ok(out)
}

/// Intermediate values of one LoRA-Pro AdamW step.
#[derive(Debug, Clone)]
pub struct AdamWTrace {
    /// Adjustment of the raw gradients with `X = 0`.
    pub first: AdjustedGrads,
    /// Equivalent gradient fed into the moments.
    pub equivalent: Matrix,
    /// `m̂ / (√v̂ + ε)`
    pub direction: Matrix,
    /// Raw-gradient pair re-projected from `direction`.
    pub reprojected: GradBundle,
    /// Second adjustment, applied to the factors.
    pub second: AdjustedGrads,
}

/// One LoRA-Pro AdamW step.
///
/// Adjust with `X = 0`, form the equivalent gradient, run it through full-size
/// Adam moments, re-project the Adam direction onto the factors, adjust again
/// with `second_strategy` (Sylvester by default), apply the split weight decay
/// and update the factors.
pub fn lorapro_adamw_step(
    layer: &LoraLayer,
    state: &AdamWState,
    bundle: &GradBundle,
    sp: &StepParams,
    second_strategy: XStrategy,
    policy: &DampingPolicy,
) -> Result<(LoraLayer, AdamWState, AdamWTrace)> {
    if state.m.shape() != layer.shape() {
        return Err(Error::DimensionMismatch {
            op: "lorapro_adamw state",
            left: layer.shape(),
            right: state.m.shape(),
        });
    }
    let factor = decay_factor(sp.lr, sp.weight_decay)?;

    let first = adjust(layer, bundle, XStrategy::Zero, policy)?;
    let equivalent = equivalent_gradient(layer, &first.g_a, &first.g_b)?;
    let mut state = state.clone();
    let direction = state.update(&equivalent)?;
    let reprojected = lora_raw_grads(layer, &direction)?;
    let second = adjust(layer, &reprojected, second_strategy, policy)?;

    let mut out = layer.clone();
    if sp.decay_order == DecayOrder::BeforeUpdate {
        out.decay_in_place(factor);
    }
    update_factors(&mut out, &second.g_a, &second.g_b, sp.lr);
    if sp.decay_order == DecayOrder::AfterUpdate {
        out.decay_in_place(factor);
    }
    let trace = AdamWTrace {
        first,
        equivalent,
        direction,
        reprojected,
        second,
    };
    Ok((out, state, trace))
}

/// Plain LoRA SGD on the raw gradients.
pub fn lora_sgd_step(layer: &LoraLayer, bundle: &GradBundle, sp: &StepParams) -> Result<LoraLayer> {
    let mut out = layer.clone();
    update_factors(&mut out, &bundle.g_a_lora, &bundle.g_b_lora, sp.lr);
    if out.a.shape() != layer.a.shape() || out.b.shape() != layer.b.shape() {
        return Err(Error::InvalidParameter("factor shapes changed".into()));
    }
    Ok(out)
}

/// Per-factor Adam moments for the plain LoRA baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdamWState {
    pub a: AdamWState,
    pub b: AdamWState,
}

impl LoraAdamWState {
    pub fn for_layer(layer: &LoraLayer) -> Self {
        Self {
            a: AdamWState::new(layer.a.rows(), layer.a.cols()),
            b: AdamWState::new(layer.b.rows(), layer.b.cols()),
        }
    }
}

fn decoupled_adamw(
    param: &Matrix,
    state: &mut AdamWState,
    grad: &Matrix,
    sp: &StepParams,
) -> Result<Matrix> {
    let factor = decay_factor(sp.lr, sp.weight_decay)?;
    let dir = state.update(grad)?;
    Ok(match sp.decay_order {
        DecayOrder::BeforeUpdate => &param.scale(factor) - &dir.scale(sp.lr),
        DecayOrder::AfterUpdate => (param - &dir.scale(sp.lr)).scale(factor),
    })
}

/// Plain LoRA AdamW: independent moments on `A` (`r×n`) and `B` (`m×r`).
pub fn lora_adamw_step(
    layer: &LoraLayer,
    state: &LoraAdamWState,
    bundle: &GradBundle,
    sp: &StepParams,
) -> Result<(LoraLayer, LoraAdamWState)> {
    let mut state = state.clone();
    let mut out = layer.clone();
    out.a = decoupled_adamw(&layer.a, &mut state.a, &bundle.g_a_lora, sp)?;
    out.b = decoupled_adamw(&layer.b, &mut state.b, &bundle.g_b_lora, sp)?;
    Ok((out, state))
}

/// Full fine-tuning AdamW on the weight itself with `m×n` moments.
pub fn full_ft_adamw_step(
    weight: &Matrix,
    state: &AdamWState,
    g_full: &Matrix,
    sp: &StepParams,
) -> Result<(Matrix, AdamWState)> {
    if weight.shape() != g_full.shape() {
        return Err(Error::DimensionMismatch {
            op: "full_ft_adamw",
            left: weight.shape(),
            right: g_full.shape(),
        });
    }
    let mut state = state.clone();
    let w = decoupled_adamw(weight, &mut state, g_full, sp)?;
    Ok((w, state))
}

/// Training method for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain LoRA with per-factor AdamW.
    Lora,
    /// Plain LoRA with SGD.
    LoraSgd,
    LoraProSgd,
    LoraProAdamw,
    /// Full fine-tuning with AdamW; adapters merged into the base weight.
    FullFt,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Lora,
        Method::LoraSgd,
        Method::LoraProSgd,
        Method::LoraProAdamw,
        Method::FullFt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lora => "lora",
            Method::LoraSgd => "lora_sgd",
            Method::LoraProSgd => "lora_pro_sgd",
            Method::LoraProAdamw => "lora_pro_adamw",
            Method::FullFt => "full_ft",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_lora_pro(self) -> bool {
        matches!(self, Method::LoraProSgd | Method::LoraProAdamw)
    }

    pub fn uses_adapters(self) -> bool {
        self != Method::FullFt
    }
}

/// Optimizer state owned by one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerState {
    Stateless,
    Moments { state: AdamWState },
    FactorMoments { state: LoraAdamWState },
}

/// Per-step diagnostics reported by [`LayerOptimizer::step`].
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Equivalent gradient of the step's gradient pair (before any Adam
    /// transform); equals the full gradient for full fine-tuning.
    pub equivalent: Matrix,
    /// Loss-decrease certificate of the adjustment, LoRA-Pro only.
    pub certificate: Option<f64>,
}

/// A method plus its state for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerOptimizer {
    pub method: Method,
    pub state: LayerState,
}

impl LayerOptimizer {
    /// Fresh optimizer. For [`Method::FullFt`] the adapter is merged into
    /// `w0` and zeroed, so `w0` is the trained weight.
    pub fn new(method: Method, layer: &mut LoraLayer, betas: (f64, f64, f64)) -> Self {
        let (b1, b2, eps) = betas;
        let (m, n) = layer.shape();
        let state = match method {
            Method::LoraSgd | Method::LoraProSgd => LayerState::Stateless,
            Method::LoraProAdamw => LayerState::Moments {
                state: AdamWState::with_betas(m, n, b1, b2, eps),
            },
            Method::FullFt => {
                layer.w0 = layer.effective_weight();
                layer.b = Matrix::zeros(m, layer.rank());
                LayerState::Moments {
                    state: AdamWState::with_betas(m, n, b1, b2, eps),
                }
            }
            Method::Lora => LayerState::FactorMoments {
                state: LoraAdamWState {
                    a: AdamWState::with_betas(layer.a.rows(), layer.a.cols(), b1, b2, eps),
                    b: AdamWState::with_betas(layer.b.rows(), layer.b.cols(), b1, b2, eps),
                },
            },
        };
        Self { method, state }
    }

    pub fn step(
        &mut self,
        layer: &mut LoraLayer,
        bundle: &GradBundle,
        sp: &StepParams,
        strategy: XStrategy,
        policy: &DampingPolicy,
    ) -> Result<StepReport> {
        let g_full = bundle
            .g_full
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("step needs the full gradient".into()))?;
        match (self.method, &mut self.state) {
            (Method::LoraSgd, LayerState::Stateless) => {
                let equivalent = equivalent_gradient(layer, &bundle.g_a_lora, &bundle.g_b_lora)?;
                *layer = lora_sgd_step(layer, bundle, sp)?;
                Ok(StepReport {
                    equivalent,
                    certificate: None,
                })
            }
            (Method::Lora, LayerState::FactorMoments { state }) => {
                let equivalent = equivalent_gradient(layer, &bundle.g_a_lora, &bundle.g_b_lora)?;
                let (next, st) = lora_adamw_step(layer, state, bundle, sp)?;
                *layer = next;
                *state = st;
                Ok(StepReport {
                    equivalent,
                    certificate: None,
                })
            }
            (Method::LoraProSgd, LayerState::Stateless) => {
                let adjusted = adjust(layer, bundle, strategy, policy)?;
                let equivalent = equivalent_gradient(layer, &adjusted.g_a, &adjusted.g_b)?;
                let certificate = loss_decrease_certificate(layer, bundle, &adjusted, sp.lr, policy)?;
                update_factors(layer, &adjusted.g_a, &adjusted.g_b, sp.lr);
                Ok(StepReport {
                    equivalent,
                    certificate: Some(certificate),
                })
            }
            (Method::LoraProAdamw, LayerState::Moments { state }) => {
                let (next, st, trace) = lorapro_adamw_step(layer, state, bundle, sp, strategy, policy)?;
                let certificate = loss_decrease_certificate(layer, bundle, &trace.first, sp.lr, policy)?;
                *layer = next;
                *state = st;
                Ok(StepReport {
                    equivalent: trace.equivalent,
                    certificate: Some(certificate),
                })
            }
            (Method::FullFt, LayerState::Moments { state }) => {
                let (w, st) = full_ft_adamw_step(&layer.w0, state, g_full, sp)?;
                layer.w0 = w;
                *state = st;
                Ok(StepReport {
                    equivalent: g_full.clone(),
                    certificate: None,
                })
            }
            (method, _) => Err(Error::InvalidParameter(format!(
                "optimizer state does not match method {}",
                method.name()
            ))),
        }
    }
}
