//! Invariant suites run by the `selfcheck` command.
//!
//! Each property reports the number of instances it saw, the worst residual
//! and the tolerance it was held to. The adjustment under test is injectable
//! so a deliberately broken one can be shown to fail.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::gradadjust::{
    adjust, adjust_with_x, equivalent_gradient, lora_raw_grads, AdjustedGrads, DampingPolicy, GradBundle,
    XStrategy,
};
use crate::harness::data::stream_rng;
use crate::linalg::{frob_inner, numerical_rank, spd_solve, Matrix, DEFAULT_RANK_TOL};
use crate::lora::{init_layer, random_matrix, InitScheme, LoraLayer, ScalingMode};
use crate::model::{backward, forward, Activation, Batch, LossKind, Network, Targets};
use crate::oracle::{brute_force_optimal_grads, double_projection_residual, finite_diff_grad, x_objective_scan};
use crate::sylvester::SylvesterProblem;

pub const INSTANCE_COUNT: usize = 200;
pub const NETWORK_COUNT: usize = 20;
pub const FIRST_ORDER_COUNT: usize = 20;
pub const PERTURBATIONS_PER_MAGNITUDE: usize = 50;
pub const PERTURBATION_MAGNITUDES: [f64; 3] = [1e-3, 1e-1, 1.0];
pub const FIRST_ORDER_LRS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const FD_STEP: f64 = 1e-5;

pub const TOL_ORACLE: f64 = 1e-7;
pub const TOL_DOUBLE_PROJECTION: f64 = 1e-8;
pub const TOL_X_INVARIANCE: f64 = 1e-9;
pub const TOL_CERT_SIGN: f64 = 1e-12;
pub const TOL_CERT_IDENTITY: f64 = 1e-9;
pub const TOL_FIRST_ORDER: f64 = 0.05;
pub const TOL_SYLVESTER_RESIDUAL: f64 = 1e-8;
pub const TOL_SYLVESTER_OPTIMALITY: f64 = 1e-12;
pub const TOL_FD: f64 = 1e-5;

const STREAM_INSTANCES: u64 = 10;
const STREAM_NETWORKS: u64 = 11;
const STREAM_PERTURB: u64 = 12;

/// The adjustment under test.
pub type Adjuster<'a> = dyn Fn(&LoraLayer, &GradBundle) -> Result<AdjustedGrads> + 'a;

/// Sylvester-selected adjustment without damping.
pub fn default_adjuster(layer: &LoraLayer, bundle: &GradBundle) -> Result<AdjustedGrads> {
    adjust(layer, bundle, XStrategy::Sylvester, &DampingPolicy::exact())
}

/// A layer with Gaussian factors and a Gaussian full gradient.
#[derive(Debug, Clone)]
pub struct Instance {
    pub layer: LoraLayer,
    pub g: Matrix,
}

impl Instance {
    pub fn bundle(&self) -> GradBundle {
        lora_raw_grads(&self.layer, &self.g).expect("shapes agree")
    }

    pub fn scaling(&self) -> f64 {
        self.layer.scaling()
    }
}

/// `m, n ∈ 2..=8`, `r ∈ 1..=min(3, m, n)`, `s ∈ {0.5, 1, 2}`.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let m = rng.gen_range(2..=8);
    let n = rng.gen_range(2..=8);
    let r = rng.gen_range(1..=3usize.min(m).min(n));
    let s = *[0.5, 1.0, 2.0].choose(rng).expect("non-empty");
    let w0 = random_matrix(m, n, 1.0, rng);
    let b = random_matrix(m, r, 1.0, rng);
    let a = random_matrix(r, n, 1.0, rng);
    let layer = LoraLayer::new(w0, b, a, s * r as f64, ScalingMode::Lora).expect("valid shapes");
    let g = random_matrix(m, n, 1.0, rng);
    Instance { layer, g }
}

pub fn instances(seed: u64, count: usize) -> Vec<Instance> {
    let mut rng = stream_rng(seed, STREAM_INSTANCES);
    (0..count).map(|_| random_instance(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub instances: usize,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

impl SelfCheckReport {
    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.properties {
            let _ = write!(
                s,
                "{} {:<28} instances={:<4} worst={:.3e} tol={:.0e}",
                if p.passed { "PASS" } else { "FAIL" },
                p.name,
                p.instances,
                p.worst_residual,
                p.tolerance
            );
            if let Some(note) = &p.note {
                let _ = write!(s, "  ({note})");
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "{}: {}/{} properties passed (seed {})",
            if self.passed { "OK" } else { "FAILED" },
            self.properties.iter().filter(|p| p.passed).count(),
            self.properties.len(),
            self.seed
        );
        s
    }
}

/// Accumulates the worst residual over instances; an error on any instance
/// fails the property.
struct Tally {
    name: &'static str,
    tolerance: f64,
    count: usize,
    worst: f64,
    error: Option<String>,
    note: Option<String>,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            count: 0,
            worst: 0.0,
            error: None,
            note: None,
        }
    }

    fn record(&mut self, residual: Result<f64>) {
        self.count += 1;
        match residual {
            Ok(r) if r.is_nan() => self.worst = f64::INFINITY,
            Ok(r) => self.worst = self.worst.max(r),
            Err(e) => {
                self.worst = f64::INFINITY;
                self.error.get_or_insert_with(|| format!("instance {}: {e}", self.count - 1));
            }
        }
    }

    fn finish(self) -> PropertyResult {
        let passed = self.error.is_none() && self.worst <= self.tolerance;
        let note = match (self.error, self.note) {
            (Some(e), _) => Some(e),
            (None, n) => n,
        };
        PropertyResult {
            name: self.name,
            instances: self.count,
            worst_residual: self.worst,
            tolerance: self.tolerance,
            passed,
            note,
        }
    }
}

/// `|a − b| / max(|b|, scale)`.
pub fn scaled_rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / b.abs().max(scale).max(f64::MIN_POSITIVE)
}

pub fn selfcheck(seed: u64) -> SelfCheckReport {
    selfcheck_with(seed, &default_adjuster)
}

pub fn selfcheck_with(seed: u64, adjuster: &Adjuster) -> SelfCheckReport {
    let insts = instances(seed, INSTANCE_COUNT);
    let mut properties = vec![oracle_consistency(&insts)];
    properties.extend(adjustment_suites(&insts, adjuster, seed));
    properties.extend(network_suites(seed));
    let passed = properties.iter().all(|p| p.passed);
    SelfCheckReport {
        seed,
        passed,
        properties,
    }
}

fn oracle_consistency(insts: &[Instance]) -> PropertyResult {
    let mut t = Tally::new("oracle_vs_double_projection", TOL_ORACLE);
    for inst in insts {
        t.record((|| {
            let oracle = brute_force_optimal_grads(&inst.layer, &inst.g)?;
            let dp = double_projection_residual(&inst.layer, &inst.g)?;
            Ok(scaled_rel(oracle.objective, dp, inst.g.frob_norm_sq()))
        })());
    }
    t.finish()
}

fn adjustment_suites(insts: &[Instance], adjuster: &Adjuster, seed: u64) -> Vec<PropertyResult> {
    let exact = DampingPolicy::exact();
    let mut vs_oracle = Tally::new("adjust_vs_oracle", TOL_ORACLE);
    let mut vs_dp = Tally::new("adjust_vs_double_projection", TOL_DOUBLE_PROJECTION);
    let mut x_inv = Tally::new("x_invariance", TOL_X_INVARIANCE);
    let mut cert_sign = Tally::new("certificate_sign", TOL_CERT_SIGN);
    let mut cert_id = Tally::new("certificate_identity", TOL_CERT_IDENTITY);
    let mut first_order = Tally::new("certificate_first_order", TOL_FIRST_ORDER);
    let mut syl_res = Tally::new("sylvester_residual", TOL_SYLVESTER_RESIDUAL);
    let mut syl_opt = Tally::new("sylvester_optimality", TOL_SYLVESTER_OPTIMALITY);
    let mut rank = Tally::new("rank_lemma", 0.0);
    let mut strict_cases = 0usize;
    let mut rng = stream_rng(seed, STREAM_PERTURB);

    for (idx, inst) in insts.iter().enumerate() {
        let layer = &inst.layer;
        let g = &inst.g;
        let bundle = inst.bundle();
        let g_sq = g.frob_norm_sq();
        let adjusted = adjuster(layer, &bundle);
        let adjusted = match adjusted {
            Ok(a) => a,
            Err(e) => {
                let msg = e.to_string();
                for t in [&mut vs_oracle, &mut vs_dp, &mut x_inv, &mut cert_id, &mut syl_res, &mut syl_opt, &mut rank] {
                    t.record(Err(crate::Error::InvalidParameter(msg.clone())));
                }
                continue;
            }
        };
        let g_tilde = equivalent_gradient(layer, &adjusted.g_a, &adjusted.g_b);

        vs_oracle.record((|| {
            let obj = (&g_tilde.clone()? - g).frob_norm_sq();
            let oracle = brute_force_optimal_grads(layer, g)?;
            Ok(scaled_rel(obj, oracle.objective, g_sq))
        })());
        vs_dp.record((|| {
            let obj = (&g_tilde.clone()? - g).frob_norm_sq();
            Ok(scaled_rel(obj, double_projection_residual(layer, g)?, g_sq))
        })());

        x_inv.record((|| {
            let reference = g_tilde.clone()?;
            let r = layer.rank();
            let random_x = random_matrix(r, r, 1.0, &mut rng);
            let variants = [
                adjust_with_x(layer, &bundle, &Matrix::zeros(r, r), &exact)?,
                adjust(layer, &bundle, XStrategy::Symmetry, &exact)?,
                adjust(layer, &bundle, XStrategy::Sylvester, &exact)?,
                adjust_with_x(layer, &bundle, &random_x, &exact)?,
            ];
            let mut all = vec![reference.clone()];
            for v in &variants {
                all.push(equivalent_gradient(layer, &v.g_a, &v.g_b)?);
            }
            let denom = reference.frob_norm().max(f64::MIN_POSITIVE);
            let mut worst: f64 = 0.0;
            for i in 0..all.len() {
                for j in i + 1..all.len() {
                    worst = worst.max((&all[i] - &all[j]).frob_norm() / denom);
                }
            }
            Ok(worst)
        })());

        let zero = adjust_with_x(layer, &bundle, &Matrix::zeros(layer.rank(), layer.rank()), &exact);
        let closed = zero.and_then(|z| {
            Ok(-(frob_inner(&bundle.g_a_lora, &z.g_a)? + frob_inner(&bundle.g_b_lora, &z.g_b)?))
        });
        cert_sign.record(closed.clone().map(|c| c.max(0.0)));
        cert_id.record((|| {
            let closed = closed.clone()?;
            let direct = -(frob_inner(&bundle.g_a_lora, &adjusted.g_a)? + frob_inner(&bundle.g_b_lora, &adjusted.g_b)?);
            let scale = bundle.g_a_lora.frob_norm() * adjusted.g_a.frob_norm()
                + bundle.g_b_lora.frob_norm() * adjusted.g_b.frob_norm();
            Ok((closed - direct).abs() / scale.max(f64::MIN_POSITIVE))
        })());

        if idx < FIRST_ORDER_COUNT {
            first_order.record(first_order_gap(inst, &bundle, &adjusted));
        }

        syl_res.record((|| {
            let s = layer.scaling();
            let p = layer.b.t_matmul(&layer.b)?;
            let q = layer.a.matmul_t(&layer.a)?;
            let ga0 = spd_solve(&p, &bundle.g_a_lora, 0.0)?.scale(1.0 / (s * s));
            let c = ga0.matmul_t(&layer.a)?.scale(-1.0);
            let prob = SylvesterProblem::new(p, q, c.clone())?;
            Ok(prob.residual(&adjusted.x)? / c.frob_norm().max(1.0))
        })());

        syl_opt.record((|| {
            let best = x_objective_scan(layer, &bundle, &adjusted.x, &exact)?;
            let scale = best.max(bundle.g_a_lora.frob_norm_sq() + bundle.g_b_lora.frob_norm_sq());
            let r = layer.rank();
            let mut worst: f64 = 0.0;
            for delta in PERTURBATION_MAGNITUDES {
                for _ in 0..PERTURBATIONS_PER_MAGNITUDE {
                    let e = random_matrix(r, r, 1.0, &mut rng);
                    let e = e.scale(delta / e.frob_norm().max(f64::MIN_POSITIVE));
                    let f = x_objective_scan(layer, &bundle, &(&adjusted.x + &e), &exact)?;
                    worst = worst.max((best - f) / scale);
                }
            }
            Ok(worst)
        })());

        rank.record((|| {
            let r = layer.rank();
            let rank_tilde = numerical_rank(&g_tilde.clone()?, DEFAULT_RANK_TOL);
            let (m, n) = layer.shape();
            if 2 * r < m.min(n) && numerical_rank(g, DEFAULT_RANK_TOL) > 2 * r {
                strict_cases += 1;
            }
            Ok(rank_tilde.saturating_sub(2 * r) as f64)
        })());
    }

    rank.note = Some(format!("{strict_cases} instances with 2r < min(m,n) and rank(g) > 2r"));
    if strict_cases == 0 {
        rank.error = Some("no instance exercised 2r < min(m,n)".into());
    }
    first_order.note = Some(format!("|ΔL/dL − 1| at lr {:e}, shrinking over {:?}", FIRST_ORDER_LRS[2], FIRST_ORDER_LRS));
    vec![
        vs_oracle.finish(),
        vs_dp.finish(),
        x_inv.finish(),
        cert_sign.finish(),
        cert_id.finish(),
        first_order.finish(),
        syl_res.finish(),
        syl_opt.finish(),
        rank.finish(),
    ]
}

/// Realized over certified loss change on `L(W) = ½‖W − T‖²` with
/// `T = W − g`, so that `g` is the true gradient, at each rate in
/// [`FIRST_ORDER_LRS`].
pub fn first_order_ratios(inst: &Instance, bundle: &GradBundle, adjusted: &AdjustedGrads) -> Result<Vec<f64>> {
    let w = inst.layer.effective_weight();
    let target = &w - &inst.g;
    let loss = |layer: &LoraLayer| 0.5 * (&layer.effective_weight() - &target).frob_norm_sq();
    let base = loss(&inst.layer);
    let slope = -(frob_inner(&bundle.g_a_lora, &adjusted.g_a)? + frob_inner(&bundle.g_b_lora, &adjusted.g_b)?);
    FIRST_ORDER_LRS
        .iter()
        .map(|&lr| {
            let mut next = inst.layer.clone();
            next.a = &next.a - &adjusted.g_a.scale(lr);
            next.b = &next.b - &adjusted.g_b.scale(lr);
            Ok((loss(&next) - base) / (lr * slope))
        })
        .collect()
}

/// `|ratio − 1|` at the smallest rate, or infinity if the gaps do not shrink
/// as the rate does.
fn first_order_gap(inst: &Instance, bundle: &GradBundle, adjusted: &AdjustedGrads) -> Result<f64> {
    let ratios = first_order_ratios(inst, bundle, adjusted)?;
    let gaps: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    if gaps.windows(2).any(|w| !(w[1] < w[0])) || ratios.iter().any(|r| !r.is_finite()) {
        return Ok(f64::INFINITY);
    }
    Ok(*gaps.last().expect("three rates"))
}

/// A small random network and batch for gradient checks. Activations and
/// losses cycle with `idx` so every combination appears.
pub fn random_network(idx: usize, rng: &mut ChaCha8Rng) -> (Network, Batch) {
    const ACTS: [Activation; 3] = [Activation::Identity, Activation::Relu, Activation::Tanh];
    let loss = if idx % 2 == 0 {
        LossKind::Mse
    } else {
        LossKind::SoftmaxCrossEntropy
    };
    let act = ACTS[(idx / 2) % 3];
    let depth = rng.gen_range(1..=3);
    let mut dims = vec![rng.gen_range(2..=5)];
    for _ in 0..depth {
        dims.push(rng.gen_range(2..=5));
    }
    let mut layers = Vec::with_capacity(depth);
    let mut activations = Vec::with_capacity(depth);
    for l in 0..depth {
        let (n, m) = (dims[l], dims[l + 1]);
        let w0 = random_matrix(m, n, 1.0 / (n as f64).sqrt(), rng);
        let r = rng.gen_range(1..=m.min(n));
        let scheme = InitScheme::gaussian_both(rng.gen());
        layers.push(init_layer(w0, r, 2.0, ScalingMode::Rslora, scheme).expect("valid rank"));
        activations.push(if l + 1 == depth && loss == LossKind::SoftmaxCrossEntropy {
            Activation::Identity
        } else {
            act
        });
    }
    let batch_len = rng.gen_range(2..=5);
    let inputs = random_matrix(batch_len, dims[0], 1.0, rng);
    let d_out = dims[depth];
    let targets = match loss {
        LossKind::Mse => Targets::Dense(random_matrix(batch_len, d_out, 1.0, rng)),
        LossKind::SoftmaxCrossEntropy => Targets::Classes((0..batch_len).map(|_| rng.gen_range(0..d_out)).collect()),
    };
    let net = Network::new(layers, activations, loss).expect("dims chain");
    (net, Batch { inputs, targets })
}

/// Worst `‖fd − analytic‖_F / ‖analytic‖_F` over every layer's `W`, `A` and
/// `B` gradients, as `(w, factors)`.
pub fn network_fd_errors(net: &Network, batch: &Batch) -> Result<(f64, f64)> {
    let (_, cache) = forward(net, batch)?;
    let bundles = backward(net, &cache)?;
    let rel = |fd: &Matrix, an: &Matrix| (fd - an).frob_norm() / an.frob_norm().max(f64::MIN_POSITIVE);
    let mut worst_w: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    for (i, bundle) in bundles.iter().enumerate() {
        let layer = &net.layers[i];
        let loss_with = |edit: &dyn Fn(&mut LoraLayer)| {
            let mut probe = net.clone();
            edit(&mut probe.layers[i]);
            probe.loss(batch).expect("same shapes")
        };
        let fd_w = finite_diff_grad(|w| loss_with(&|l| l.w0 = w.clone()), &layer.w0, FD_STEP);
        let fd_a = finite_diff_grad(|a| loss_with(&|l| l.a = a.clone()), &layer.a, FD_STEP);
        let fd_b = finite_diff_grad(|b| loss_with(&|l| l.b = b.clone()), &layer.b, FD_STEP);
        let g = bundle.g_full.as_ref().expect("backward fills g_full");
        worst_w = worst_w.max(rel(&fd_w, g));
        worst_f = worst_f.max(rel(&fd_a, &bundle.g_a_lora)).max(rel(&fd_b, &bundle.g_b_lora));
    }
    Ok((worst_w, worst_f))
}

fn network_suites(seed: u64) -> Vec<PropertyResult> {
    let mut rng = stream_rng(seed, STREAM_NETWORKS);
    let mut fd_w = Tally::new("gradient_check_fd", TOL_FD);
    let mut fd_factors = Tally::new("factor_gradients_fd", TOL_FD);
    for idx in 0..NETWORK_COUNT {
        let (net, batch) = random_network(idx, &mut rng);
        match network_fd_errors(&net, &batch) {
            Ok((w, f)) => {
                fd_w.record(Ok(w));
                fd_factors.record(Ok(f));
            }
            Err(e) => {
                fd_w.record(Err(e.clone()));
                fd_factors.record(Err(e));
            }
        }
    }
    vec![fd_w.finish(), fd_factors.finish()]
}
