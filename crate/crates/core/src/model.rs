//! Small multilayer perceptrons built from LoRA-augmented linear layers, with
//! hand-written backward passes.
//!
//! Layer `i` maps a row batch `h` (`batch×nᵢ`) to `act(h·Wᵢᵀ)` (`batch×mᵢ`),
//! where `Wᵢ = W0 + s·B·A` is `mᵢ×nᵢ`. Consecutive layers therefore compose
//! when `mᵢ = nᵢ₊₁`. Losses are means over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradadjust::{lora_raw_grads, GradBundle};
use crate::linalg::Matrix;
use crate::lora::LoraLayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    /// Subgradient at 0 is taken as 0.
    Relu,
    Tanh,
}

impl Activation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Self::Identity),
            "relu" => Some(Self::Relu),
            "tanh" => Some(Self::Tanh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        }
    }

    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Self::Identity => z,
            Self::Relu => z.max(0.0),
            Self::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(1/batch)·Σ (pred − target)²`
    Mse,
    /// Mean negative log-likelihood of the target class.
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Dense(Matrix),
    Classes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `batch×d_in`
    pub inputs: Matrix,
    pub targets: Targets,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<LoraLayer>,
    pub activations: Vec<Activation>,
    pub loss: LossKind,
}

/// Values saved by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of every layer.
    pre: Vec<Matrix>,
    /// Effective weights the forward pass used.
    weights: Vec<Matrix>,
    /// `dL/d(output)` of the last layer, after the activation.
    d_output: Matrix,
}

impl Network {
    pub fn new(layers: Vec<LoraLayer>, activations: Vec<Activation>, loss: LossKind) -> Result<Self> {
        let net = Self {
            layers,
            activations,
            loss,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        if self.layers.len() != self.activations.len() {
            return Err(Error::InvalidParameter(format!(
                "{} layers but {} activations",
                self.layers.len(),
                self.activations.len()
            )));
        }
        for pair in self.layers.windows(2) {
            let (m, _) = pair[0].shape();
            let (_, n_next) = pair[1].shape();
            if m != n_next {
                return Err(Error::DimensionMismatch {
                    op: "layer chain",
                    left: pair[0].shape(),
                    right: pair[1].shape(),
                });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].shape().1
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].shape().0
    }

    /// Batch loss without keeping the cache.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        forward(self, batch).map(|(l, _)| l)
    }

    /// Network output for `inputs` (`batch×d_in`).
    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut h = inputs.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let act = *act;
            h = h.matmul_t(&layer.effective_weight())?.map(|z| act.apply(z));
        }
        Ok(h)
    }
}

fn loss_and_grad(kind: LossKind, out: &Matrix, targets: &Targets) -> Result<(f64, Matrix)> {
    let batch = out.rows() as f64;
    match (kind, targets) {
        (LossKind::Mse, Targets::Dense(t)) => {
            if t.shape() != out.shape() {
                return Err(Error::DimensionMismatch {
                    op: "mse targets",
                    left: out.shape(),
                    right: t.shape(),
                });
            }
            let diff = out - t;
            Ok((diff.frob_norm_sq() / batch, diff.scale(2.0 / batch)))
        }
        (LossKind::SoftmaxCrossEntropy, Targets::Classes(classes)) => {
            if classes.len() != out.rows() {
                return Err(Error::InvalidParameter(format!(
                    "{} class labels for a batch of {}",
                    classes.len(),
                    out.rows()
                )));
            }
            let k = out.cols();
            let mut loss = 0.0;
            let mut grad = Matrix::zeros(out.rows(), k);
            for (i, &c) in classes.iter().enumerate() {
                if c >= k {
                    return Err(Error::InvalidParameter(format!("class {c} out of range 0..{k}")));
                }
                let row = out.row(i);
                let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
                let log_z = max + sum.ln();
                loss += log_z - row[c];
                for j in 0..k {
                    let p = (row[j] - log_z).exp();
                    let onehot = if j == c { 1.0 } else { 0.0 };
                    grad.set(i, j, (p - onehot) / batch);
                }
            }
            Ok((loss / batch, grad))
        }
        (kind, _) => Err(Error::InvalidParameter(format!(
            "targets do not match loss {kind:?}"
        ))),
    }
}

/// Evaluates the batch loss and keeps what [`backward`] needs.
pub fn forward(net: &Network, batch: &Batch) -> Result<(f64, ForwardCache)> {
    net.validate()?;
    if batch.inputs.cols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            op: "forward input",
            left: (batch.inputs.rows(), net.input_dim()),
            right: batch.inputs.shape(),
        });
    }
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut weights = Vec::with_capacity(net.layers.len());
    let mut h = batch.inputs.clone();
    for (layer, act) in net.layers.iter().zip(&net.activations) {
        let w = layer.effective_weight();
        let z = h.matmul_t(&w)?;
        let act = *act;
        let next = z.map(|v| act.apply(v));
        inputs.push(h);
        pre.push(z);
        weights.push(w);
        h = next;
    }
    let (loss, d_output) = loss_and_grad(net.loss, &h, &batch.targets)?;
    Ok((
        loss,
        ForwardCache {
            inputs,
            pre,
            weights,
            d_output,
        },
    ))
}

/// Exact gradient of the batch loss w.r.t. every effective weight, packed
/// with the matching raw LoRA gradients.
pub fn backward(net: &Network, cache: &ForwardCache) -> Result<Vec<GradBundle>> {
    if cache.weights.len() != net.layers.len() {
        return Err(Error::StaleCache(format!(
            "cache has {} layers, network {}",
            cache.weights.len(),
            net.layers.len()
        )));
    }
    for (i, (layer, w)) in net.layers.iter().zip(&cache.weights).enumerate() {
        if layer.effective_weight() != *w {
            return Err(Error::StaleCache(format!("layer {i} changed since forward")));
        }
    }

    let n_layers = net.layers.len();
    let mut full = vec![None; n_layers];
    let mut d_out = cache.d_output.clone();
    for i in (0..n_layers).rev() {
        let act = net.activations[i];
        let delta = d_out.zip_map(&cache.pre[i], |d, z| d * act.derivative(z))?;
        full[i] = Some(delta.t_matmul(&cache.inputs[i])?);
        if i > 0 {
            d_out = delta.matmul(&cache.weights[i])?;
        }
    }
    net.layers
        .iter()
        .zip(full)
        .map(|(layer, g)| lora_raw_grads(layer, &g.expect("filled above")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lora::{init_layer, InitScheme, ScalingMode};

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn frozen(w0: Matrix) -> LoraLayer {
        init_layer(w0, 1, 16.0, ScalingMode::Rslora, InitScheme::standard(0)).unwrap()
    }

    #[test]
    fn identity_mse_zero_loss() {
        let net = Network::new(vec![frozen(Matrix::identity(3))], vec![Activation::Identity], LossKind::Mse).unwrap();
        let x = m(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 0.0]]);
        let batch = Batch {
            inputs: x.clone(),
            targets: Targets::Dense(x),
        };
        let (loss, cache) = forward(&net, &batch).unwrap();
        assert_eq!(loss, 0.0);
        let grads = backward(&net, &cache).unwrap();
        assert!(grads[0].g_full.as_ref().unwrap().is_zero());
        assert!(grads[0].g_b_lora.is_zero());
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let net = Network::new(
            vec![frozen(Matrix::zeros(5, 3))],
            vec![Activation::Identity],
            LossKind::SoftmaxCrossEntropy,
        )
        .unwrap();
        let batch = Batch {
            inputs: m(&[&[1.0, 2.0, 3.0], &[0.0, 0.0, 1.0]]),
            targets: Targets::Classes(vec![0, 4]),
        };
        let loss = net.loss(&batch).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
    }

    /// Hidden relu layer, hand-set weights, 2-sample batch.
    ///
    /// W1 = [[1, -1], [0.5, 2]], W2 = [[1, -2]], x₁ = (1, 2), x₂ = (3, -1),
    /// targets 1 and 0.
    /// z₁ = (−1, 4.5) → h = (0, 4.5) → y = −9, error −10.
    /// z₂ = (4, −0.5) → h = (4, 0) → y = 4, error 4.
    /// loss = (100 + 16) / 2 = 58.
    #[test]
    fn hidden_relu_golden_loss_and_grad() {
        let w1 = m(&[&[1.0, -1.0], &[0.5, 2.0]]);
        let w2 = m(&[&[1.0, -2.0]]);
        let net = Network::new(
            vec![frozen(w1), frozen(w2)],
            vec![Activation::Relu, Activation::Identity],
            LossKind::Mse,
        )
        .unwrap();
        let batch = Batch {
            inputs: m(&[&[1.0, 2.0], &[3.0, -1.0]]),
            targets: Targets::Dense(m(&[&[1.0], &[0.0]])),
        };
        let (loss, cache) = forward(&net, &batch).unwrap();
        assert_eq!(loss, 58.0);
        let grads = backward(&net, &cache).unwrap();
        // dL/dy = (−10, 4); g2 = Σ dy·hᵀ = −10·(0, 4.5) + 4·(4, 0) = (16, −45)
        assert_eq!(grads[1].g_full.as_ref().unwrap(), &m(&[&[16.0, -45.0]]));
        // δ_h = dy·W2 masked by relu: sample 1 → (0, 20), sample 2 → (4, 0)
        // g1 = (0,20)ᵀ(1,2) + (4,0)ᵀ(3,−1)
        assert_eq!(grads[0].g_full.as_ref().unwrap(), &m(&[&[12.0, -4.0], &[20.0, 40.0]]));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net =
            Network::new(vec![frozen(Matrix::identity(2))], vec![Activation::Tanh], LossKind::Mse).unwrap();
        let batch = Batch {
            inputs: m(&[&[1.0, 2.0]]),
            targets: Targets::Dense(m(&[&[0.0, 0.0]])),
        };
        let (_, cache) = forward(&net, &batch).unwrap();
        net.layers[0].w0.set(0, 0, 2.0);
        assert!(matches!(backward(&net, &cache), Err(Error::StaleCache(_))));
    }

    #[test]
    fn chain_validation() {
        let bad = Network::new(
            vec![frozen(Matrix::zeros(3, 2)), frozen(Matrix::zeros(2, 4))],
            vec![Activation::Relu, Activation::Identity],
            LossKind::Mse,
        );
        assert!(bad.is_err());
        let ok = Network::new(
            vec![frozen(Matrix::zeros(3, 2)), frozen(Matrix::zeros(4, 3))],
            vec![Activation::Relu, Activation::Identity],
            LossKind::Mse,
        )
        .unwrap();
        assert_eq!((ok.input_dim(), ok.output_dim()), (2, 4));
        let batch = Batch {
            inputs: Matrix::zeros(1, 3),
            targets: Targets::Dense(Matrix::zeros(1, 4)),
        };
        assert!(forward(&ok, &batch).is_err());
    }

    #[test]
    fn class_out_of_range() {
        let net = Network::new(
            vec![frozen(Matrix::zeros(2, 2))],
            vec![Activation::Identity],
            LossKind::SoftmaxCrossEntropy,
        )
        .unwrap();
        let batch = Batch {
            inputs: Matrix::zeros(1, 2),
            targets: Targets::Classes(vec![2]),
        };
        assert!(net.loss(&batch).is_err());
    }
}
