//! Synthetic tasks, CSV loading, and seeded minibatch selection.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::harness::config::{ModelConfig, RunConfig, TaskConfig};
use crate::linalg::Matrix;
use crate::lora::{init_layer, random_matrix, InitScheme, LoraLayer};
use crate::model::{Activation, Batch, LossKind, Network, Targets};

const STREAM_TEACHER: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_PERTURB: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_BATCH_BASE: u64 = 1 << 32;

/// A generator for one purpose. Distinct purposes never share a stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The full training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n×d_in`
    pub inputs: Matrix,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Batch {
        let d = self.inputs.cols();
        let inputs = Matrix::from_fn(rows.len(), d, |i, j| self.inputs.get(rows[i], j));
        let targets = match &self.targets {
            Targets::Dense(t) => Targets::Dense(Matrix::from_fn(rows.len(), t.cols(), |i, j| t.get(rows[i], j))),
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
        };
        Batch { inputs, targets }
    }

    /// Minibatch for `step`: a fixed function of `(seed, step)`, so neither
    /// the method nor a resume point changes the data order.
    pub fn batch(&self, seed: u64, step: usize, batch_size: usize) -> Batch {
        let n = self.len();
        if batch_size >= n {
            return self.all();
        }
        let mut rng = stream_rng(seed, STREAM_BATCH_BASE + step as u64);
        let mut rows = index::sample(&mut rng, n, batch_size).into_vec();
        rows.sort_unstable();
        self.select(&rows)
    }
}

/// Student network and data for a config. Everything is derived from
/// `run.seed`.
pub fn build_task(cfg: &RunConfig) -> Result<(Network, Dataset)> {
    let seed = cfg.run.seed;
    let act = cfg.model.activation;
    match &cfg.task {
        TaskConfig::TeacherStudent {
            d_in,
            d_hidden,
            d_out,
            n_samples,
            noise_sd,
            perturbation_rank,
            perturbation_scale,
        } => {
            let mut rng = stream_rng(seed, STREAM_TEACHER);
            let teacher = [
                random_matrix(*d_hidden, *d_in, 1.0 / (*d_in as f64).sqrt(), &mut rng),
                random_matrix(*d_out, *d_hidden, 1.0 / (*d_hidden as f64).sqrt(), &mut rng),
            ];
            let activations = vec![act, Activation::Identity];

            let mut rng = stream_rng(seed, STREAM_DATA);
            let inputs = Matrix::from_fn(*n_samples, *d_in, |_, _| rng.sample(StandardNormal));
            let mut h = inputs.clone();
            for (w, a) in teacher.iter().zip(&activations) {
                h = h.matmul_t(w)?.map(|z| a.apply(z));
            }
            if *noise_sd > 0.0 {
                let noise = Normal::new(0.0, *noise_sd).expect("finite noise_sd");
                let eps = Matrix::from_fn(h.rows(), h.cols(), |_, _| noise.sample(&mut rng));
                h = &h + &eps;
            }
            let data = Dataset {
                inputs,
                targets: Targets::Dense(h),
            };

            let mut rng = stream_rng(seed, STREAM_PERTURB);
            let bases = teacher
                .iter()
                .map(|t| {
                    let p = low_rank_perturbation(t.rows(), t.cols(), *perturbation_rank, &mut rng);
                    let norm = p.frob_norm();
                    if norm == 0.0 {
                        t.clone()
                    } else {
                        t + &p.scale(perturbation_scale * t.frob_norm() / norm)
                    }
                })
                .collect();
            let net = student(bases, activations, LossKind::Mse, &cfg.model, seed)?;
            Ok((net, data))
        }
        TaskConfig::TwoCluster {
            d,
            k,
            n_samples,
            separation,
        } => {
            let mut rng = stream_rng(seed, STREAM_DATA);
            let centers: Vec<Vec<f64>> = (0..2 * k)
                .map(|_| {
                    let z: Vec<f64> = (0..*d).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    z.into_iter().map(|v| separation * v / norm).collect()
                })
                .collect();
            let mut labels = Vec::with_capacity(*n_samples);
            let mut rows = Vec::with_capacity(n_samples * d);
            for i in 0..*n_samples {
                let class = i % k;
                let blob = 2 * class + usize::from(rng.gen::<bool>());
                for c in &centers[blob] {
                    let noise: f64 = rng.sample(StandardNormal);
                    rows.push(c + noise);
                }
                labels.push(class);
            }
            let data = Dataset {
                inputs: Matrix::from_vec(*n_samples, *d, rows)?,
                targets: Targets::Classes(labels),
            };
            let bases = random_bases(&[(cfg.model.hidden, *d), (*k, cfg.model.hidden)], seed);
            let net = student(bases, vec![act, Activation::Identity], LossKind::SoftmaxCrossEntropy, &cfg.model, seed)?;
            Ok((net, data))
        }
        TaskConfig::Csv { path, target_column } => {
            let data = load_csv(path, target_column)?;
            let d = data.inputs.cols();
            let bases = random_bases(&[(cfg.model.hidden, d), (1, cfg.model.hidden)], seed);
            let net = student(bases, vec![act, Activation::Identity], LossKind::Mse, &cfg.model, seed)?;
            Ok((net, data))
        }
    }
}

/// `U·Vᵀ` with Gaussian `U` (`m×p`) and `V` (`n×p`), `p` clamped to `min(m, n)`.
fn low_rank_perturbation(m: usize, n: usize, rank: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let p = rank.min(m).min(n);
    if p == 0 {
        return Matrix::zeros(m, n);
    }
    let u = random_matrix(m, p, 1.0, rng);
    let v = random_matrix(n, p, 1.0, rng);
    u.matmul_t(&v).expect("shapes agree")
}

fn random_bases(shapes: &[(usize, usize)], seed: u64) -> Vec<Matrix> {
    let mut rng = stream_rng(seed, STREAM_TEACHER);
    shapes
        .iter()
        .map(|&(m, n)| random_matrix(m, n, 1.0 / (n as f64).sqrt(), &mut rng))
        .collect()
}

fn student(
    bases: Vec<Matrix>,
    activations: Vec<Activation>,
    loss: LossKind,
    model: &ModelConfig,
    seed: u64,
) -> Result<Network> {
    let mut rng = stream_rng(seed, STREAM_INIT);
    let layers = bases
        .into_iter()
        .map(|w0| {
            let (m, n) = w0.shape();
            let rank = model.rank.min(m).min(n);
            let scheme = InitScheme {
                kind: model.init,
                seed: rng.gen(),
            };
            init_layer(w0, rank, model.alpha, model.scaling, scheme)
        })
        .collect::<Result<Vec<LoraLayer>>>()?;
    Network::new(layers, activations, loss)
}

/// Reads a numeric CSV with a header row. `target_column` becomes the
/// single regression target, every other column an input feature.
pub fn load_csv(path: &Path, target_column: &str) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let target = headers.iter().position(|h| h.trim() == target_column).ok_or_else(|| Error::Config {
        key: "task.target_column".into(),
        msg: format!("column `{target_column}` not found in {}", path.display()),
    })?;
    if headers.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{} needs at least one feature column besides the target",
            path.display()
        )));
    }
    let d = headers.len() - 1;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!(
                    "{}: row {}, column `{}`: `{field}` is not a number",
                    path.display(),
                    row_idx + 2,
                    &headers[col]
                ))
            })?;
            if col == target {
                targets.push(v);
            } else {
                inputs.push(v);
            }
        }
    }
    let n = targets.len();
    if n == 0 {
        return Err(Error::InvalidParameter(format!("{} has no data rows", path.display())));
    }
    Ok(Dataset {
        inputs: Matrix::from_vec(n, d, inputs)?,
        targets: Targets::Dense(Matrix::from_vec(n, 1, targets)?),
    })
}
