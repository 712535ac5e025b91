//! Experiment driver: training runs with per-step metrics, method
//! comparisons, checkpoints, and the self-check suite.
//!
//! Metrics CSV, one row per `(step, layer)`:
//!
//! ```text
//! step,lr,train_loss,layer,discrepancy,rank_a,rank_b,dl_certificate
//! ```
//!
//! Row `k` describes the parameters before update `k`: `train_loss` is the
//! minibatch loss at those parameters, `discrepancy` is `‖g̃ − g‖_F` of the
//! layer, `rank_a`/`rank_b` are numerical ranks of the factors, `lr` is the
//! rate used by update `k`, and `dl_certificate` is the first-order loss
//! change certified for that update. Ranks are empty for full fine-tuning and
//! the certificate is empty for methods other than LoRA-Pro.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod selfcheck;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gradadjust::{DampingPolicy, GradBundle, XStrategy};
use crate::linalg::{numerical_rank, Matrix, DEFAULT_RANK_TOL};
use crate::lora::LoraLayer;
use crate::model::{backward, forward, Network};
use crate::optim::{LayerOptimizer, Method, StepParams};

pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, OptimConfig, RunConfig, RunSettings, TaskConfig};
pub use data::{build_task, Dataset};

pub const CSV_HEADER: [&str; 8] = [
    "step",
    "lr",
    "train_loss",
    "layer",
    "discrepancy",
    "rank_a",
    "rank_b",
    "dl_certificate",
];

/// Certificates above this abort the run.
pub const CERTIFICATE_CEILING: f64 = 1e-12;

pub const THREADS_ENV: &str = "LORAPRO_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRecord {
    pub discrepancy: f64,
    pub rank_a: Option<usize>,
    pub rank_b: Option<usize>,
    pub dl_certificate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub per_layer: Vec<LayerRecord>,
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    /// Loss on the whole training set after the last step.
    pub final_loss: f64,
    pub network: Network,
    pub csv_sha: String,
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Layer-level worker count from `LORAPRO_THREADS`, default 1.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// SHA-256 over the config fields that define a trajectory. Output paths and
/// checkpoint cadence are excluded, so a resumed run may write elsewhere.
pub fn fingerprint(cfg: &RunConfig) -> [u8; 32] {
    let mut canon = cfg.clone();
    canon.run.out_dir = PathBuf::new();
    canon.run.checkpoint_every = 0;
    canon.run.resume_from = None;
    Sha256::digest(canon.to_text().as_bytes()).into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: RunConfig,
    pub net: Network,
    pub optimizers: Vec<LayerOptimizer>,
    pub data: Dataset,
    /// Next step to execute.
    pub step: usize,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (mut net, data) = build_task(cfg)?;
        let o = &cfg.optim;
        let optimizers = net
            .layers
            .iter_mut()
            .map(|layer| LayerOptimizer::new(o.method, layer, (o.beta1, o.beta2, o.epsilon)))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            net,
            optimizers,
            data,
            step: 0,
        })
    }

    /// Rebuilds the data from the config and the parameters from `ck`.
    pub fn from_checkpoint(cfg: &RunConfig, ck: Checkpoint) -> Result<Self> {
        if ck.fingerprint != fingerprint(cfg) {
            return Err(Error::Checkpoint("checkpoint was written by a different config".into()));
        }
        if ck.total_steps != cfg.run.steps || ck.step > cfg.run.steps {
            return Err(Error::Checkpoint(format!(
                "checkpoint at step {} of {} does not fit a {}-step run",
                ck.step, ck.total_steps, cfg.run.steps
            )));
        }
        let mut t = Self::new(cfg)?;
        if ck.layers.len() != t.net.layers.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} layers, the model has {}",
                ck.layers.len(),
                t.net.layers.len()
            )));
        }
        t.net.layers = ck.layers;
        t.net.validate()?;
        t.optimizers = ck.optimizers;
        t.step = ck.step;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            fingerprint: fingerprint(&self.cfg),
            step: self.step,
            total_steps: self.cfg.run.steps,
            layers: self.net.layers.clone(),
            optimizers: self.optimizers.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.run.steps
    }

    /// Executes one step and returns its record.
    pub fn step_once(&mut self, threads: usize) -> Result<RunRecord> {
        let step = self.step;
        let run = &self.cfg.run;
        let batch = self.data.batch(run.seed, step, run.batch_size);
        let (loss, cache) = forward(&self.net, &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let bundles = backward(&self.net, &cache)?;
        let sp = self.cfg.optim.hp.at(step, run.steps);
        let per_layer = step_layers(
            &mut self.net.layers,
            &mut self.optimizers,
            &bundles,
            &sp,
            self.cfg.optim.x_strategy,
            &self.cfg.optim.damping,
            threads,
        )?;
        self.step += 1;
        Ok(RunRecord {
            step,
            lr: sp.lr,
            train_loss: loss,
            per_layer,
        })
    }

    pub fn full_loss(&self) -> Result<f64> {
        let loss = self.net.loss(&self.data.all())?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        Ok(loss)
    }
}

fn step_layer(
    layer: &mut LoraLayer,
    opt: &mut LayerOptimizer,
    bundle: &GradBundle,
    sp: &StepParams,
    strategy: XStrategy,
    policy: &DampingPolicy,
) -> Result<LayerRecord> {
    let (rank_a, rank_b) = if opt.method.uses_adapters() {
        (
            Some(numerical_rank(&layer.a, DEFAULT_RANK_TOL)),
            Some(numerical_rank(&layer.b, DEFAULT_RANK_TOL)),
        )
    } else {
        (None, None)
    };
    let g = bundle
        .g_full
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("backward did not return the full gradient".into()))?;
    let report = opt.step(layer, bundle, sp, strategy, policy)?;
    if let Some(c) = report.certificate {
        if c > CERTIFICATE_CEILING {
            return Err(Error::CertificateViolation(c));
        }
    }
    Ok(LayerRecord {
        discrepancy: (&report.equivalent - g).frob_norm(),
        rank_a,
        rank_b,
        dl_certificate: report.certificate,
    })
}

/// Steps every layer. Layers are independent, so they are split across up to
/// `threads` scoped workers; results come back in layer order either way.
fn step_layers(
    layers: &mut [LoraLayer],
    opts: &mut [LayerOptimizer],
    bundles: &[GradBundle],
    sp: &StepParams,
    strategy: XStrategy,
    policy: &DampingPolicy,
    threads: usize,
) -> Result<Vec<LayerRecord>> {
    let n = layers.len();
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return layers
            .iter_mut()
            .zip(opts.iter_mut())
            .zip(bundles)
            .map(|((l, o), b)| step_layer(l, o, b, sp, strategy, policy))
            .collect();
    }
    let chunk = n.div_ceil(threads);
    let results: Vec<Result<Vec<LayerRecord>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = layers
            .chunks_mut(chunk)
            .zip(opts.chunks_mut(chunk))
            .zip(bundles.chunks(chunk))
            .map(|((ls, os), bs)| {
                scope.spawn(move || {
                    ls.iter_mut()
                        .zip(os.iter_mut())
                        .zip(bs)
                        .map(|((l, o), b)| step_layer(l, o, b, sp, strategy, policy))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("layer worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Metrics CSV bytes for `records`, header included.
pub fn metrics_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for rec in records {
        for (i, l) in rec.per_layer.iter().enumerate() {
            w.write_record([
                rec.step.to_string(),
                fmt_f64(rec.lr),
                fmt_f64(rec.train_loss),
                i.to_string(),
                fmt_f64(l.discrepancy),
                l.rank_a.map(|r| r.to_string()).unwrap_or_default(),
                l.rank_b.map(|r| r.to_string()).unwrap_or_default(),
                l.dl_certificate.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
struct RunVerdicts {
    loss_decreased: bool,
    max_dl_certificate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary<'a> {
    config: &'a RunConfig,
    final_loss: f64,
    verdicts: RunVerdicts,
    csv_sha: String,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("creating {}: {e}", dir.display())))
}

/// Trains per `cfg` and writes `metrics.csv`, `summary.json` and
/// `checkpoint_final.bin` to `cfg.run.out_dir`. With `run.checkpoint_every`
/// set, intermediate `checkpoint_step<k>.bin` files are written too. With
/// `run.resume_from` set, training continues from that checkpoint and the CSV
/// holds only the steps executed by this call.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let out = &cfg.run.out_dir;
    create_dir(out)?;
    let mut trainer = match &cfg.run.resume_from {
        Some(path) => Trainer::from_checkpoint(cfg, Checkpoint::load(path)?)?,
        None => Trainer::new(cfg)?,
    };
    let initial_loss = trainer.full_loss()?;
    let threads = thread_count();
    let mut records = Vec::with_capacity(cfg.run.steps - trainer.step);
    while !trainer.is_done() {
        records.push(trainer.step_once(threads)?);
        let every = cfg.run.checkpoint_every;
        if every > 0 && trainer.step % every == 0 && !trainer.is_done() {
            trainer
                .checkpoint()
                .save(&out.join(format!("checkpoint_step{}.bin", trainer.step)))?;
        }
    }
    let final_loss = trainer.full_loss()?;

    let csv = metrics_csv(&records)?;
    let csv_sha = sha256_hex(&csv);
    let metrics_path = out.join("metrics.csv");
    write_file(&metrics_path, &csv)?;

    let checkpoint_path = out.join("checkpoint_final.bin");
    trainer.checkpoint().save(&checkpoint_path)?;

    let max_dl_certificate = records
        .iter()
        .flat_map(|r| r.per_layer.iter().filter_map(|l| l.dl_certificate))
        .reduce(f64::max);
    let summary = RunSummary {
        config: cfg,
        final_loss,
        verdicts: RunVerdicts {
            loss_decreased: final_loss < initial_loss,
            max_dl_certificate,
        },
        csv_sha: csv_sha.clone(),
    };
    let summary_path = out.join("summary.json");
    write_file(&summary_path, &serde_json::to_vec_pretty(&summary)?)?;

    Ok(RunOutcome {
        records,
        final_loss,
        network: trainer.net,
        csv_sha,
        metrics_path,
        summary_path,
        checkpoint_path,
    })
}

/// Mean per-layer discrepancy over the second half of the steps.
pub fn late_mean_discrepancy(records: &[RunRecord]) -> f64 {
    let half = records.len() / 2;
    let tail = &records[half..];
    let (sum, count) = tail
        .iter()
        .flat_map(|r| r.per_layer.iter().map(|l| l.discrepancy))
        .fold((0.0, 0usize), |(s, c), d| (s + d, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub label: String,
    pub method: Method,
    pub final_loss: f64,
    pub late_mean_discrepancy: f64,
    pub csv_sha: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareVerdicts {
    /// Labels ordered by final loss, lowest first.
    pub final_loss_order: Vec<String>,
    /// LoRA-Pro's late mean discrepancy is below LoRA's. `None` unless both
    /// kinds of method were compared.
    pub discrepancy_lora_pro_below_lora: Option<bool>,
    /// LoRA-Pro's final loss is below LoRA's.
    pub final_loss_lora_pro_below_lora: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub results: Vec<MethodResult>,
    pub verdicts: CompareVerdicts,
    pub runs: Vec<RunOutcome>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    config: &'a RunConfig,
    methods: Vec<&'a str>,
    final_loss: Vec<(&'a str, f64)>,
    results: &'a [MethodResult],
    verdicts: &'a CompareVerdicts,
    csv_sha: String,
}

/// Column labels: method names, with `_2`, `_3`, … on repeats.
fn method_labels(methods: &[Method]) -> Vec<String> {
    let mut labels = Vec::with_capacity(methods.len());
    for (i, m) in methods.iter().enumerate() {
        let seen = methods[..i].iter().filter(|p| *p == m).count();
        labels.push(if seen == 0 {
            m.name().to_string()
        } else {
            format!("{}_{}", m.name(), seen + 1)
        });
    }
    labels
}

/// Runs `base` once per method from the same initialization and data order.
/// Each run writes into `out_dir/<label>/`; the aligned comparison goes to
/// `out_dir/comparison.csv` and `out_dir/comparison.json`.
pub fn compare(base: &RunConfig, methods: &[Method]) -> Result<CompareOutcome> {
    if methods.len() < 2 {
        return Err(Error::Config {
            key: "methods".into(),
            msg: format!("compare needs at least 2 methods, got {}", methods.len()),
        });
    }
    if base.run.resume_from.is_some() {
        return Err(Error::Config {
            key: "run.resume_from".into(),
            msg: "not supported by compare".into(),
        });
    }
    base.validate()?;
    let labels = method_labels(methods);
    let out = &base.run.out_dir;
    create_dir(out)?;

    let mut runs = Vec::with_capacity(methods.len());
    for (method, label) in methods.iter().zip(&labels) {
        let mut cfg = base.clone();
        cfg.optim.method = *method;
        cfg.run.out_dir = out.join(label);
        runs.push(run(&cfg)?);
    }

    let shapes = |r: &RunOutcome| r.network.layers.iter().map(|l| l.shape()).collect::<Vec<_>>();
    let reference = shapes(&runs[0]);
    for (r, label) in runs.iter().zip(&labels) {
        if shapes(r) != reference {
            return Err(Error::Config {
                key: "methods".into(),
                msg: format!("`{label}` trains layers of shapes {:?}, expected {:?}", shapes(r), reference),
            });
        }
    }

    let results: Vec<MethodResult> = runs
        .iter()
        .zip(methods.iter().zip(&labels))
        .map(|(r, (m, label))| MethodResult {
            label: label.clone(),
            method: *m,
            final_loss: r.final_loss,
            late_mean_discrepancy: late_mean_discrepancy(&r.records),
            csv_sha: r.csv_sha.clone(),
        })
        .collect();
    let mut order: Vec<&MethodResult> = results.iter().collect();
    order.sort_by(|a, b| a.final_loss.total_cmp(&b.final_loss));
    let pro = results.iter().find(|r| r.method.is_lora_pro());
    let plain = results
        .iter()
        .find(|r| r.method == Method::Lora)
        .or_else(|| results.iter().find(|r| r.method == Method::LoraSgd));
    let verdicts = CompareVerdicts {
        final_loss_order: order.iter().map(|r| r.label.clone()).collect(),
        discrepancy_lora_pro_below_lora: pro
            .zip(plain)
            .map(|(p, l)| p.late_mean_discrepancy < l.late_mean_discrepancy),
        final_loss_lora_pro_below_lora: pro.zip(plain).map(|(p, l)| p.final_loss < l.final_loss),
    };

    let csv = comparison_csv(&labels, &runs)?;
    let csv_path = out.join("comparison.csv");
    write_file(&csv_path, &csv)?;
    let summary = CompareSummary {
        config: base,
        methods: labels.iter().map(String::as_str).collect(),
        final_loss: results.iter().map(|r| (r.label.as_str(), r.final_loss)).collect(),
        results: &results,
        verdicts: &verdicts,
        csv_sha: sha256_hex(&csv),
    };
    let summary_path = out.join("comparison.json");
    write_file(&summary_path, &serde_json::to_vec_pretty(&summary)?)?;

    Ok(CompareOutcome {
        results,
        verdicts,
        runs,
        csv_path,
        summary_path,
    })
}

/// `step,layer,<label>_train_loss,<label>_discrepancy,…`, one row per
/// `(step, layer)`.
fn comparison_csv(labels: &[String], runs: &[RunOutcome]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string(), "layer".to_string()];
    for label in labels {
        header.push(format!("{label}_train_loss"));
        header.push(format!("{label}_discrepancy"));
    }
    w.write_record(&header)?;
    let steps = runs[0].records.len();
    for k in 0..steps {
        let n_layers = runs[0].records[k].per_layer.len();
        for layer in 0..n_layers {
            let mut row = vec![k.to_string(), layer.to_string()];
            for r in runs {
                let rec = &r.records[k];
                row.push(fmt_f64(rec.train_loss));
                row.push(fmt_f64(rec.per_layer[layer].discrepancy));
            }
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Effective weights of every layer.
pub fn effective_weights(net: &Network) -> Vec<Matrix> {
    net.layers.iter().map(LoraLayer::effective_weight).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Schedule;

    fn small(dir: &Path, method: Method) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.task = TaskConfig::TeacherStudent {
            d_in: 4,
            d_hidden: 6,
            d_out: 3,
            n_samples: 40,
            noise_sd: 0.01,
            perturbation_rank: 2,
            perturbation_scale: 0.5,
        };
        cfg.model.rank = 2;
        cfg.optim.method = method;
        cfg.optim.hp.lr = 1e-2;
        cfg.run.steps = 12;
        cfg.run.batch_size = 8;
        cfg.run.seed = 3;
        cfg.run.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), Method::LoraProAdamw);
        let out = run(&cfg).unwrap();
        assert_eq!(out.records.len(), 12);
        let csv = fs::read_to_string(&out.metrics_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(lines.count(), 24);
        let summary: serde_json::Value = serde_json::from_slice(&fs::read(&out.summary_path).unwrap()).unwrap();
        assert_eq!(summary["csv_sha"], sha256_hex(csv.as_bytes()));
        assert_eq!(summary["config"]["run"]["steps"], 12);
        assert!(summary["final_loss"].is_number());
        assert!(out.records.iter().all(|r| r.per_layer.iter().all(|l| l.dl_certificate.unwrap() <= 0.0)));
        Checkpoint::load(&out.checkpoint_path).unwrap();
    }

    #[test]
    fn baseline_rows_leave_optional_fields_empty() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small(dir.path(), Method::FullFt)).unwrap();
        let csv = fs::read_to_string(&out.metrics_path).unwrap();
        let row = csv.lines().nth(1).unwrap();
        assert!(row.ends_with("0e0,,,"), "{row}");
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small(dir.path(), Method::Lora)).unwrap();
        let csv = fs::read_to_string(&out.metrics_path).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn threads_do_not_change_results() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), Method::LoraProAdamw);
        let mut a = Trainer::new(&cfg).unwrap();
        let mut b = Trainer::new(&cfg).unwrap();
        for _ in 0..5 {
            assert_eq!(a.step_once(1).unwrap(), b.step_once(4).unwrap());
        }
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn resume_reproduces_tail() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(&dir.path().join("full"), Method::Lora);
        cfg.run.checkpoint_every = 5;
        let full = run(&cfg).unwrap();
        let mut resumed = cfg.clone();
        resumed.run.out_dir = dir.path().join("resumed");
        resumed.run.resume_from = Some(dir.path().join("full/checkpoint_step5.bin"));
        let tail = run(&resumed).unwrap();
        assert_eq!(tail.records, full.records[5..]);
        assert_eq!(tail.network, full.network);
    }

    #[test]
    fn resume_rejects_other_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path(), Method::Lora);
        cfg.run.checkpoint_every = 5;
        run(&cfg).unwrap();
        let mut other = cfg.clone();
        other.optim.hp.lr = 0.5;
        other.run.resume_from = Some(dir.path().join("checkpoint_step5.bin"));
        assert!(matches!(run(&other), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn divergence_reports_step() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path(), Method::LoraSgd);
        cfg.optim.hp.lr = 1e6;
        cfg.optim.hp.schedule = Schedule::Constant;
        cfg.model.init = crate::lora::InitKind::GaussianBoth;
        match run(&cfg) {
            Err(Error::NonFiniteLoss { step }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn compare_needs_two_methods() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), Method::Lora);
        assert!(matches!(compare(&cfg, &[Method::FullFt]), Err(Error::Config { .. })));
    }

    #[test]
    fn compare_duplicate_columns_match() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), Method::Lora);
        let out = compare(&cfg, &[Method::Lora, Method::LoraProAdamw, Method::Lora]).unwrap();
        let labels: Vec<_> = out.results.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["lora", "lora_pro_adamw", "lora_2"]);
        assert_eq!(out.results[0].csv_sha, out.results[2].csv_sha);
        let csv = fs::read_to_string(&out.csv_path).unwrap();
        let mut rows = csv::Reader::from_reader(csv.as_bytes());
        let header = rows.headers().unwrap().clone();
        assert_eq!(&header[2], "lora_train_loss");
        for row in rows.records() {
            let row = row.unwrap();
            assert_eq!(row[2], row[6]);
            assert_eq!(row[3], row[7]);
        }
        assert!(out.verdicts.discrepancy_lora_pro_below_lora.is_some());
        assert!(dir.path().join("comparison.json").exists());
    }
}
