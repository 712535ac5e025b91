//! Run configuration and its text format.
//!
//! The format is line oriented:
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Sections are `task`, `model`, `optim` and `run`. Every key must belong to
//! a section, may appear once, and must be known; anything else is an error
//! that names the offending `section.key`. Omitted keys take their defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradadjust::{DampingPolicy, Fallback, XStrategy};
use crate::lora::{InitKind, ScalingMode, DEFAULT_ALPHA, DEFAULT_RANK};
use crate::model::Activation;
use crate::optim::{
    DecayOrder, HyperParams, Method, Schedule, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON,
    DEFAULT_WARMUP_RATIO,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskConfig {
    /// Regression onto a frozen random two-layer teacher. The student's base
    /// weights are the teacher's plus a perturbation of the given rank.
    TeacherStudent {
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        n_samples: usize,
        noise_sd: f64,
        perturbation_rank: usize,
        /// `‖P‖_F / ‖T‖_F` for each layer.
        perturbation_scale: f64,
    },
    /// `k`-way classification; each class is a mixture of two Gaussian blobs.
    TwoCluster {
        d: usize,
        k: usize,
        n_samples: usize,
        separation: f64,
    },
    /// Numeric CSV with a header row; one column is the regression target.
    Csv { path: PathBuf, target_column: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub activation: Activation,
    /// Hidden width for tasks that do not fix one.
    pub hidden: usize,
    /// Requested adapter rank, clamped per layer to `min(m, n)`.
    pub rank: usize,
    pub alpha: f64,
    pub scaling: ScalingMode,
    pub init: InitKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub method: Method,
    pub x_strategy: XStrategy,
    pub hp: HyperParams,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub damping: DampingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Save a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub resume_from: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub run: RunSettings,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::TeacherStudent {
            d_in: 8,
            d_hidden: 16,
            d_out: 4,
            n_samples: 256,
            noise_sd: 0.0,
            perturbation_rank: 4,
            perturbation_scale: 0.5,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            activation: Activation::Tanh,
            hidden: 16,
            rank: DEFAULT_RANK,
            alpha: DEFAULT_ALPHA,
            scaling: ScalingMode::Rslora,
            init: InitKind::Standard,
        }
    }
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            method: Method::LoraProAdamw,
            x_strategy: XStrategy::Sylvester,
            hp: HyperParams {
                lr: 1e-3,
                weight_decay: 0.0,
                schedule: Schedule::default(),
                decay_order: DecayOrder::BeforeUpdate,
            },
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            damping: DampingPolicy::default(),
        }
    }
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            steps: 100,
            batch_size: 32,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            checkpoint_every: 0,
            resume_from: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskConfig::default(),
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            run: RunSettings::default(),
        }
    }
}

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

const SECTIONS: [&str; 4] = ["task", "model", "optim", "run"];

const KNOWN_KEYS: &[&str] = &[
    "task.kind",
    "task.d_in",
    "task.d_hidden",
    "task.d_out",
    "task.n_samples",
    "task.noise_sd",
    "task.perturbation_rank",
    "task.perturbation_scale",
    "task.d",
    "task.k",
    "task.separation",
    "task.path",
    "task.target_column",
    "model.activation",
    "model.hidden",
    "model.rank",
    "model.alpha",
    "model.scaling",
    "model.init",
    "optim.method",
    "optim.x_strategy",
    "optim.lr",
    "optim.weight_decay",
    "optim.schedule",
    "optim.warmup_ratio",
    "optim.decay_order",
    "optim.beta1",
    "optim.beta2",
    "optim.epsilon",
    "optim.damping",
    "optim.fallback",
    "run.steps",
    "run.batch_size",
    "run.seed",
    "run.out_dir",
    "run.checkpoint_every",
    "run.resume_from",
];

/// Task keys accepted by each task kind.
fn task_keys(kind: &str) -> Option<&'static [&'static str]> {
    match kind {
        "teacher_student" => Some(&[
            "d_in",
            "d_hidden",
            "d_out",
            "n_samples",
            "noise_sd",
            "perturbation_rank",
            "perturbation_scale",
        ]),
        "two_cluster" => Some(&["d", "k", "n_samples", "separation"]),
        "csv" => Some(&["path", "target_column"]),
        _ => None,
    }
}

/// Parsed `section.key → value` pairs, with line numbers for messages.
struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(line, format!("line {line_no}: unterminated section header")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(config_err(name, format!("line {line_no}: unknown section")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim();
            let value = value.trim();
            let sec = section
                .as_deref()
                .ok_or_else(|| config_err(key, format!("line {line_no}: key outside any section")))?;
            let full = format!("{sec}.{key}");
            if !KNOWN_KEYS.contains(&full.as_str()) {
                return Err(config_err(&full, format!("line {line_no}: unknown key")));
            }
            if map.insert(full.clone(), (value.to_string(), line_no)).is_some() {
                return Err(config_err(&full, format!("line {line_no}: duplicate key")));
            }
        }
        Ok(Self { map })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(v, _)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse()
                .map_err(|_| config_err(key, format!("line {line}: cannot parse `{v}`"))),
        }
    }

    fn get_with<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some((v, line)) => parse(v).ok_or_else(|| config_err(key, format!("line {line}: unknown value `{v}`"))),
        }
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| config_err(key, "missing required key"))
    }
}

fn parse_scaling(s: &str) -> Option<ScalingMode> {
    match s {
        "lora" => Some(ScalingMode::Lora),
        "rslora" => Some(ScalingMode::Rslora),
        _ => None,
    }
}

fn scaling_name(m: ScalingMode) -> &'static str {
    match m {
        ScalingMode::Lora => "lora",
        ScalingMode::Rslora => "rslora",
    }
}

fn parse_init(s: &str) -> Option<InitKind> {
    match s {
        "standard" => Some(InitKind::Standard),
        "gaussian_both" => Some(InitKind::GaussianBoth),
        _ => None,
    }
}

fn init_name(k: InitKind) -> &'static str {
    match k {
        InitKind::Standard => "standard",
        InitKind::GaussianBoth => "gaussian_both",
    }
}

fn parse_decay_order(s: &str) -> Option<DecayOrder> {
    match s {
        "before_update" => Some(DecayOrder::BeforeUpdate),
        "after_update" => Some(DecayOrder::AfterUpdate),
        _ => None,
    }
}

fn decay_order_name(d: DecayOrder) -> &'static str {
    match d {
        DecayOrder::BeforeUpdate => "before_update",
        DecayOrder::AfterUpdate => "after_update",
    }
}

fn parse_fallback(s: &str) -> Option<Fallback> {
    match s {
        "damp" => Some(Fallback::Damp),
        "passthrough" => Some(Fallback::Passthrough),
        _ => None,
    }
}

fn fallback_name(f: Fallback) -> &'static str {
    match f {
        Fallback::Damp => "damp",
        Fallback::Passthrough => "passthrough",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let e = Entries::parse(text)?;

        let kind = e.raw("task.kind").unwrap_or("teacher_student");
        let allowed = task_keys(kind).ok_or_else(|| config_err("task.kind", format!("unknown task `{kind}`")))?;
        for key in e.map.keys() {
            if let Some(k) = key.strip_prefix("task.") {
                if k != "kind" && !allowed.contains(&k) {
                    return Err(config_err(key, format!("not a parameter of task `{kind}`")));
                }
            }
        }
        let task = match kind {
            "teacher_student" => {
                let TaskConfig::TeacherStudent {
                    d_in,
                    d_hidden,
                    d_out,
                    n_samples,
                    noise_sd,
                    perturbation_rank,
                    perturbation_scale,
                } = TaskConfig::default()
                else {
                    unreachable!()
                };
                TaskConfig::TeacherStudent {
                    d_in: e.get("task.d_in", d_in)?,
                    d_hidden: e.get("task.d_hidden", d_hidden)?,
                    d_out: e.get("task.d_out", d_out)?,
                    n_samples: e.get("task.n_samples", n_samples)?,
                    noise_sd: e.get("task.noise_sd", noise_sd)?,
                    perturbation_rank: e.get("task.perturbation_rank", perturbation_rank)?,
                    perturbation_scale: e.get("task.perturbation_scale", perturbation_scale)?,
                }
            }
            "two_cluster" => TaskConfig::TwoCluster {
                d: e.get("task.d", 8)?,
                k: e.get("task.k", 2)?,
                n_samples: e.get("task.n_samples", 256)?,
                separation: e.get("task.separation", 3.0)?,
            },
            _ => TaskConfig::Csv {
                path: PathBuf::from(e.require("task.path")?),
                target_column: e.require("task.target_column")?.to_string(),
            },
        };

        let dm = ModelConfig::default();
        let model = ModelConfig {
            activation: e.get_with("model.activation", dm.activation, Activation::parse)?,
            hidden: e.get("model.hidden", dm.hidden)?,
            rank: e.get("model.rank", dm.rank)?,
            alpha: e.get("model.alpha", dm.alpha)?,
            scaling: e.get_with("model.scaling", dm.scaling, parse_scaling)?,
            init: e.get_with("model.init", dm.init, parse_init)?,
        };

        let d = OptimConfig::default();
        let schedule = match e.raw("optim.schedule").unwrap_or("cosine") {
            "constant" => {
                if e.raw("optim.warmup_ratio").is_some() {
                    return Err(config_err("optim.warmup_ratio", "only valid with schedule = cosine"));
                }
                Schedule::Constant
            }
            "cosine" => Schedule::CosineWithWarmup {
                warmup_ratio: e.get("optim.warmup_ratio", DEFAULT_WARMUP_RATIO)?,
            },
            other => return Err(config_err("optim.schedule", format!("unknown value `{other}`"))),
        };
        let optim = OptimConfig {
            method: e.get_with("optim.method", d.method, Method::parse)?,
            x_strategy: e.get_with("optim.x_strategy", d.x_strategy, XStrategy::parse)?,
            hp: HyperParams {
                lr: e.get("optim.lr", d.hp.lr)?,
                weight_decay: e.get("optim.weight_decay", d.hp.weight_decay)?,
                schedule,
                decay_order: e.get_with("optim.decay_order", d.hp.decay_order, parse_decay_order)?,
            },
            beta1: e.get("optim.beta1", d.beta1)?,
            beta2: e.get("optim.beta2", d.beta2)?,
            epsilon: e.get("optim.epsilon", d.epsilon)?,
            damping: DampingPolicy {
                rel_epsilon: e.get("optim.damping", d.damping.rel_epsilon)?,
                fallback: e.get_with("optim.fallback", d.damping.fallback, parse_fallback)?,
            },
        };

        let dr = RunSettings::default();
        let run = RunSettings {
            steps: e.get("run.steps", dr.steps)?,
            batch_size: e.get("run.batch_size", dr.batch_size)?,
            seed: e.get("run.seed", dr.seed)?,
            out_dir: e.raw("run.out_dir").map(PathBuf::from).unwrap_or(dr.out_dir),
            checkpoint_every: e.get("run.checkpoint_every", dr.checkpoint_every)?,
            resume_from: e.raw("run.resume_from").map(PathBuf::from),
        };

        let cfg = Self { task, model, optim, run };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks value ranges. Errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(config_err(key, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        let nonneg = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(config_err(key, format!("must be finite and >= 0, got {v}")))
            }
        };
        match &self.task {
            TaskConfig::TeacherStudent {
                d_in,
                d_hidden,
                d_out,
                n_samples,
                noise_sd,
                perturbation_rank,
                perturbation_scale,
            } => {
                positive("task.d_in", *d_in)?;
                positive("task.d_hidden", *d_hidden)?;
                positive("task.d_out", *d_out)?;
                positive("task.n_samples", *n_samples)?;
                nonneg("task.noise_sd", *noise_sd)?;
                nonneg("task.perturbation_scale", *perturbation_scale)?;
                let max_rank = (*d_in).min(*d_hidden).max((*d_hidden).min(*d_out));
                if *perturbation_rank > max_rank {
                    return Err(config_err(
                        "task.perturbation_rank",
                        format!("exceeds the largest layer rank {max_rank}"),
                    ));
                }
            }
            TaskConfig::TwoCluster {
                d,
                k,
                n_samples,
                separation,
            } => {
                positive("task.d", *d)?;
                if *k < 2 {
                    return Err(config_err("task.k", "need at least 2 classes"));
                }
                positive("task.n_samples", *n_samples)?;
                nonneg("task.separation", *separation)?;
            }
            TaskConfig::Csv { target_column, .. } => {
                if target_column.is_empty() {
                    return Err(config_err("task.target_column", "must not be empty"));
                }
            }
        }
        positive("model.hidden", self.model.hidden)?;
        positive("model.rank", self.model.rank)?;
        if !(self.model.alpha.is_finite() && self.model.alpha > 0.0) {
            return Err(config_err("model.alpha", "must be finite and > 0"));
        }
        let hp = &self.optim.hp;
        nonneg("optim.lr", hp.lr)?;
        nonneg("optim.weight_decay", hp.weight_decay)?;
        if let Schedule::CosineWithWarmup { warmup_ratio } = hp.schedule {
            if !(0.0..1.0).contains(&warmup_ratio) {
                return Err(config_err("optim.warmup_ratio", "must lie in [0, 1)"));
            }
        }
        if hp.lr * hp.weight_decay >= 1.0 {
            return Err(config_err("optim.weight_decay", "lr·weight_decay must be < 1"));
        }
        for (key, b) in [("optim.beta1", self.optim.beta1), ("optim.beta2", self.optim.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(config_err(key, "must lie in [0, 1)"));
            }
        }
        if !(self.optim.epsilon.is_finite() && self.optim.epsilon > 0.0) {
            return Err(config_err("optim.epsilon", "must be finite and > 0"));
        }
        nonneg("optim.damping", self.optim.damping.rel_epsilon)?;
        positive("run.steps", self.run.steps)?;
        positive("run.batch_size", self.run.batch_size)?;
        Ok(())
    }

    /// Renders the config back to the text format; `parse(to_text())`
    /// reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[task]\n");
        match &self.task {
            TaskConfig::TeacherStudent {
                d_in,
                d_hidden,
                d_out,
                n_samples,
                noise_sd,
                perturbation_rank,
                perturbation_scale,
            } => {
                let _ = write!(
                    s,
                    "kind = teacher_student\nd_in = {d_in}\nd_hidden = {d_hidden}\nd_out = {d_out}\n\
                     n_samples = {n_samples}\nnoise_sd = {noise_sd:?}\nperturbation_rank = {perturbation_rank}\n\
                     perturbation_scale = {perturbation_scale:?}\n"
                );
            }
            TaskConfig::TwoCluster {
                d,
                k,
                n_samples,
                separation,
            } => {
                let _ = write!(
                    s,
                    "kind = two_cluster\nd = {d}\nk = {k}\nn_samples = {n_samples}\nseparation = {separation:?}\n"
                );
            }
            TaskConfig::Csv { path, target_column } => {
                let _ = write!(s, "kind = csv\npath = {}\ntarget_column = {target_column}\n", path.display());
            }
        }
        let m = &self.model;
        let _ = write!(
            s,
            "\n[model]\nactivation = {}\nhidden = {}\nrank = {}\nalpha = {:?}\nscaling = {}\ninit = {}\n",
            m.activation.name(),
            m.hidden,
            m.rank,
            m.alpha,
            scaling_name(m.scaling),
            init_name(m.init)
        );
        let o = &self.optim;
        let _ = write!(
            s,
            "\n[optim]\nmethod = {}\nx_strategy = {}\nlr = {:?}\nweight_decay = {:?}\n",
            o.method.name(),
            o.x_strategy.name(),
            o.hp.lr,
            o.hp.weight_decay
        );
        match o.hp.schedule {
            Schedule::Constant => s.push_str("schedule = constant\n"),
            Schedule::CosineWithWarmup { warmup_ratio } => {
                let _ = write!(s, "schedule = cosine\nwarmup_ratio = {warmup_ratio:?}\n");
            }
        }
        let _ = write!(
            s,
            "decay_order = {}\nbeta1 = {:?}\nbeta2 = {:?}\nepsilon = {:?}\ndamping = {:?}\nfallback = {}\n",
            decay_order_name(o.hp.decay_order),
            o.beta1,
            o.beta2,
            o.epsilon,
            o.damping.rel_epsilon,
            fallback_name(o.damping.fallback)
        );
        let r = &self.run;
        let _ = write!(
            s,
            "\n[run]\nsteps = {}\nbatch_size = {}\nseed = {}\nout_dir = {}\ncheckpoint_every = {}\n",
            r.steps,
            r.batch_size,
            r.seed,
            r.out_dir.display(),
            r.checkpoint_every
        );
        if let Some(p) = &r.resume_from {
            let _ = writeln!(s, "resume_from = {}", p.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn parses_sections_and_comments() {
        let cfg = RunConfig::parse(
            "# header\n[task]\nkind = teacher_student\nd_in = 3 # inline\n\n[optim]\nmethod = lora\nschedule = constant\nlr = 0.5\n[run]\nsteps = 7\n",
        )
        .unwrap();
        assert!(matches!(cfg.task, TaskConfig::TeacherStudent { d_in: 3, .. }));
        assert_eq!(cfg.optim.method, Method::Lora);
        assert_eq!(cfg.optim.hp.schedule, Schedule::Constant);
        assert_eq!(cfg.optim.hp.lr, 0.5);
        assert_eq!(cfg.run.steps, 7);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("[optim]\nlearning_rate = 1\n").unwrap_err();
        assert_eq!(
            err,
            Error::Config {
                key: "optim.learning_rate".into(),
                msg: "line 2: unknown key".into()
            }
        );
    }

    #[test]
    fn key_of_other_task_is_rejected() {
        let err = RunConfig::parse("[task]\nkind = two_cluster\nd_in = 4\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "task.d_in"));
    }

    #[test]
    fn zero_steps_rejected() {
        let err = RunConfig::parse("[run]\nsteps = 0\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "run.steps"));
    }

    #[test]
    fn zero_batch_rejected() {
        let err = RunConfig::parse("[run]\nbatch_size = 0\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "run.batch_size"));
    }

    #[test]
    fn bad_value_and_duplicates() {
        let err = RunConfig::parse("[model]\nscaling = fancy\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "model.scaling"));
        let err = RunConfig::parse("[run]\nseed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, ref msg } if key == "run.seed" && msg.contains("duplicate")));
        let err = RunConfig::parse("seed = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "seed"));
        let err = RunConfig::parse("[training]\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "training"));
    }

    #[test]
    fn csv_requires_path() {
        let err = RunConfig::parse("[task]\nkind = csv\ntarget_column = y\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "task.path"));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.optim.hp.lr = 0.1 + 0.2;
        cfg.optim.method = Method::FullFt;
        cfg.run.resume_from = Some(PathBuf::from("ck/step_3.bin"));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let cfg = RunConfig {
            task: TaskConfig::TwoCluster {
                d: 5,
                k: 3,
                n_samples: 90,
                separation: 2.5,
            },
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let cfg = RunConfig {
            task: TaskConfig::Csv {
                path: PathBuf::from("data/x.csv"),
                target_column: "y".into(),
            },
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
