//! Flat `section.key = value` experiment configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default, so an empty file is a complete configuration. Command-line
//! `--set section.key=value` overrides are applied after the file.
//!
//! Stage seeds default to `run.seed` plus a fixed offset
//! ([`DATA_SEED_OFFSET`] and friends); setting e.g. `train.seed` explicitly
//! pins that stage regardless of the master seed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use shortcut_unlearn::data::{ForgetSpec, GenConfig, SplitRole};
use shortcut_unlearn::nn::{Activation, HessianEstimator, MlpSpec, TrainConfig};
use shortcut_unlearn::unlearn::{Method, UnlearnConfig};

use crate::error::{HarnessError, Result};

pub const DATA_SEED_OFFSET: u64 = 0;
pub const TRAIN_SEED_OFFSET: u64 = 1_000;
pub const UNLEARN_SEED_OFFSET: u64 = 2_000;
pub const EVAL_SEED_OFFSET: u64 = 3_000;
pub const RETRAIN_SEED_OFFSET: u64 = 4_000;

/// Where a value came from, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => f.write_str("--set"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// Every method on the same original model.
    Methods,
    /// Stage ablation: none, partition, partition + pathway, full.
    Stages,
    /// `use_proj` x `use_bias_grad`.
    Gradients,
    /// `use_sharp_weight` on and off.
    Reweighting,
}

impl Grid {
    pub fn as_str(self) -> &'static str {
        match self {
            Grid::Methods => "methods",
            Grid::Stages => "stages",
            Grid::Gradients => "gradients",
            Grid::Reweighting => "reweighting",
        }
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "methods" => Ok(Grid::Methods),
            "stages" => Ok(Grid::Stages),
            "gradients" => Ok(Grid::Gradients),
            "reweighting" => Ok(Grid::Reweighting),
            _ => Err("expected methods, stages, gradients or reweighting".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub splits: Vec<SplitRole>,
    pub mia: bool,
    pub probe: bool,
    pub histogram_bins: usize,
    pub composition_ks: Vec<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateSection {
    pub grid: Grid,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Master seed.
    pub seed: u64,
    /// Generator settings; `data.seed` is resolved by [`Self::gen_config`].
    pub data: GenConfig,
    pub data_seed: Option<u64>,
    pub forget_class: usize,
    pub train: TrainSection,
    /// Unlearning settings; `unlearn.seed` is resolved by
    /// [`Self::unlearn_config`].
    pub unlearn: UnlearnConfig,
    pub unlearn_seed: Option<u64>,
    pub eval: EvalSection,
    pub ablate: AblateSection,
    pub output_dir: PathBuf,
    pub run_name: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: GenConfig::default(),
            data_seed: None,
            forget_class: 0,
            train: TrainSection {
                epochs: 10,
                lr: 0.05,
                batch_size: 64,
                hidden: vec![32],
                activation: Activation::Tanh,
                seed: None,
            },
            unlearn: UnlearnConfig::default(),
            unlearn_seed: None,
            eval: EvalSection {
                splits: vec![SplitRole::Train, SplitRole::Test],
                mia: true,
                probe: true,
                histogram_bins: 20,
                composition_ks: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
                seed: None,
            },
            ablate: AblateSection {
                grid: Grid::Gradients,
                seeds: vec![0, 1, 2],
            },
            output_dir: PathBuf::from("out"),
            run_name: None,
        }
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse_num<T: FromStr>(v: &str, what: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("expected {what}"))
}

fn parse_list<T: FromStr>(v: &str, what: &str) -> std::result::Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_num(p.trim(), what)).collect()
}

fn positive(v: f64) -> std::result::Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be > 0, got {v}"))
    }
}

fn percent(v: f64) -> std::result::Result<f64, String> {
    if v > 0.0 && v <= 100.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 100], got {v}"))
    }
}

fn fraction(v: f64) -> std::result::Result<f64, String> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1], got {v}"))
    }
}

fn at_least_one(v: usize) -> std::result::Result<usize, String> {
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be >= 1".into())
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn hessian_name(h: HessianEstimator) -> &'static str {
    h.name()
}

fn probe_count(h: HessianEstimator) -> usize {
    match h {
        HessianEstimator::Hutchinson { probes } => probes,
        HessianEstimator::ExactFd => 64,
    }
}

impl ExperimentConfig {
    /// Every key this configuration understands, in echo order.
    pub const KEYS: &'static [&'static str] = &[
        "run.seed",
        "data.num_classes",
        "data.core_dim",
        "data.bias_dim",
        "data.core_mean",
        "data.bias_mean",
        "data.core_noise",
        "data.bias_noise",
        "data.train_aligned",
        "data.test_aligned",
        "data.train_per_class",
        "data.test_per_class",
        "data.forget_class",
        "data.seed",
        "train.epochs",
        "train.lr",
        "train.batch_size",
        "train.hidden",
        "train.activation",
        "train.seed",
        "unlearn.method",
        "unlearn.alpha",
        "unlearn.eta",
        "unlearn.k",
        "unlearn.tau_p",
        "unlearn.epochs",
        "unlearn.batch_size",
        "unlearn.use_proj",
        "unlearn.use_bias_grad",
        "unlearn.use_sharp_weight",
        "unlearn.sharp_weight_normalize",
        "unlearn.per_sample_weight",
        "unlearn.abs_saliency",
        "unlearn.use_partition",
        "unlearn.use_pathway",
        "unlearn.use_targeted",
        "unlearn.hessian",
        "unlearn.probes",
        "unlearn.fd_step",
        "unlearn.seed",
        "eval.splits",
        "eval.mia",
        "eval.probe",
        "eval.histogram_bins",
        "eval.composition_ks",
        "eval.seed",
        "ablate.grid",
        "ablate.seeds",
        "output.dir",
        "output.run_name",
    ];

    /// Reads `path` (if given) and applies `overrides` (`section.key=value`).
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            cfg.apply_text(&text, path)?;
        }
        for o in overrides {
            let (key, value) = o.split_once('=').ok_or_else(|| HarnessError::Config {
                origin: Origin::Flag,
                message: format!("override `{o}` is not of the form section.key=value"),
            })?;
            cfg.set(key.trim(), value.trim(), &Origin::Flag)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the lines of a configuration file.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Config {
                origin: origin.clone(),
                message: format!("expected `section.key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim(), &origin)?;
        }
        Ok(())
    }

    /// Sets one key, checking its type and bounds.
    pub fn set(&mut self, key: &str, value: &str, origin: &Origin) -> Result<()> {
        self.set_inner(key, value)
            .map_err(|message| HarnessError::Config {
                origin: origin.clone(),
                message: format!("{key}: {message}"),
            })
    }

    fn set_inner(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let count = |v: &str| parse_num::<usize>(v, "a non-negative integer");
        let real = |v: &str| parse_num::<f64>(v, "a number");
        let seed = |v: &str| parse_num::<u64>(v, "a non-negative integer seed");
        let d = &mut self.data;
        let t = &mut self.train;
        let u = &mut self.unlearn;
        let e = &mut self.eval;
        match key {
            "run.seed" => self.seed = seed(v)?,
            "data.num_classes" => d.num_classes = count(v)?,
            "data.core_dim" => d.core_dim = count(v)?,
            "data.bias_dim" => d.bias_dim = count(v)?,
            "data.core_mean" => d.core_mean = real(v)?,
            "data.bias_mean" => d.bias_mean = real(v)?,
            "data.core_noise" => d.core_noise = positive(real(v)?)?,
            "data.bias_noise" => d.bias_noise = positive(real(v)?)?,
            "data.train_aligned" => d.train_aligned = fraction(real(v)?)?,
            "data.test_aligned" => d.test_aligned = fraction(real(v)?)?,
            "data.train_per_class" => d.train_per_class = count(v)?,
            "data.test_per_class" => d.test_per_class = count(v)?,
            "data.forget_class" => self.forget_class = count(v)?,
            "data.seed" => self.data_seed = Some(seed(v)?),
            "train.epochs" => t.epochs = at_least_one(count(v)?)?,
            "train.lr" => t.lr = positive(real(v)?)?,
            "train.batch_size" => t.batch_size = at_least_one(count(v)?)?,
            "train.hidden" => t.hidden = parse_list(v, "a comma-separated list of widths")?,
            "train.activation" => {
                t.activation = v.parse().map_err(|_| "expected tanh or relu".to_string())?
            }
            "train.seed" => t.seed = Some(seed(v)?),
            "unlearn.method" => {
                u.method = v.parse::<Method>().map_err(|e| e.to_string())?;
            }
            "unlearn.alpha" => u.alpha = positive(real(v)?)?,
            "unlearn.eta" => u.eta = positive(real(v)?)?,
            "unlearn.k" => u.k = percent(real(v)?)?,
            "unlearn.tau_p" => u.tau_p = percent(real(v)?)?,
            "unlearn.epochs" => u.epochs = count(v)?,
            "unlearn.batch_size" => u.batch_size = at_least_one(count(v)?)?,
            "unlearn.use_proj" => u.use_proj = parse_bool(v)?,
            "unlearn.use_bias_grad" => u.use_bias_grad = parse_bool(v)?,
            "unlearn.use_sharp_weight" => u.use_sharp_weight = parse_bool(v)?,
            "unlearn.sharp_weight_normalize" => u.sharp_weight_normalize = parse_bool(v)?,
            "unlearn.per_sample_weight" => u.per_sample_weight = parse_bool(v)?,
            "unlearn.abs_saliency" => u.abs_saliency = parse_bool(v)?,
            "unlearn.use_partition" => u.use_partition = parse_bool(v)?,
            "unlearn.use_pathway" => u.use_pathway = parse_bool(v)?,
            "unlearn.use_targeted" => u.use_targeted = parse_bool(v)?,
            "unlearn.hessian" => {
                let probes = probe_count(u.hessian);
                u.hessian = match v {
                    "hutchinson" => HessianEstimator::Hutchinson { probes },
                    "exact_fd" => HessianEstimator::ExactFd,
                    _ => return Err("expected hutchinson or exact_fd".into()),
                };
            }
            "unlearn.probes" => {
                let probes = at_least_one(count(v)?)?;
                if let HessianEstimator::Hutchinson { .. } = u.hessian {
                    u.hessian = HessianEstimator::Hutchinson { probes };
                }
            }
            "unlearn.fd_step" => u.fd_step = positive(real(v)?)?,
            "unlearn.seed" => self.unlearn_seed = Some(seed(v)?),
            "eval.splits" => {
                e.splits = v
                    .split(',')
                    .map(|s| match s.trim() {
                        "train" => Ok(SplitRole::Train),
                        "test" => Ok(SplitRole::Test),
                        other => Err(format!("unknown split `{other}` (expected train or test)")),
                    })
                    .collect::<std::result::Result<_, _>>()?;
            }
            "eval.mia" => e.mia = parse_bool(v)?,
            "eval.probe" => e.probe = parse_bool(v)?,
            "eval.histogram_bins" => e.histogram_bins = at_least_one(count(v)?)?,
            "eval.composition_ks" => {
                e.composition_ks = parse_list::<f64>(v, "a comma-separated list of percentiles")?
                    .into_iter()
                    .map(percent)
                    .collect::<std::result::Result<_, _>>()?;
            }
            "eval.seed" => e.seed = Some(seed(v)?),
            "ablate.grid" => self.ablate.grid = v.parse()?,
            "ablate.seeds" => self.ablate.seeds = parse_list(v, "a comma-separated list of seeds")?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.run_name" => {
                if v.is_empty() || v.contains(['/', '\\']) {
                    return Err("must be a non-empty name without path separators".into());
                }
                self.run_name = Some(v.to_string());
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Cross-key checks that cannot be done one key at a time.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| HarnessError::Validation(m);
        self.gen_config()
            .validate()
            .map_err(|e| invalid(format!("[data] {e}")))?;
        ForgetSpec::new(self.forget_class, self.data.num_classes)
            .map_err(|e| invalid(format!("data.forget_class: {e}")))?;
        self.model_spec()
            .map_err(|e| invalid(format!("[train] {e}")))?;
        self.train_config()
            .validate()
            .map_err(|e| invalid(format!("[train] {e}")))?;
        self.unlearn_config()
            .validate()
            .map_err(|e| invalid(format!("[unlearn] {e}")))?;
        if self.eval.splits.is_empty() {
            return Err(invalid("eval.splits must name at least one split".into()));
        }
        if self.ablate.seeds.is_empty() {
            return Err(invalid("ablate.seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed
            .unwrap_or(self.seed.wrapping_add(DATA_SEED_OFFSET))
    }

    pub fn train_seed(&self) -> u64 {
        self.train
            .seed
            .unwrap_or(self.seed.wrapping_add(TRAIN_SEED_OFFSET))
    }

    pub fn unlearn_seed(&self) -> u64 {
        self.unlearn_seed
            .unwrap_or(self.seed.wrapping_add(UNLEARN_SEED_OFFSET))
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval
            .seed
            .unwrap_or(self.seed.wrapping_add(EVAL_SEED_OFFSET))
    }

    pub fn retrain_seed(&self) -> u64 {
        self.train_seed().wrapping_add(RETRAIN_SEED_OFFSET)
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            seed: self.data_seed(),
            ..self.data.clone()
        }
    }

    pub fn forget_spec(&self) -> Result<ForgetSpec> {
        Ok(ForgetSpec::new(self.forget_class, self.data.num_classes)?)
    }

    pub fn model_spec(&self) -> shortcut_unlearn::Result<MlpSpec> {
        MlpSpec::new(
            self.data.core_dim + self.data.bias_dim,
            self.train.hidden.clone(),
            self.data.num_classes,
            self.train.activation,
        )
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            lr: self.train.lr,
            batch_size: self.train.batch_size,
            seed: self.train_seed(),
        }
    }

    pub fn retrain_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.retrain_seed(),
            ..self.train_config()
        }
    }

    pub fn unlearn_config(&self) -> UnlearnConfig {
        UnlearnConfig {
            seed: self.unlearn_seed(),
            ..self.unlearn.clone()
        }
    }

    /// The same experiment under another master seed. Explicitly pinned
    /// stage seeds stay pinned.
    pub fn with_master_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Name of the run directory under `<output>/runs/`.
    pub fn run_name(&self) -> String {
        self.run_name
            .clone()
            .unwrap_or_else(|| self.unlearn.method.to_string())
    }

    /// `(key, value)` pairs that reproduce this configuration when parsed.
    /// Unpinned stage seeds are omitted so that they keep following
    /// `run.seed`.
    pub fn echo(&self) -> Vec<(String, String)> {
        let d = &self.data;
        let t = &self.train;
        let u = &self.unlearn;
        let e = &self.eval;
        let mut out: Vec<(&str, String)> = vec![
            ("run.seed", self.seed.to_string()),
            ("data.num_classes", d.num_classes.to_string()),
            ("data.core_dim", d.core_dim.to_string()),
            ("data.bias_dim", d.bias_dim.to_string()),
            ("data.core_mean", d.core_mean.to_string()),
            ("data.bias_mean", d.bias_mean.to_string()),
            ("data.core_noise", d.core_noise.to_string()),
            ("data.bias_noise", d.bias_noise.to_string()),
            ("data.train_aligned", d.train_aligned.to_string()),
            ("data.test_aligned", d.test_aligned.to_string()),
            ("data.train_per_class", d.train_per_class.to_string()),
            ("data.test_per_class", d.test_per_class.to_string()),
            ("data.forget_class", self.forget_class.to_string()),
        ];
        if let Some(s) = self.data_seed {
            out.push(("data.seed", s.to_string()));
        }
        out.extend([
            ("train.epochs", t.epochs.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.hidden", join(&t.hidden)),
            ("train.activation", t.activation.to_string()),
        ]);
        if let Some(s) = t.seed {
            out.push(("train.seed", s.to_string()));
        }
        out.extend([
            ("unlearn.method", u.method.to_string()),
            ("unlearn.alpha", u.alpha.to_string()),
            ("unlearn.eta", u.eta.to_string()),
            ("unlearn.k", u.k.to_string()),
            ("unlearn.tau_p", u.tau_p.to_string()),
            ("unlearn.epochs", u.epochs.to_string()),
            ("unlearn.batch_size", u.batch_size.to_string()),
            ("unlearn.use_proj", u.use_proj.to_string()),
            ("unlearn.use_bias_grad", u.use_bias_grad.to_string()),
            ("unlearn.use_sharp_weight", u.use_sharp_weight.to_string()),
            (
                "unlearn.sharp_weight_normalize",
                u.sharp_weight_normalize.to_string(),
            ),
            ("unlearn.per_sample_weight", u.per_sample_weight.to_string()),
            ("unlearn.abs_saliency", u.abs_saliency.to_string()),
            ("unlearn.use_partition", u.use_partition.to_string()),
            ("unlearn.use_pathway", u.use_pathway.to_string()),
            ("unlearn.use_targeted", u.use_targeted.to_string()),
            ("unlearn.hessian", hessian_name(u.hessian).to_string()),
            ("unlearn.probes", probe_count(u.hessian).to_string()),
            ("unlearn.fd_step", u.fd_step.to_string()),
        ]);
        if let Some(s) = self.unlearn_seed {
            out.push(("unlearn.seed", s.to_string()));
        }
        out.extend([
            (
                "eval.splits",
                e.splits
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eval.mia", e.mia.to_string()),
            ("eval.probe", e.probe.to_string()),
            ("eval.histogram_bins", e.histogram_bins.to_string()),
            ("eval.composition_ks", join(&e.composition_ks)),
        ]);
        if let Some(s) = e.seed {
            out.push(("eval.seed", s.to_string()));
        }
        out.extend([
            ("ablate.grid", self.ablate.grid.as_str().to_string()),
            ("ablate.seeds", join(&self.ablate.seeds)),
            ("output.dir", self.output_dir.display().to_string()),
        ]);
        if let Some(name) = &self.run_name {
            out.push(("output.run_name", name.clone()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// The echo rendered as a configuration file.
    pub fn to_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Keys that describe the dataset and the original model. Runs whose
    /// values differ here are not comparable.
    pub fn is_dataset_key(key: &str) -> bool {
        key == "run.seed" || key.starts_with("data.") || key.starts_with("train.")
    }
}
