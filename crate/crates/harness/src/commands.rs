//! Commands that read and write artifacts under the output directory.
//!
//! ```text
//! <out>/data/{train,test}.csv, manifest.txt            gen-data
//! <out>/model/original.ckpt, dynamics.csv, manifest.txt train
//! <out>/analysis/*.csv, summary.json                    analyze
//! <out>/runs/<name>/unlearned.ckpt, runlog.jsonl        unlearn
//! <out>/runs/<name>/report.json                         eval
//! <out>/ablate/<grid>.csv, <grid>/<cell>/seed<s>.json   ablate
//! <out>/report.csv, report.txt                          report
//! ```
//!
//! Each manifest lists the settings its directory was produced with, so a
//! later command refuses artifacts made under a different configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use shortcut_unlearn::data::{load_split, save_split, SplitRole};
use shortcut_unlearn::nn::checkpoint;
use shortcut_unlearn::unlearn::RunLog;
use shortcut_unlearn::{Dataset, ParamVector};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::pipeline::{self, Analysis, UnlearnOutcome};
use crate::report::{
    dataset_difference, sort_rows, table_csv, table_text, RunReport, SavedReport, TableRow,
};

/// Paths of every artifact under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self::new(&cfg.output_dir)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn split(&self, role: SplitRole) -> PathBuf {
        self.data_dir().join(format!("{role}.csv"))
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn original(&self) -> PathBuf {
        self.model_dir().join("original.ckpt")
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.root.join("analysis")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, name: &str) -> PathBuf {
        self.runs_dir().join(name)
    }

    pub fn ablate_dir(&self) -> PathBuf {
        self.root.join("ablate")
    }
}

pub(crate) fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn read(path: &Path, producer: &'static str) -> Result<String> {
    if !path.exists() {
        return Err(HarnessError::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        });
    }
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn require(path: &Path, producer: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(HarnessError::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        })
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn data_manifest(cfg: &ExperimentConfig) -> String {
    let mut out: String = cfg
        .echo()
        .into_iter()
        .filter(|(k, _)| k.starts_with("data.") && k != "data.seed" && k != "data.forget_class")
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    out.push_str(&format!("data.seed = {}\n", cfg.data_seed()));
    out
}

fn model_manifest(cfg: &ExperimentConfig) -> String {
    let mut out = data_manifest(cfg);
    out.extend(
        cfg.echo()
            .into_iter()
            .filter(|(k, _)| k.starts_with("train.") && k != "train.seed")
            .map(|(k, v)| format!("{k} = {v}\n")),
    );
    out.push_str(&format!("train.seed = {}\n", cfg.train_seed()));
    out
}

fn check_manifest(path: &Path, expected: &str, producer: &'static str) -> Result<()> {
    let found = read(path, producer)?;
    if found == expected {
        return Ok(());
    }
    let detail = expected
        .lines()
        .zip(found.lines().chain(std::iter::repeat("")))
        .find(|(e, f)| e != f)
        .map_or_else(
            || "settings differ".to_string(),
            |(e, f)| format!("expected `{e}`, found `{f}`"),
        );
    Err(HarnessError::StaleArtifact {
        path: path.to_path_buf(),
        producer,
        detail,
    })
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let layout = Layout::of(cfg);
    check_manifest(
        &layout.data_dir().join("manifest.txt"),
        &data_manifest(cfg),
        "gen-data",
    )?;
    let load = |role| -> Result<Dataset> {
        let path = layout.split(role);
        require(&path, "gen-data")?;
        Ok(load_split(&path, cfg.data.num_classes, role)?)
    };
    Ok((load(SplitRole::Train)?, load(SplitRole::Test)?))
}

pub fn load_original(cfg: &ExperimentConfig) -> Result<ParamVector> {
    let layout = Layout::of(cfg);
    check_manifest(
        &layout.model_dir().join("manifest.txt"),
        &model_manifest(cfg),
        "train",
    )?;
    let path = layout.original();
    require(&path, "train")?;
    Ok(checkpoint::load(&path)?)
}

/// `gen-data`: writes both splits.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout::of(cfg);
    let (train, test) = pipeline::generate_data(cfg)?;
    fs::create_dir_all(layout.data_dir()).map_err(|e| HarnessError::io(layout.data_dir(), e))?;
    save_split(&train, &layout.split(SplitRole::Train))?;
    save_split(&test, &layout.split(SplitRole::Test))?;
    write(&layout.data_dir().join("manifest.txt"), data_manifest(cfg))
}

/// `train`: fits the original model on the biased train split.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout::of(cfg);
    let (train, test) = load_data(cfg)?;
    let (original, log) = pipeline::train_original(cfg, &train, &test)?;
    fs::create_dir_all(layout.model_dir()).map_err(|e| HarnessError::io(layout.model_dir(), e))?;
    checkpoint::save(&original, &layout.original())?;
    write(&layout.model_dir().join("dynamics.csv"), log.to_csv())?;
    write(
        &layout.model_dir().join("manifest.txt"),
        model_manifest(cfg),
    )
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, Value::from)
}

pub fn analysis_json(a: &Analysis) -> Value {
    let h = &a.histogram;
    let f = &a.forgetting;
    json!({
        "forget_set_size": a.omega.len(),
        "conflicting_base_rate": a.conflicting_base_rate,
        "degenerate_samples": a.degenerate.iter().filter(|&&d| d).count(),
        "sharpness": {
            "aligned_mean": opt(h.aligned_mean),
            "conflicting_mean": opt(h.conflicting_mean),
            "aligned_median": opt(h.aligned_median),
            "conflicting_median": opt(h.conflicting_median),
            "conflicting_over_aligned": opt(a.sharpness_ratio()),
        },
        "composition": a.composition.iter().map(|r| json!({
            "k": r.k,
            "causal_size": r.causal_size,
            "conflicting_fraction": r.conflicting_fraction,
            "enrichment": if a.conflicting_base_rate > 0.0 {
                Value::from(r.conflicting_fraction / a.conflicting_base_rate)
            } else {
                Value::Null
            },
        })).collect::<Vec<_>>(),
        "neggrad": {
            "test_aligned_before": f.aligned_before,
            "test_aligned_after": f.aligned_after,
            "test_conflicting_before": f.conflicting_before,
            "test_conflicting_after": f.conflicting_after,
            "bias_probe_before": f.probe_before,
            "bias_probe_after": f.probe_after,
        },
    })
}

/// `analyze`: sharpness table, histogram, partition composition and the
/// effect of plain gradient ascent on the original model.
pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<Analysis> {
    let layout = Layout::of(cfg);
    let (train, test) = load_data(cfg)?;
    let original = load_original(cfg)?;
    let a = pipeline::analyze(cfg, &train, &test, &original)?;
    let dir = layout.analysis_dir();

    let mut sharp = String::from("index,omega,aligned,degenerate\n");
    for (i, ((w, al), d)) in a
        .omega
        .iter()
        .zip(&a.aligned)
        .zip(&a.degenerate)
        .enumerate()
    {
        sharp.push_str(&format!(
            "{i},{w:.17e},{},{}\n",
            u8::from(*al),
            u8::from(*d)
        ));
    }
    write(&dir.join("sharpness.csv"), sharp)?;
    write(&dir.join("histogram.csv"), a.histogram.to_csv())?;
    let mut comp = String::from("k,causal_size,aligned_fraction,conflicting_fraction\n");
    for r in &a.composition {
        comp.push_str(&format!(
            "{},{},{:.17e},{:.17e}\n",
            r.k, r.causal_size, r.aligned_fraction, r.conflicting_fraction
        ));
    }
    write(&dir.join("composition.csv"), comp)?;
    write(&dir.join("forgetting.csv"), a.forgetting.dynamics.to_csv())?;
    write(&dir.join("summary.json"), json_text(&analysis_json(&a)))?;
    Ok(a)
}

fn runlog_jsonl(cfg: &ExperimentConfig, outcome: &UnlearnOutcome) -> String {
    let log: &RunLog = &outcome.log;
    let config: serde_json::Map<String, Value> = cfg
        .echo()
        .into_iter()
        .map(|(k, v)| (k, Value::String(v)))
        .collect();
    let mut lines = vec![json!({
        "kind": "run",
        "method": log.method,
        "tau_s": log.tau_s,
        "causal_size": log.causal_size,
        "mask_popcount": log.mask_popcount,
        "param_count": log.param_count,
        "wall_clock_seconds": outcome.wall_clock_seconds,
        "config": config,
    })];
    lines.extend(log.steps.iter().map(|s| {
        json!({
            "kind": "step",
            "epoch": s.epoch,
            "step": s.step,
            "forget_loss": s.forget_loss,
            "weight": s.weight,
            "update_norm": s.update_norm,
        })
    }));
    lines.into_iter().map(|l| format!("{l}\n")).collect()
}

/// `unlearn`: runs the configured method from the original checkpoint.
pub fn cmd_unlearn(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let (train, _) = load_data(cfg)?;
    let original = load_original(cfg)?;
    let outcome = pipeline::unlearn(cfg, &train, &original)?;
    let dir = Layout::of(cfg).run_dir(&cfg.run_name());
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    checkpoint::save(&outcome.params, &dir.join("unlearned.ckpt"))?;
    write(&dir.join("runlog.jsonl"), runlog_jsonl(cfg, &outcome))?;
    write(&dir.join("config.txt"), cfg.to_text())?;
    Ok(dir)
}

/// Keys that must match between the unlearning run and its evaluation.
fn affects_run(key: &str) -> bool {
    !key.starts_with("eval.") && !key.starts_with("ablate.") && !key.starts_with("output.")
}

/// Rebuilds the unlearning outcome recorded in a run directory.
fn load_outcome(cfg: &ExperimentConfig, dir: &Path) -> Result<UnlearnOutcome> {
    let log_path = dir.join("runlog.jsonl");
    let text = read(&log_path, "unlearn")?;
    let bad = |message: String| HarnessError::Report {
        path: log_path.clone(),
        message,
    };
    let header: Value = serde_json::from_str(text.lines().next().unwrap_or_default())
        .map_err(|e| bad(e.to_string()))?;
    let recorded = header["config"]
        .as_object()
        .ok_or_else(|| bad("missing `config` in header".into()))?;
    for (k, v) in cfg.echo().into_iter().filter(|(k, _)| affects_run(k)) {
        let was = recorded.get(&k).and_then(Value::as_str);
        if was != Some(v.as_str()) {
            return Err(HarnessError::StaleArtifact {
                path: log_path.clone(),
                producer: "unlearn",
                detail: format!("{k} was {} but is now {v}", was.unwrap_or("<unset>")),
            });
        }
    }
    let ckpt = dir.join("unlearned.ckpt");
    require(&ckpt, "unlearn")?;
    let usize_of = |key: &str| header[key].as_u64().map(|v| v as usize);
    Ok(UnlearnOutcome {
        params: checkpoint::load(&ckpt)?,
        log: RunLog {
            method: cfg.unlearn.method.to_string(),
            tau_s: header["tau_s"].as_f64(),
            causal_size: usize_of("causal_size"),
            mask_popcount: usize_of("mask_popcount"),
            param_count: usize_of("param_count").unwrap_or_default(),
            ..RunLog::default()
        },
        wall_clock_seconds: header["wall_clock_seconds"].as_f64().unwrap_or_default(),
    })
}

/// `eval`: scores the run named by the configuration and writes its report.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<RunReport> {
    let (train, test) = load_data(cfg)?;
    let original = load_original(cfg)?;
    let dir = Layout::of(cfg).run_dir(&cfg.run_name());
    let outcome = load_outcome(cfg, &dir)?;
    let report = pipeline::evaluate(cfg, &train, &test, &original, &outcome)?;
    write(&dir.join("report.json"), report.to_json_string())?;
    Ok(report)
}

/// Run directories under `<out>/runs` that hold a report, sorted by name.
pub fn discover_runs(layout: &Layout) -> Result<Vec<PathBuf>> {
    let runs = layout.runs_dir();
    if !runs.exists() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&runs)
        .map_err(|e| HarnessError::io(&runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("report.json").exists())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// `report`: one comparison table over the given runs (or every evaluated
/// run under the output directory).
pub fn cmd_report(cfg: &ExperimentConfig, run_dirs: &[PathBuf]) -> Result<Vec<TableRow>> {
    let layout = Layout::of(cfg);
    let dirs = if run_dirs.is_empty() {
        discover_runs(&layout)?
    } else {
        run_dirs.to_vec()
    };
    if dirs.is_empty() {
        return Err(HarnessError::MissingArtifact {
            path: layout.runs_dir().join("<name>").join("report.json"),
            producer: "eval",
        });
    }
    let mut saved: Vec<(PathBuf, SavedReport)> = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let path = dir.join("report.json");
        let report = SavedReport::parse(&read(&path, "eval")?, &path)?;
        if let Some((first_path, first)) = saved.first() {
            if let Some(diff) = dataset_difference(&first.dataset, &report.dataset) {
                return Err(HarnessError::MixedRuns(format!(
                    "{} and {} differ in {diff}",
                    first_path.display(),
                    path.display()
                )));
            }
            if first.table_split != report.table_split {
                return Err(HarnessError::MixedRuns(format!(
                    "{} is scored on {} but {} on {}",
                    first_path.display(),
                    first.table_split,
                    path.display(),
                    report.table_split
                )));
            }
        }
        saved.push((path, report));
    }
    let mut rows: Vec<TableRow> = saved.into_iter().map(|(_, r)| r.row).collect();
    sort_rows(&mut rows);
    write(&layout.root.join("report.csv"), table_csv(&rows))?;
    write(&layout.root.join("report.txt"), table_text(&rows))?;
    Ok(rows)
}
