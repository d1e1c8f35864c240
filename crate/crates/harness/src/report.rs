//! Run reports (one JSON document per run) and the method comparison table.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};
use shortcut_unlearn::data::SplitRole;
use shortcut_unlearn::eval::{MetricsReport, MiaResult};
use shortcut_unlearn::unlearn::Method;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Resolved per-stage seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub data: u64,
    pub train: u64,
    pub unlearn: u64,
    pub eval: u64,
}

impl StageSeeds {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            data: cfg.data_seed(),
            train: cfg.train_seed(),
            unlearn: cfg.unlearn_seed(),
            eval: cfg.eval_seed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePair {
    pub original: f64,
    pub unlearned: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDiagnostics {
    pub tau_s: Option<f64>,
    pub causal_size: Option<usize>,
    pub mask_popcount: Option<usize>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: Vec<(String, String)>,
    pub seeds: StageSeeds,
    pub method: Method,
    pub metrics: Vec<MetricsReport>,
    pub mia: Option<MiaResult>,
    pub probe: Option<ProbePair>,
    pub stages: StageDiagnostics,
    pub wall_clock_seconds: f64,
}

pub const WALL_CLOCK_KEY: &str = "wall_clock_seconds";

fn metrics_json(m: &MetricsReport) -> Value {
    json!({
        "RA": m.retain_accuracy,
        "FA": m.forget_accuracy,
        "acc_BA": m.aligned_accuracy,
        "acc_BC": m.conflicting_accuracy,
        "Δ_gap": m.gap,
        "WGA": m.worst_group_accuracy,
    })
}

impl RunReport {
    /// Metrics of the split used for comparison tables: test if it was
    /// scored, otherwise the first scored split.
    pub fn table_metrics(&self) -> Option<&MetricsReport> {
        self.metrics
            .iter()
            .find(|m| m.split == SplitRole::Test)
            .or_else(|| self.metrics.first())
    }

    pub fn metrics_for(&self, split: SplitRole) -> Option<&MetricsReport> {
        self.metrics.iter().find(|m| m.split == split)
    }

    pub fn to_json(&self) -> Value {
        let config: Map<String, Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        let metrics: Map<String, Value> = self
            .metrics
            .iter()
            .map(|m| (m.split.as_str().to_string(), metrics_json(m)))
            .collect();
        json!({
            "config": config,
            "seeds": {
                "data": self.seeds.data,
                "train": self.seeds.train,
                "unlearn": self.seeds.unlearn,
                "eval": self.seeds.eval,
            },
            "method": self.method.as_str(),
            "needs_retain_set": self.method.needs_retain_set(),
            "metrics": metrics,
            "table_split": self.table_metrics().map(|m| m.split.as_str()),
            "mia": self.mia.as_ref().map(|r| json!({
                "balanced_accuracy": r.balanced_accuracy,
                "threshold": r.threshold,
                "members": r.members,
                "non_members": r.non_members,
            })),
            "probe": self.probe.map(|p| json!({
                "original": p.original,
                "unlearned": p.unlearned,
            })),
            "stages": {
                "tau_s": self.stages.tau_s,
                "causal_size": self.stages.causal_size,
                "mask_popcount": self.stages.mask_popcount,
                "param_count": self.stages.param_count,
            },
            WALL_CLOCK_KEY: self.wall_clock_seconds,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn row(&self) -> TableRow {
        let m = self.table_metrics();
        TableRow {
            method: self.method.to_string(),
            needs_retain_set: self.method.needs_retain_set(),
            ra: m.and_then(|m| m.retain_accuracy),
            fa: m.and_then(|m| m.forget_accuracy),
            gap: m.and_then(|m| m.gap),
            wga: m.and_then(|m| m.worst_group_accuracy),
            mia: self.mia.as_ref().map(|r| 100.0 * r.balanced_accuracy),
        }
    }
}

/// One row of the comparison table. Accuracies and MIA are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub needs_retain_set: bool,
    pub ra: Option<f64>,
    pub fa: Option<f64>,
    pub gap: Option<f64>,
    pub wga: Option<f64>,
    pub mia: Option<f64>,
}

pub const TABLE_HEADER: [&str; 7] = [
    "method",
    "needs_retain_set",
    "RA",
    "FA",
    "Δ_gap",
    "WGA",
    "MIA",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.2}"))
}

impl TableRow {
    fn cells(&self) -> [String; 7] {
        [
            self.method.clone(),
            self.needs_retain_set.to_string(),
            cell(self.ra),
            cell(self.fa),
            cell(self.gap),
            cell(self.wga),
            cell(self.mia),
        ]
    }
}

/// Rows sorted by FA (missing last), then by method name.
pub fn sort_rows(rows: &mut [TableRow]) {
    rows.sort_by(|a, b| {
        let key = |r: &TableRow| r.fa.unwrap_or(f64::INFINITY);
        key(a)
            .total_cmp(&key(b))
            .then_with(|| a.method.cmp(&b.method))
    });
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = TABLE_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join(","));
        out.push('\n');
    }
    out
}

pub fn table_text(rows: &[TableRow]) -> String {
    let body: Vec<[String; 7]> = rows.iter().map(TableRow::cells).collect();
    let mut widths = TABLE_HEADER.map(|h| h.chars().count());
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&TABLE_HEADER.map(String::from));
    line(&widths.map(|w| "-".repeat(w)));
    for r in &body {
        line(r);
    }
    out
}

/// The parts of a saved report that the comparison table needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedReport {
    pub row: TableRow,
    pub table_split: String,
    /// Settings that fix the dataset and the original model.
    pub dataset: Vec<(String, String)>,
}

impl SavedReport {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |message: String| HarnessError::Report {
            path: path.to_path_buf(),
            message,
        };
        let v: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let method = v["method"]
            .as_str()
            .ok_or_else(|| bad("missing `method`".into()))?
            .to_string();
        let needs_retain_set = v["needs_retain_set"]
            .as_bool()
            .ok_or_else(|| bad("missing `needs_retain_set`".into()))?;
        let table_split = v["table_split"]
            .as_str()
            .ok_or_else(|| bad("missing `table_split`".into()))?
            .to_string();
        let m = &v["metrics"][&table_split];
        if !m.is_object() {
            return Err(bad(format!("missing metrics for split `{table_split}`")));
        }
        let mia = v["mia"]["balanced_accuracy"].as_f64().map(|b| 100.0 * b);
        let config = v["config"]
            .as_object()
            .ok_or_else(|| bad("missing `config`".into()))?;
        let mut dataset: Vec<(String, String)> = config
            .iter()
            .filter(|(k, _)| {
                ExperimentConfig::is_dataset_key(k)
                    && !matches!(k.as_str(), "run.seed" | "data.seed" | "train.seed")
            })
            .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
            .collect();
        for stage in ["data", "train"] {
            let s = v["seeds"][stage]
                .as_u64()
                .ok_or_else(|| bad(format!("missing `seeds.{stage}`")))?;
            dataset.push((format!("{stage}.seed"), s.to_string()));
        }
        dataset.sort();
        Ok(Self {
            row: TableRow {
                method,
                needs_retain_set,
                ra: m["RA"].as_f64(),
                fa: m["FA"].as_f64(),
                gap: m["Δ_gap"].as_f64(),
                wga: m["WGA"].as_f64(),
                mia,
            },
            table_split,
            dataset,
        })
    }
}

/// First setting on which two dataset descriptions disagree.
pub fn dataset_difference(a: &[(String, String)], b: &[(String, String)]) -> Option<String> {
    let get = |set: &[(String, String)], k: &str| {
        set.iter()
            .find(|(key, _)| key == k)
            .map_or("<unset>".to_string(), |(_, v)| v.clone())
    };
    let mut keys: Vec<&str> = a.iter().chain(b).map(|(k, _)| k.as_str()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter().find_map(|k| {
        let (x, y) = (get(a, k), get(b, k));
        (x != y).then(|| format!("{k} = {x} vs {y}"))
    })
}
