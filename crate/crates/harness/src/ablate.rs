//! Ablation grids: every cell is run on each seed and averaged.

use std::fmt::Write as _;

use crate::commands::{write, Layout};
use crate::config::{ExperimentConfig, Grid, Origin};
use crate::error::{HarnessError, Result};
use crate::pipeline;
use crate::report::RunReport;

/// One grid cell: a name and the settings it overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: &'static str,
    pub settings: Vec<(&'static str, &'static str)>,
}

fn cell(name: &'static str, settings: &[(&'static str, &'static str)]) -> Cell {
    Cell {
        name,
        settings: settings.to_vec(),
    }
}

pub fn cells(grid: Grid) -> Vec<Cell> {
    const CUPID: (&str, &str) = ("unlearn.method", "cupid");
    match grid {
        Grid::Methods => vec![
            cell("cupid", &[CUPID]),
            cell("neggrad", &[("unlearn.method", "neggrad")]),
            cell("random_label", &[("unlearn.method", "random_label")]),
            cell("retrain", &[("unlearn.method", "retrain")]),
        ],
        Grid::Stages => {
            let stages = |p: &'static str, w: &'static str, t: &'static str| {
                vec![
                    CUPID,
                    ("unlearn.use_partition", p),
                    ("unlearn.use_pathway", w),
                    ("unlearn.use_targeted", t),
                ]
            };
            vec![
                Cell {
                    name: "ascent",
                    settings: stages("false", "false", "false"),
                },
                Cell {
                    name: "partition",
                    settings: stages("true", "false", "false"),
                },
                Cell {
                    name: "partition_pathway",
                    settings: stages("true", "true", "false"),
                },
                Cell {
                    name: "full",
                    settings: stages("true", "true", "true"),
                },
            ]
        }
        Grid::Gradients => {
            let g = |p: &'static str, b: &'static str| {
                vec![CUPID, ("unlearn.use_proj", p), ("unlearn.use_bias_grad", b)]
            };
            vec![
                Cell {
                    name: "proj_and_bias",
                    settings: g("true", "true"),
                },
                Cell {
                    name: "proj_only",
                    settings: g("true", "false"),
                },
                Cell {
                    name: "bias_only",
                    settings: g("false", "true"),
                },
                Cell {
                    name: "neither",
                    settings: g("false", "false"),
                },
            ]
        }
        Grid::Reweighting => vec![
            cell("weighted", &[CUPID, ("unlearn.use_sharp_weight", "true")]),
            cell(
                "unweighted",
                &[CUPID, ("unlearn.use_sharp_weight", "false")],
            ),
        ],
    }
}

/// Seed-averaged metrics of one cell. Accuracies and MIA are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub cell: Cell,
    pub seeds: usize,
    pub ra: Option<f64>,
    pub fa: Option<f64>,
    pub gap: Option<f64>,
    pub wga: Option<f64>,
    pub mia: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub grid: Grid,
    pub rows: Vec<AblationRow>,
    /// `reports[cell][seed]`, in grid and seed order.
    pub reports: Vec<Vec<RunReport>>,
}

impl AblationResult {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.cell.name == name)
    }

    pub fn to_csv(&self) -> String {
        let keys: Vec<&str> = self
            .rows
            .iter()
            .flat_map(|r| r.cell.settings.iter().map(|(k, _)| *k))
            .fold(Vec::new(), |mut acc, k| {
                if !acc.contains(&k) {
                    acc.push(k);
                }
                acc
            });
        let mut out = String::from("cell");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push_str(",seeds,RA,FA,Δ_gap,WGA,MIA\n");
        let num = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.4}"));
        for r in &self.rows {
            out.push_str(r.cell.name);
            for k in &keys {
                let v = r
                    .cell
                    .settings
                    .iter()
                    .find(|(key, _)| key == k)
                    .map_or("", |(_, v)| v);
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(
                out,
                ",{},{},{},{},{},{}",
                r.seeds,
                num(r.ra),
                num(r.fa),
                num(r.gap),
                num(r.wga),
                num(r.mia)
            );
        }
        out
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs every cell of `grid` on every seed of `cfg.ablate.seeds`. Each seed
/// generates its own data and original model; all cells of a seed share
/// them.
pub fn run_grid(cfg: &ExperimentConfig, grid: Grid) -> Result<AblationResult> {
    let grid_cells = cells(grid);
    if grid_cells.is_empty() || cfg.ablate.seeds.is_empty() {
        return Err(HarnessError::Validation(format!(
            "ablation grid {} has no cells or no seeds",
            grid.as_str()
        )));
    }
    let mut cell_cfgs = Vec::with_capacity(grid_cells.len());
    for c in &grid_cells {
        let mut cell_cfg = cfg.clone();
        for (k, v) in &c.settings {
            cell_cfg.set(k, v, &Origin::Flag)?;
        }
        cell_cfg.run_name = Some(c.name.to_string());
        cell_cfg.validate()?;
        cell_cfgs.push(cell_cfg);
    }

    let mut reports: Vec<Vec<RunReport>> = vec![Vec::new(); grid_cells.len()];
    for &seed in &cfg.ablate.seeds {
        let prepared = pipeline::prepare(&cfg.with_master_seed(seed))?;
        for (i, cell_cfg) in cell_cfgs.iter().enumerate() {
            let seeded = cell_cfg.with_master_seed(seed);
            let outcome = pipeline::unlearn(&seeded, &prepared.train, &prepared.original)?;
            reports[i].push(pipeline::evaluate(
                &seeded,
                &prepared.train,
                &prepared.test,
                &prepared.original,
                &outcome,
            )?);
        }
    }

    let rows = grid_cells
        .into_iter()
        .zip(&reports)
        .map(|(c, reps)| {
            let rows: Vec<_> = reps.iter().map(RunReport::row).collect();
            AblationRow {
                cell: c,
                seeds: rows.len(),
                ra: mean(rows.iter().map(|r| r.ra)),
                fa: mean(rows.iter().map(|r| r.fa)),
                gap: mean(rows.iter().map(|r| r.gap)),
                wga: mean(rows.iter().map(|r| r.wga)),
                mia: mean(rows.iter().map(|r| r.mia)),
            }
        })
        .collect();
    Ok(AblationResult {
        grid,
        rows,
        reports,
    })
}

/// `ablate`: runs the configured grid and writes its table and reports.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<AblationResult> {
    let result = run_grid(cfg, cfg.ablate.grid)?;
    let dir = Layout::of(cfg).ablate_dir();
    let name = result.grid.as_str();
    for (row, reps) in result.rows.iter().zip(&result.reports) {
        for (seed, rep) in cfg.ablate.seeds.iter().zip(reps) {
            let path = dir
                .join(name)
                .join(row.cell.name)
                .join(format!("seed{seed}.json"));
            write(&path, rep.to_json_string())?;
        }
    }
    write(&dir.join(format!("{name}.csv")), result.to_csv())?;
    Ok(result)
}
