//! Acceptance suite. Every test checks one numbered criterion at its stated
//! tolerance and prints a single `criterion N ...: PASS|FAIL` line; run with
//! `--nocapture` to see them.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use shortcut_unlearn::data::ForgetSpec;
use shortcut_unlearn::eval::{metrics_report, MetricsReport};
use shortcut_unlearn::nn::{
    grad, hessian_diag, loss, Activation, Batch, GradVector, HessianEstimator, MlpSpec, Params,
};
use shortcut_unlearn::unlearn::{decompose, mask_from_saliency, partition, top_percentile, Method};
use unlearn_harness::ablate::run_grid;
use unlearn_harness::commands::{
    cmd_analyze, cmd_eval, cmd_gen_data, cmd_report, cmd_train, cmd_unlearn,
};
use unlearn_harness::config::{Grid, Origin};
use unlearn_harness::pipeline::{
    analyze, prepare, Analysis, Prepared, TRAIN_FORGET_ALIGNED, TRAIN_FORGET_CONFLICTING,
};
use unlearn_harness::ExperimentConfig;

const SEEDS: [u64; 3] = [0, 1, 2];
const BC_BASE_RATE: f64 = 0.005;

fn verdict(n: u32, title: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} {title}: {status} ({detail})");
    assert!(pass, "criterion {n} ({title}) failed: {detail}");
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.random_range(-1.0..1.0))
        .collect()
}

fn central_difference(params: &Params<f64>, batch: &Batch<'_, f64>, h: f64) -> Vec<f64> {
    let mut theta = params.values().to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = theta[i];
            theta[i] = orig + h;
            let up = loss(&params.with_values(theta.clone()).unwrap(), batch).unwrap();
            theta[i] = orig - h;
            let down = loss(&params.with_values(theta.clone()).unwrap(), batch).unwrap();
            theta[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Smallest |pre-activation| over every hidden unit and input, using the
/// documented layout (per layer: row-major `out x in` weights, then biases).
fn closest_kink(theta: &[f64], dims: &[usize], xs: &[Vec<f64>]) -> f64 {
    let mut closest = f64::INFINITY;
    for x in xs {
        let mut a = x.clone();
        let mut off = 0;
        for l in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let w = &theta[off + o * n_in..off + (o + 1) * n_in];
                    theta[off + n_in * n_out + o]
                        + w.iter().zip(&a).map(|(w, a)| w * a).sum::<f64>()
                })
                .collect();
            off += n_in * n_out + n_out;
            if l + 2 < dims.len() {
                closest = z.iter().fold(closest, |m, v| m.min(v.abs()));
            }
            a = z.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    closest
}

#[test]
fn gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let cases = 24;
    let mut case = 0;
    while case < cases {
        let input = rng.random_range(2..14);
        let hidden: Vec<usize> = (0..rng.random_range(0..3))
            .map(|_| rng.random_range(1..20))
            .collect();
        let k = rng.random_range(2..6);
        let act = if case % 4 == 3 {
            Activation::Relu
        } else {
            Activation::Tanh
        };
        let spec = MlpSpec::new(input, hidden.clone(), k, act).unwrap();
        assert!(spec.param_count() <= 1000);
        let theta = uniform_vec(&mut rng, spec.param_count(), 0.8);
        let n = rng.random_range(1..=16);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut rng, input, 2.0)).collect();
        let mut dims = vec![input];
        dims.extend(&hidden);
        dims.push(k);
        // Central differences straddling a ReLU kink measure a half-slope.
        if act == Activation::Relu && closest_kink(&theta, &dims, &xs) < 1e-3 {
            continue;
        }
        let params = Params::from_values(&spec, theta).unwrap();
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys).unwrap();
        let analytic = grad(&params, &batch).unwrap();
        let numeric = central_difference(&params, &batch, 1e-5);
        for (a, b) in analytic.values.iter().zip(&numeric) {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-6));
        }
        case += 1;
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "gradient vs central differences",
        worst < 1e-5 && within(elapsed, 10.0),
        &format!("{cases} nets, max rel err {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn hutchinson_matches_exact_diagonal() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let spec = MlpSpec::new(10, vec![18], 4, Activation::Tanh).unwrap();
    assert!(spec.param_count() <= 300);
    let params = Params::<f64>::init(&spec, 7);
    let xs: Vec<Vec<f64>> = (0..24).map(|_| uniform_vec(&mut rng, 10, 2.0)).collect();
    let ys: Vec<usize> = (0..24).map(|i| i % 4).collect();
    let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys).unwrap();
    let exact = hessian_diag(&params, &batch, HessianEstimator::ExactFd, 1e-3, 0).unwrap();
    let est = hessian_diag(
        &params,
        &batch,
        HessianEstimator::Hutchinson { probes: 512 },
        1e-3,
        31,
    )
    .unwrap();
    let rms = (exact.values.iter().map(|v| v * v).sum::<f64>() / exact.values.len() as f64).sqrt();
    let mut rel: Vec<f64> = exact
        .values
        .iter()
        .zip(&est.values)
        .filter(|(e, _)| e.abs() >= 0.01 * rms)
        .map(|(e, h)| (h - e).abs() / e.abs())
        .collect();
    rel.sort_by(f64::total_cmp);
    let median = rel[rel.len() / 2];
    let elapsed = start.elapsed();
    verdict(
        2,
        "Hutchinson vs exact Hessian diagonal",
        median <= 0.2 && within(elapsed, 30.0),
        &format!(
            "{} params, {} coords scored, median rel err {median:.3}, {elapsed:.2?}",
            spec.param_count(),
            rel.len()
        ),
    );
}

#[test]
fn decomposition_algebra() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_ortho: f64 = 0.0;
    let mut failures = Vec::new();
    for case in 0..1000 {
        let n = rng.random_range(1..200);
        let sf = 10f64.powf(rng.random_range(-3.0..3.0));
        let sc = 10f64.powf(rng.random_range(-3.0..3.0));
        let g_f = GradVector::new(uniform_vec(&mut rng, n, sf));
        let g_c = GradVector::new(uniform_vec(&mut rng, n, sc));
        let d = decompose(&g_f, &g_c).unwrap();
        for i in 0..n {
            let (p, b, g) = (d.g_proj.values[i], d.g_bias.values[i], g_f.values[i]);
            if b != g - p || ((p + b) - g).abs() > f64::EPSILON * p.abs().max(g.abs()) {
                failures.push(format!("case {case} coord {i}"));
            }
        }
        let ortho = d.g_bias.dot(&g_c).abs() / (g_f.norm() * g_c.norm());
        worst_ortho = worst_ortho.max(ortho);
    }
    let g_f = GradVector::new(vec![0.5, -1.0, 2.0]);
    let degenerate = decompose(&g_f, &GradVector::zeros(3)).unwrap();
    let degenerate_ok =
        degenerate.g_proj.values == vec![0.0; 3] && degenerate.g_bias.values == g_f.values;
    let elapsed = start.elapsed();
    verdict(
        3,
        "gradient decomposition",
        failures.is_empty() && worst_ortho <= 1e-9 && degenerate_ok && within(elapsed, 1.0),
        &format!(
            "1000 pairs, {} recombination failures, max |<g_bias,g_c>|/(|g_f||g_c|) {worst_ortho:.2e}, degenerate branch {}, {elapsed:.2?}",
            failures.len(),
            if degenerate_ok { "ok" } else { "wrong" }
        ),
    );
}

#[test]
fn mask_and_partition_combinatorics() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut problems = Vec::new();
    for case in 0..100 {
        let n = rng.random_range(1..400usize);
        // Quarter-percent grid, so the expected count is exact integer math.
        let quarters = rng.random_range(1..=400usize);
        let pct = quarters as f64 / 4.0;
        let want = (quarters * n).div_ceil(400);
        let scores: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| rng.random_range(0..5) as f64).collect()
        } else {
            uniform_vec(&mut rng, n, 1.0)
        };

        let top = top_percentile(&scores, pct);
        let mut selected = vec![false; n];
        for &i in &top {
            selected[i] = true;
        }
        if top.len() != want {
            problems.push(format!("case {case}: {} selected, want {want}", top.len()));
        }
        for i in 0..n {
            for j in 0..n {
                let outranks = scores[i] > scores[j] || (scores[i] == scores[j] && i < j);
                if selected[j] && !selected[i] && outranks {
                    problems.push(format!("case {case}: {i} should be selected before {j}"));
                }
            }
        }

        let p = partition(&scores, pct).unwrap();
        let min_selected = p
            .causal
            .iter()
            .map(|&i| scores[i])
            .fold(f64::INFINITY, f64::min);
        if p.causal != top || p.causal.len() + p.bias.len() != n || p.threshold != min_selected {
            problems.push(format!("case {case}: partition disagrees with selection"));
        }
        if p.bias.iter().any(|i| p.causal.contains(i)) {
            problems.push(format!("case {case}: partition overlaps"));
        }

        let mask = mask_from_saliency(scores.clone(), pct).unwrap();
        if mask.popcount() != want || mask.bits != selected {
            problems.push(format!("case {case}: mask popcount {}", mask.popcount()));
        }
        for c in [0.25, 3.7, 1e6] {
            let scaled = mask_from_saliency(scores.iter().map(|s| c * s).collect(), pct).unwrap();
            if scaled.bits != mask.bits {
                problems.push(format!("case {case}: scaling by {c} changed the mask"));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        4,
        "mask and partition combinatorics",
        problems.is_empty() && within(elapsed, 1.0),
        &format!(
            "100 cases, {} violations {:?}, {elapsed:.2?}",
            problems.len(),
            problems.first()
        ),
    );
}

struct SeedRun {
    prepared: Prepared,
    analysis: Analysis,
    original_test: MetricsReport,
}

struct SeedRuns {
    runs: Vec<SeedRun>,
    elapsed: Duration,
}

fn forget_spec(cfg: &ExperimentConfig) -> ForgetSpec {
    cfg.forget_spec().unwrap()
}

fn seed_runs() -> &'static SeedRuns {
    static RUNS: OnceLock<SeedRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let runs = SEEDS
            .iter()
            .map(|&seed| {
                let cfg = ExperimentConfig::default().with_master_seed(seed);
                let prepared = prepare(&cfg).unwrap();
                let original_test = metrics_report(
                    &prepared.original,
                    &prepared.test,
                    forget_spec(&cfg),
                    "original",
                    seed,
                )
                .unwrap();
                let analysis =
                    analyze(&cfg, &prepared.train, &prepared.test, &prepared.original).unwrap();
                SeedRun {
                    prepared,
                    analysis,
                    original_test,
                }
            })
            .collect();
        SeedRuns {
            runs,
            elapsed: start.elapsed(),
        }
    })
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn biased_training_learns_the_shortcut() {
    let runs = seed_runs();
    let gaps: Vec<f64> = runs
        .runs
        .iter()
        .map(|r| {
            r.original_test.aligned_accuracy.unwrap()
                - r.original_test.conflicting_accuracy.unwrap()
        })
        .collect();
    let avg = mean(gaps.iter().copied());
    verdict(
        5,
        "shortcut learned (test BA - BC on forget class)",
        avg >= 20.0 && within(runs.elapsed, 60.0),
        &format!(
            "per seed {gaps:.1?}, mean {avg:.1} points, setup {:.2?}",
            runs.elapsed
        ),
    );
}

#[test]
fn aligned_subset_is_learned_first() {
    let runs = seed_runs();
    let mut detail = Vec::new();
    let mut pass = true;
    for r in &runs.runs {
        let log = &r.prepared.train_log;
        let ba: Vec<f64> = log
            .series(TRAIN_FORGET_ALIGNED)
            .take(3)
            .map(|x| x.accuracy)
            .collect();
        let bc: Vec<f64> = log
            .series(TRAIN_FORGET_CONFLICTING)
            .take(3)
            .map(|x| x.accuracy)
            .collect();
        pass &= ba.len() == 3 && bc.len() == 3 && ba.iter().zip(&bc).all(|(a, c)| a > c);
        detail.push(format!("BA {ba:.1?} vs BC {bc:.1?}"));
    }
    verdict(
        6,
        "BA accuracy above BC for epochs 1-3",
        pass,
        &detail.join("; "),
    );
}

#[test]
fn conflicting_samples_are_sharper() {
    let ratios: Vec<f64> = seed_runs()
        .runs
        .iter()
        .map(|r| r.analysis.sharpness_ratio().unwrap_or(0.0))
        .collect();
    verdict(
        7,
        "mean sharpness BC / BA",
        ratios.iter().all(|&q| q >= 2.0),
        &format!("ratios {ratios:.1?}"),
    );
}

#[test]
fn sharp_slice_is_enriched_in_conflicting_samples() {
    let fractions: Vec<f64> = seed_runs()
        .runs
        .iter()
        .map(|r| {
            r.analysis
                .composition
                .iter()
                .find(|c| c.k == 5.0)
                .expect("k = 5 in the composition sweep")
                .conflicting_fraction
        })
        .collect();
    verdict(
        8,
        "BC fraction of the top-5% sharpness slice",
        fractions.iter().all(|&f| f >= 5.0 * BC_BASE_RATE),
        &format!(
            "fractions {fractions:.3?}, threshold {:.3}",
            5.0 * BC_BASE_RATE
        ),
    );
}

#[test]
fn gradient_ascent_removes_the_shortcut() {
    let runs = seed_runs();
    let deltas: Vec<f64> = runs
        .runs
        .iter()
        .map(|r| r.analysis.forgetting.conflicting_after - r.analysis.forgetting.conflicting_before)
        .collect();
    let drops: Vec<f64> = runs
        .runs
        .iter()
        .map(|r| r.analysis.forgetting.probe_before - r.analysis.forgetting.probe_after)
        .collect();
    let non_decreasing = deltas.iter().filter(|&&d| d >= 0.0).count();
    verdict(
        9,
        "NegGrad: BC accuracy not reduced, bias probe drops",
        non_decreasing >= 2 && drops.iter().all(|&d| d >= 10.0),
        &format!("test BC change {deltas:.1?}, probe drop {drops:.1?} points"),
    );
}

#[test]
fn method_comparison_directions() {
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let grid = run_grid(&cfg, Grid::Methods).unwrap();
    let elapsed = start.elapsed();
    let row = |m: Method| grid.row(m.as_str()).unwrap();
    let (c, n, r, t) = (
        row(Method::Cupid),
        row(Method::NegGrad),
        row(Method::RandomLabel),
        row(Method::Retrain),
    );
    let v = |x: Option<f64>| x.unwrap();
    let original_ra = mean(SEEDS.iter().map(|&s| {
        let seeded = cfg.with_master_seed(s);
        let p = prepare(&seeded).unwrap();
        metrics_report(&p.original, &p.test, forget_spec(&seeded), "original", s)
            .unwrap()
            .retain_accuracy
            .unwrap()
    }));
    let clauses = [
        ("FA(cupid) < FA(neggrad)", v(c.fa) < v(n.fa)),
        ("FA(cupid) < FA(random_label)", v(c.fa) < v(r.fa)),
        ("gap(cupid) < gap(neggrad)", v(c.gap) < v(n.gap)),
        ("WGA(cupid) minimal", v(c.wga) <= v(n.wga).min(v(r.wga))),
        (
            "RA(cupid) >= RA(original) - 3",
            v(c.ra) >= original_ra - 3.0,
        ),
        ("FA(retrain) <= 5", v(t.fa) <= 5.0),
        ("runtime < 120 s", within(elapsed, 120.0)),
    ];
    let failed: Vec<&str> = clauses
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    let summary: Vec<String> = grid
        .rows
        .iter()
        .map(|r| {
            format!(
                "{} RA {:.1} FA {:.1} gap {:.1} WGA {:.1}",
                r.cell.name,
                v(r.ra),
                v(r.fa),
                v(r.gap),
                v(r.wga)
            )
        })
        .collect();
    verdict(
        10,
        "method comparison",
        failed.is_empty(),
        &format!(
            "{}; original RA {original_ra:.1}; failed clauses {failed:?}; {elapsed:.2?}",
            summary.join(", ")
        ),
    );
}

#[test]
fn both_gradient_terms_are_needed() {
    let grid = run_grid(&ExperimentConfig::default(), Grid::Gradients).unwrap();
    let both = grid.row("proj_and_bias").unwrap();
    let others: Vec<_> = grid
        .rows
        .iter()
        .filter(|r| r.cell.name != "proj_and_bias")
        .collect();
    let pass = others
        .iter()
        .all(|o| both.fa.unwrap() <= o.fa.unwrap() && both.wga.unwrap() <= o.wga.unwrap());
    let summary: Vec<String> = grid
        .rows
        .iter()
        .map(|r| {
            format!(
                "{} FA {:.1} WGA {:.1}",
                r.cell.name,
                r.fa.unwrap(),
                r.wga.unwrap()
            )
        })
        .collect();
    verdict(11, "gradient-term ablation", pass, &summary.join(", "));
}

#[test]
fn sharpness_weight_lowers_forget_accuracy() {
    let grid = run_grid(&ExperimentConfig::default(), Grid::Reweighting).unwrap();
    let w = grid.row("weighted").unwrap().fa.unwrap();
    let u = grid.row("unweighted").unwrap().fa.unwrap();
    verdict(
        12,
        "sharpness reweighting ablation",
        w < u,
        &format!("FA weighted {w:.2}, unweighted {u:.2}"),
    );
}

/// Drops `wall_clock_seconds` from a JSON document or from every line of
/// a JSON-lines stream.
fn without_timing(text: &str) -> String {
    let strip = |doc: &str| {
        let mut v: Value = serde_json::from_str(doc).unwrap();
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_clock_seconds");
        }
        v.to_string()
    };
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        return strip(&v.to_string());
    }
    text.lines().map(strip).collect::<Vec<_>>().join("\n")
}

/// Every artifact of a full CLI pipeline, with timing fields removed.
fn pipeline_artifacts(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("output.dir", out.to_str().unwrap(), &Origin::Flag)
        .unwrap();
    cmd_gen_data(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    cmd_analyze(&cfg).unwrap();
    for m in Method::ALL {
        let mut run = cfg.clone();
        run.set("unlearn.method", m.as_str(), &Origin::Flag)
            .unwrap();
        cmd_unlearn(&run).unwrap();
        cmd_eval(&run).unwrap();
    }
    cmd_report(&cfg, &[]).unwrap();

    let mut files = Vec::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(out).unwrap().display().to_string();
            let mut bytes = fs::read(&path).unwrap();
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or_default();
            if ext == "json" || ext == "jsonl" {
                bytes = without_timing(&String::from_utf8(bytes).unwrap()).into_bytes();
            }
            files.push((rel, bytes));
        }
    }
    files.sort();
    files
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn pipeline_is_deterministic() {
    // Same output directory each time, so the configurations are identical.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lab");
    let mut runs = Vec::new();
    for threads in [1, 4, 4] {
        runs.push(in_pool(threads, || pipeline_artifacts(&out)));
        fs::remove_dir_all(&out).unwrap();
    }
    let (a, b, c) = (&runs[0], &runs[1], &runs[2]);
    let differing: Vec<&str> = a
        .iter()
        .zip(b)
        .zip(c)
        .filter(|((x, y), z)| x != y || y != z)
        .map(|((x, _), _)| x.0.as_str())
        .collect();
    let reports = a.iter().filter(|(n, _)| n.ends_with("report.json")).count();
    let same_listing = a.len() == b.len() && b.len() == c.len();
    verdict(
        13,
        "determinism across runs and thread counts",
        same_listing && differing.is_empty() && reports == Method::ALL.len(),
        &format!(
            "{} artifacts, {reports} run reports, threads 1/4/4, differing {differing:?}",
            a.len()
        ),
    );
}
