//! In-memory experiment stages. The commands in [`crate::commands`] wrap
//! these with artifact I/O; the ablation grids call them directly.

use std::time::Instant;

use shortcut_unlearn::data::{generate, ForgetSpec, SliceKind};
use shortcut_unlearn::eval::{
    linear_probe_bias, matched_non_members, metrics_report, mia_attack, partition_composition,
    sharpness_histogram, CompositionRow, DynamicsLog, SharpnessHistogram,
};
use shortcut_unlearn::nn::{sgd_train, Params};
use shortcut_unlearn::unlearn::{
    compute_sharpness, run_cupid, run_neggrad, run_random_label, run_retrain, Method, RunLog,
};
use shortcut_unlearn::{Dataset, ParamVector};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{ProbePair, RunReport, StageDiagnostics, StageSeeds};

pub const TRAIN_FORGET_ALIGNED: &str = "train_forget_aligned";
pub const TRAIN_FORGET_CONFLICTING: &str = "train_forget_conflicting";
pub const TEST_FORGET_ALIGNED: &str = "test_forget_aligned";
pub const TEST_FORGET_CONFLICTING: &str = "test_forget_conflicting";

/// Data and original model for one master seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub original: ParamVector,
    pub train_log: DynamicsLog,
}

pub fn generate_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    Ok(generate::<f64>(&cfg.gen_config())?)
}

/// Forget-class subgroup slices tracked while training and unlearning.
fn tracked_slices(
    train: &Dataset,
    test: &Dataset,
    forget: ForgetSpec,
) -> Vec<(&'static str, Dataset)> {
    vec![
        (
            TRAIN_FORGET_ALIGNED,
            train.slice(forget, SliceKind::ForgetAligned),
        ),
        (
            TRAIN_FORGET_CONFLICTING,
            train.slice(forget, SliceKind::ForgetConflicting),
        ),
        (
            TEST_FORGET_ALIGNED,
            test.slice(forget, SliceKind::ForgetAligned),
        ),
        (
            TEST_FORGET_CONFLICTING,
            test.slice(forget, SliceKind::ForgetConflicting),
        ),
    ]
}

fn as_track<'a>(slices: &'a [(&'static str, Dataset)]) -> Vec<(&'static str, &'a Dataset)> {
    slices.iter().map(|(n, d)| (*n, d)).collect()
}

pub fn train_original(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<(ParamVector, DynamicsLog)> {
    let spec = cfg.model_spec()?;
    let init = Params::init(&spec, cfg.train_seed());
    let slices = tracked_slices(train, test, cfg.forget_spec()?);
    Ok(sgd_train(
        &init,
        train,
        &cfg.train_config(),
        &as_track(&slices),
    )?)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (train, test) = generate_data(cfg)?;
    let (original, train_log) = train_original(cfg, &train, &test)?;
    Ok(Prepared {
        train,
        test,
        original,
        train_log,
    })
}

#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    pub params: ParamVector,
    pub log: RunLog,
    pub wall_clock_seconds: f64,
}

/// Runs the configured method. Only retraining reads the retain classes.
pub fn unlearn(
    cfg: &ExperimentConfig,
    train: &Dataset,
    original: &ParamVector,
) -> Result<UnlearnOutcome> {
    let forget = cfg.forget_spec()?;
    let forget_set = train.slice(forget, SliceKind::ForgetAll);
    let ucfg = cfg.unlearn_config();
    let start = Instant::now();
    let (params, log) = match ucfg.method {
        Method::Cupid => run_cupid(original, &forget_set, &ucfg, &[])?,
        Method::NegGrad => run_neggrad(original, &forget_set, &ucfg, &[])?,
        Method::RandomLabel => run_random_label(original, &forget_set, forget, &ucfg, &[])?,
        Method::Retrain => {
            let params = run_retrain(train, forget, original.spec(), &cfg.retrain_config())?;
            let log = RunLog {
                method: Method::Retrain.to_string(),
                param_count: params.len(),
                ..RunLog::default()
            };
            (params, log)
        }
    };
    Ok(UnlearnOutcome {
        params,
        log,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Scores an unlearned model against the original.
pub fn evaluate(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    original: &ParamVector,
    outcome: &UnlearnOutcome,
) -> Result<RunReport> {
    let forget = cfg.forget_spec()?;
    let method = cfg.unlearn.method;
    let seed = cfg.eval_seed();
    let params = &outcome.params;
    let metrics = cfg
        .eval
        .splits
        .iter()
        .map(|role| {
            let split = match role {
                shortcut_unlearn::data::SplitRole::Train => train,
                shortcut_unlearn::data::SplitRole::Test => test,
            };
            metrics_report(params, split, forget, method.as_str(), seed)
        })
        .collect::<shortcut_unlearn::Result<Vec<_>>>()?;
    let mia = if cfg.eval.mia {
        let members = train.slice(forget, SliceKind::ForgetAll);
        let non_members = matched_non_members(&members, test, forget);
        Some(mia_attack(params, &members, &non_members, seed)?)
    } else {
        None
    };
    let probe = if cfg.eval.probe {
        Some(ProbePair {
            original: linear_probe_bias(original, test, "original", seed)?.bias_probe_accuracy,
            unlearned: linear_probe_bias(params, test, "unlearned", seed)?.bias_probe_accuracy,
        })
    } else {
        None
    };
    Ok(RunReport {
        config: cfg.echo(),
        seeds: StageSeeds::of(cfg),
        method,
        metrics,
        mia,
        probe,
        stages: StageDiagnostics {
            tau_s: outcome.log.tau_s,
            causal_size: outcome.log.causal_size,
            mask_popcount: outcome.log.mask_popcount,
            param_count: outcome.log.param_count,
        },
        wall_clock_seconds: outcome.wall_clock_seconds,
    })
}

/// Test-split subgroup accuracies before and after gradient ascent, with
/// the bias probe of both models.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingSummary {
    pub aligned_before: f64,
    pub aligned_after: f64,
    pub conflicting_before: f64,
    pub conflicting_after: f64,
    pub probe_before: f64,
    pub probe_after: f64,
    pub dynamics: DynamicsLog,
}

/// Sharpness and forgetting analysis of the original model.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// Forget-set sharpness in forget-set order.
    pub omega: Vec<f64>,
    pub aligned: Vec<bool>,
    pub degenerate: Vec<bool>,
    pub histogram: SharpnessHistogram,
    pub composition: Vec<CompositionRow>,
    /// Fraction of conflicting samples in the whole forget set.
    pub conflicting_base_rate: f64,
    pub forgetting: ForgettingSummary,
}

impl Analysis {
    /// Mean conflicting sharpness over mean aligned sharpness.
    pub fn sharpness_ratio(&self) -> Option<f64> {
        match (self.histogram.aligned_mean, self.histogram.conflicting_mean) {
            (Some(a), Some(c)) if a > 0.0 => Some(c / a),
            _ => None,
        }
    }
}

fn accuracy_at_start_and_end(log: &DynamicsLog, subset: &str, start: f64) -> (f64, f64) {
    let end = log.series(subset).last().map_or(start, |r| r.accuracy);
    (start, end)
}

pub fn analyze(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    original: &ParamVector,
) -> Result<Analysis> {
    let forget = cfg.forget_spec()?;
    let forget_set = train.slice(forget, SliceKind::ForgetAll);
    let ucfg = cfg.unlearn_config();
    let table = compute_sharpness(original, &forget_set, ucfg.eta)?;
    let omega = table.omega_f64();
    let aligned = forget_set.aligned_flags();
    let histogram = sharpness_histogram(&omega, &aligned, cfg.eval.histogram_bins)?;
    let composition = partition_composition(&omega, &aligned, &cfg.eval.composition_ks)?;
    let conflicting_base_rate =
        aligned.iter().filter(|&&a| !a).count() as f64 / aligned.len() as f64;

    let slices = tracked_slices(train, test, forget);
    let test_slices = &slices[2..];
    let neggrad_cfg = shortcut_unlearn::unlearn::UnlearnConfig {
        method: Method::NegGrad,
        ..ucfg
    };
    let (ascended, log) = run_neggrad(original, &forget_set, &neggrad_cfg, &as_track(test_slices))?;
    let seed = cfg.eval_seed();
    let acc =
        |params: &ParamVector, d: &Dataset| shortcut_unlearn::eval::subset_accuracy(params, d);
    let (aligned_before, aligned_after) = accuracy_at_start_and_end(
        &log.dynamics,
        TEST_FORGET_ALIGNED,
        acc(original, &test_slices[0].1)?,
    );
    let (conflicting_before, conflicting_after) = accuracy_at_start_and_end(
        &log.dynamics,
        TEST_FORGET_CONFLICTING,
        acc(original, &test_slices[1].1)?,
    );
    let forgetting = ForgettingSummary {
        aligned_before,
        aligned_after,
        conflicting_before,
        conflicting_after,
        probe_before: linear_probe_bias(original, test, "original", seed)?.bias_probe_accuracy,
        probe_after: linear_probe_bias(&ascended, test, "neggrad", seed)?.bias_probe_accuracy,
        dynamics: log.dynamics,
    };
    Ok(Analysis {
        omega,
        aligned,
        degenerate: table.degenerate,
        histogram,
        composition,
        conflicting_base_rate,
        forgetting,
    })
}
