use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetSplit, ForgetSpec, SliceKind};
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, sgd_train, MlpSpec, Params, TrainConfig};
use crate::scalar::Scalar;
use crate::unlearn::config::{Method, UnlearnConfig};
use crate::unlearn::pathway::{apply_delta, for_each_batch, track_subsets, RunLog, StepRecord};

/// Offset added to the unlearning seed for the random relabelling.
pub const RELABEL_SEED_OFFSET: u64 = 0x5245_4c42;

fn check_method(config: &UnlearnConfig, expected: Method) -> Result<()> {
    config.validate()?;
    if config.method != expected {
        return Err(Error::InvalidArgument(format!(
            "{expected} runner called with method {}",
            config.method
        )));
    }
    Ok(())
}

/// Shared mini-batch loop: `sign = +1` ascends, `-1` descends.
fn first_order_run<S: Scalar>(
    original: &Params<S>,
    data: &DatasetSplit<S>,
    config: &UnlearnConfig,
    sign: S,
    track: &[(&str, &DatasetSplit<S>)],
) -> Result<(Params<S>, RunLog)> {
    let mut log = RunLog {
        method: config.method.to_string(),
        param_count: original.len(),
        ..RunLog::default()
    };
    if data.is_empty() {
        return Err(Error::Empty("forget set"));
    }
    let step_size = sign * S::of(config.alpha);
    let mut theta = original.clone();
    for_each_batch(
        data.len(),
        config.batch_size,
        config.epochs,
        config.seed,
        |epoch, step, batch| {
            let (l, g) = loss_and_grad(&theta, &data.batch_of(batch)?)?;
            let delta: Vec<S> = g.values.iter().map(|&gi| step_size * gi).collect();
            theta = apply_delta(&theta, &delta, config.method.as_str())?;
            log.steps.push(StepRecord {
                epoch,
                step,
                forget_loss: l.to_f64_lossy(),
                weight: 1.0,
                update_norm: crate::scalar::norm(&delta).to_f64_lossy(),
            });
            track_subsets(&theta, step, track, &mut log.dynamics)
        },
    )?;
    Ok((theta, log))
}

/// Gradient ascent on the forget-set loss.
pub fn run_neggrad<S: Scalar>(
    original: &Params<S>,
    forget: &DatasetSplit<S>,
    config: &UnlearnConfig,
    track: &[(&str, &DatasetSplit<S>)],
) -> Result<(Params<S>, RunLog)> {
    check_method(config, Method::NegGrad)?;
    first_order_run(original, forget, config, S::one(), track)
}

/// Every forget sample gets a label drawn uniformly from the other classes.
pub fn relabel_forget_set<S: Scalar>(
    forget: &DatasetSplit<S>,
    forget_class: ForgetSpec,
    seed: u64,
) -> Result<DatasetSplit<S>> {
    let k = forget.num_classes();
    let c = forget_class.class();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(RELABEL_SEED_OFFSET));
    let labels: Vec<usize> = forget
        .samples()
        .iter()
        .map(|_| {
            let r = rng.random_range(0..k - 1);
            if r >= c {
                r + 1
            } else {
                r
            }
        })
        .collect();
    forget.relabeled(&labels)
}

/// Descent fine-tuning on the forget set with random wrong labels.
pub fn run_random_label<S: Scalar>(
    original: &Params<S>,
    forget: &DatasetSplit<S>,
    forget_class: ForgetSpec,
    config: &UnlearnConfig,
    track: &[(&str, &DatasetSplit<S>)],
) -> Result<(Params<S>, RunLog)> {
    check_method(config, Method::RandomLabel)?;
    let relabeled = relabel_forget_set(forget, forget_class, config.seed)?;
    first_order_run(original, &relabeled, config, -S::one(), track)
}

/// Trains from a fresh seeded initialization on the retain classes only.
/// This is the one method that reads the retain set.
pub fn run_retrain<S: Scalar>(
    train: &DatasetSplit<S>,
    forget_class: ForgetSpec,
    spec: &MlpSpec,
    train_config: &TrainConfig,
) -> Result<Params<S>> {
    let retain = train.slice(forget_class, SliceKind::Retain);
    let init = Params::init(spec, train_config.seed);
    Ok(sgd_train(&init, &retain, train_config, &[])?.0)
}
