//! Three-stage pathway unlearning.
//!
//! 1. Per-sample sharpness at the original parameters splits the forget set
//!    into its sharpest `k` percent (causal-approximated) and the rest.
//! 2. Saliency `0.5 * theta^2 * E[H_ii]` over the causal-approximated set
//!    selects the causal pathway (top `tau_p` percent of parameters).
//! 3. Each step ascends the forget loss: the forget gradient's projection on
//!    the causal gradient drives the causal pathway (scaled by sharpness),
//!    its orthogonal remainder drives everything else.
//!
//! Stages 1 and 2 are computed once at the original parameters and frozen.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{subset_accuracy, DynamicsLog};
use crate::nn::{hessian_diag, loss, loss_and_grad, weighted_loss_and_grad, HessianDiag, Params};
use crate::scalar::{all_finite, Scalar};
use crate::unlearn::config::{Method, UnlearnConfig};
use crate::unlearn::decompose::decompose;
use crate::unlearn::mask::{causal_mask, CausalMask};
use crate::unlearn::partition::{partition, ForgetPartition};
use crate::unlearn::sharpness::{compute_sharpness, SharpnessTable};

/// Offset added to the unlearning seed for the Hutchinson probes.
pub const HESSIAN_SEED_OFFSET: u64 = 0x4855_5443;

/// Frozen outputs of the first two stages.
#[derive(Debug, Clone, PartialEq)]
pub struct CupidStages<S> {
    pub table: SharpnessTable<S>,
    pub partition: ForgetPartition<S>,
    pub mask: CausalMask<S>,
    pub hessian: Option<HessianDiag<S>>,
}

impl<S: Scalar> CupidStages<S> {
    /// Computes sharpness, the partition and the causal mask at `params`.
    pub fn prepare(
        params: &Params<S>,
        forget: &DatasetSplit<S>,
        config: &UnlearnConfig,
    ) -> Result<Self> {
        config.validate()?;
        let table = compute_sharpness(params, forget, S::of(config.eta))?;
        let partition = if config.use_partition {
            partition(&table.omega, config.k)?
        } else {
            partition(&table.omega, 100.0)?
        };
        let (mask, hessian) = if config.use_pathway {
            let batch = forget.batch_of(&partition.causal)?;
            let diag = hessian_diag(
                params,
                &batch,
                config.hessian,
                S::of(config.fd_step),
                config.seed.wrapping_add(HESSIAN_SEED_OFFSET),
            )?;
            let mask = causal_mask(params, &diag, config.tau_p, config.abs_saliency)?;
            (mask, Some(diag))
        } else {
            (CausalMask::all_ones(params.len()), None)
        };
        Ok(Self {
            table,
            partition,
            mask,
            hessian,
        })
    }

    fn mean_omega(&self, indices: &[usize]) -> S {
        if indices.is_empty() {
            return S::zero();
        }
        indices.iter().map(|&i| self.table.omega[i]).sum::<S>() / S::of_usize(indices.len())
    }

    /// Sharpness weight of a batch: mean batch sharpness clamped at zero,
    /// optionally divided by the mean over the causal-approximated set.
    /// Falls back to 1 when that mean is not positive.
    pub fn batch_weight(&self, batch: &[usize], config: &UnlearnConfig) -> S {
        if !config.use_sharp_weight {
            return S::one();
        }
        let w = self.mean_omega(batch).max(S::zero());
        if !config.sharp_weight_normalize {
            return w;
        }
        let denom = self.mean_omega(&self.partition.causal);
        if denom > S::zero() {
            w / denom
        } else {
            S::one()
        }
    }

    /// Per-sample weights for the `per_sample_weight` variant.
    fn sample_weights(&self, batch: &[usize], config: &UnlearnConfig) -> Vec<S> {
        let denom = self.mean_omega(&self.partition.causal);
        batch
            .iter()
            .map(|&i| {
                let w = self.table.omega[i].max(S::zero());
                if config.sharp_weight_normalize && denom > S::zero() {
                    w / denom
                } else {
                    w
                }
            })
            .collect()
    }
}

/// `alpha * [w * g_proj * m + g_bias * (1 - m)]`, with either term dropped
/// when its flag is off.
pub fn pathway_update<S: Scalar>(
    g_proj: &[S],
    g_bias: &[S],
    mask: &[bool],
    weight: S,
    alpha: S,
    use_proj: bool,
    use_bias_grad: bool,
) -> Vec<S> {
    debug_assert!(g_proj.len() == g_bias.len() && g_bias.len() == mask.len());
    g_proj
        .iter()
        .zip(g_bias)
        .zip(mask)
        .map(|((&p, &b), &causal)| {
            if causal {
                if use_proj {
                    alpha * weight * p
                } else {
                    S::zero()
                }
            } else if use_bias_grad {
                alpha * b
            } else {
                S::zero()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    /// Mean loss of the step's batch before the update.
    pub forget_loss: f64,
    /// Sharpness weight applied to the causal term (1 for baselines).
    pub weight: f64,
    pub update_norm: f64,
}

/// Diagnostics of one unlearning run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub method: String,
    pub tau_s: Option<f64>,
    pub causal_size: Option<usize>,
    pub mask_popcount: Option<usize>,
    pub param_count: usize,
    pub steps: Vec<StepRecord>,
    /// Per-step loss/accuracy of tracked subsets after each update.
    pub dynamics: DynamicsLog,
}

pub(crate) fn track_subsets<S: Scalar>(
    params: &Params<S>,
    step: usize,
    track: &[(&str, &DatasetSplit<S>)],
    log: &mut DynamicsLog,
) -> Result<()> {
    for (name, subset) in track {
        if subset.is_empty() {
            continue;
        }
        let l = loss(params, &subset.batch()?)?;
        log.push(
            step,
            name,
            l.to_f64_lossy(),
            subset_accuracy(params, subset)?,
        );
    }
    Ok(())
}

/// Runs `body` over seeded, shuffled mini-batches of `0..n` for `epochs`
/// epochs. The step counter passed to `body` starts at 1.
pub(crate) fn for_each_batch(
    n: usize,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    mut body: impl FnMut(usize, usize, &[usize]) -> Result<()>,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            step += 1;
            body(epoch, step, chunk)?;
        }
    }
    Ok(())
}

pub(crate) fn apply_delta<S: Scalar>(
    params: &Params<S>,
    delta: &[S],
    what: &str,
) -> Result<Params<S>> {
    if !all_finite(delta) {
        return Err(Error::NonFinite(format!("{what} update")));
    }
    let next = params.offset(delta, S::one());
    if !all_finite(next.values()) {
        return Err(Error::NonFinite(format!("parameters after {what} update")));
    }
    Ok(next)
}

/// One targeted update on the forget-set batch `batch` (indices into
/// `forget`). Returns the new parameters and the step's diagnostics.
pub fn cupid_step<S: Scalar>(
    theta: &Params<S>,
    forget: &DatasetSplit<S>,
    batch: &[usize],
    stages: &CupidStages<S>,
    config: &UnlearnConfig,
) -> Result<(Params<S>, StepRecord)> {
    let alpha = S::of(config.alpha);
    let forget_batch = forget.batch_of(batch)?;
    let (batch_loss, g_f) = loss_and_grad(theta, &forget_batch)?;
    let g_causal = || -> Result<_> {
        Ok(loss_and_grad(theta, &forget.batch_of(&stages.partition.causal)?)?.1)
    };

    let (delta, weight) = if config.use_targeted {
        let g_causal = g_causal()?;
        let parts = decompose(&g_f, &g_causal)?;
        if config.per_sample_weight && config.use_sharp_weight {
            let weights = stages.sample_weights(batch, config);
            let (_, g_weighted) = weighted_loss_and_grad(theta, &forget_batch, &weights)?;
            let weighted = decompose(&g_weighted, &g_causal)?;
            let delta = pathway_update(
                &weighted.g_proj.values,
                &parts.g_bias.values,
                &stages.mask.bits,
                S::one(),
                alpha,
                config.use_proj,
                config.use_bias_grad,
            );
            let mean_w = weights.iter().copied().sum::<S>() / S::of_usize(weights.len());
            (delta, mean_w)
        } else {
            let w = stages.batch_weight(batch, config);
            let delta = pathway_update(
                &parts.g_proj.values,
                &parts.g_bias.values,
                &stages.mask.bits,
                w,
                alpha,
                config.use_proj,
                config.use_bias_grad,
            );
            (delta, w)
        }
    } else {
        // Component ablation: plain ascent along the causal (or full forget)
        // gradient, restricted to the causal pathway.
        let direction = if config.use_partition {
            g_causal()?
        } else {
            g_f
        };
        let delta = direction
            .values
            .iter()
            .zip(&stages.mask.bits)
            .map(|(&g, &m)| if m { alpha * g } else { S::zero() })
            .collect();
        (delta, S::one())
    };

    let update_norm = crate::scalar::norm(&delta).to_f64_lossy();
    let next = apply_delta(theta, &delta, "pathway")?;
    Ok((
        next,
        StepRecord {
            epoch: 0,
            step: 0,
            forget_loss: batch_loss.to_f64_lossy(),
            weight: weight.to_f64_lossy(),
            update_norm,
        },
    ))
}

/// Full three-stage run. Only the forget set is ever read; `track` names
/// extra subsets whose loss/accuracy is logged after every step.
pub fn run_cupid<S: Scalar>(
    original: &Params<S>,
    forget: &DatasetSplit<S>,
    config: &UnlearnConfig,
    track: &[(&str, &DatasetSplit<S>)],
) -> Result<(Params<S>, RunLog)> {
    if config.method != Method::Cupid {
        return Err(Error::InvalidArgument(format!(
            "run_cupid called with method {}",
            config.method
        )));
    }
    let stages = CupidStages::prepare(original, forget, config)?;
    run_cupid_with_stages(original, forget, &stages, config, track)
}

/// Stage-3 loop with precomputed (frozen) stages.
pub fn run_cupid_with_stages<S: Scalar>(
    original: &Params<S>,
    forget: &DatasetSplit<S>,
    stages: &CupidStages<S>,
    config: &UnlearnConfig,
    track: &[(&str, &DatasetSplit<S>)],
) -> Result<(Params<S>, RunLog)> {
    config.validate()?;
    let mut log = RunLog {
        method: Method::Cupid.to_string(),
        tau_s: Some(stages.partition.threshold.to_f64_lossy()),
        causal_size: Some(stages.partition.causal.len()),
        mask_popcount: Some(stages.mask.popcount()),
        param_count: original.len(),
        ..RunLog::default()
    };
    let mut theta = original.clone();
    for_each_batch(
        forget.len(),
        config.batch_size,
        config.epochs,
        config.seed,
        |epoch, step, batch| {
            let (next, mut record) = cupid_step(&theta, forget, batch, stages, config)?;
            record.epoch = epoch;
            record.step = step;
            theta = next;
            log.steps.push(record);
            track_subsets(&theta, step, track, &mut log.dynamics)
        },
    )?;
    Ok((theta, log))
}
