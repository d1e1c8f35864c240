use rayon::prelude::*;

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::nn::{Batch, MlpObjective, Objective, Params};
use crate::scalar::{norm, Scalar};

/// Gradient norms below this are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Per-sample sharpness of the forget set, aligned with its sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessTable<S> {
    pub omega: Vec<S>,
    pub eta: S,
    /// Samples whose gradient norm fell below [`DEGENERATE_NORM`].
    pub degenerate: Vec<bool>,
}

impl<S: Scalar> SharpnessTable<S> {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega_f64(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w.to_f64_lossy()).collect()
    }
}

/// Loss increase after a step of length `eta` along the normalized
/// gradient. Returns `(omega, degenerate)`; a vanishing gradient gives
/// `(0, true)`.
pub fn sharpness_of<S: Scalar, O: Objective<S> + ?Sized>(
    objective: &O,
    theta: &[S],
    eta: S,
) -> Result<(S, bool)> {
    if !(eta > S::zero()) {
        return Err(Error::InvalidArgument(format!(
            "sharpness step must be > 0, got {eta}"
        )));
    }
    let (base, g) = objective.loss_and_grad_at(theta)?;
    let g_norm = norm(&g);
    if !(g_norm >= S::of(DEGENERATE_NORM)) {
        return Ok((S::zero(), true));
    }
    let scale = eta / g_norm;
    let adv: Vec<S> = theta
        .iter()
        .zip(&g)
        .map(|(&t, &gi)| t + scale * gi)
        .collect();
    let perturbed = objective.loss_at(&adv)?;
    if !perturbed.is_finite() {
        return Err(Error::NonFinite("loss at the perturbed parameters".into()));
    }
    Ok((perturbed - base, false))
}

/// Sharpness of every sample in `forget` at `params`. Samples are scored
/// in parallel; the table keeps the forget-set order.
pub fn compute_sharpness<S: Scalar>(
    params: &Params<S>,
    forget: &DatasetSplit<S>,
    eta: S,
) -> Result<SharpnessTable<S>> {
    if forget.is_empty() {
        return Err(Error::Empty("forget set"));
    }
    let scored = forget
        .samples()
        .par_iter()
        .map(|s| {
            let batch = Batch::single(s.x.as_slice(), s.y);
            let objective = MlpObjective::new(params.spec(), &batch);
            sharpness_of(&objective, params.values(), eta)
        })
        .collect::<Result<Vec<_>>>()?;
    let (omega, degenerate) = scored.into_iter().unzip();
    Ok(SharpnessTable {
        omega,
        eta,
        degenerate,
    })
}
