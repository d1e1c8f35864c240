use crate::error::{Error, Result};
use crate::nn::{HessianDiag, Params};
use crate::scalar::Scalar;
use crate::unlearn::partition::{top_percentile, validate_percentile};

/// Binary selector of the causal pathway.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalMask<S> {
    pub bits: Vec<bool>,
    /// `0.5 * theta_i^2 * E[H_ii]` per parameter.
    pub saliency: Vec<S>,
    pub tau_p: f64,
}

impl<S: Scalar> CausalMask<S> {
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Every parameter in the causal pathway.
    pub fn all_ones(len: usize) -> Self {
        Self {
            bits: vec![true; len],
            saliency: vec![S::zero(); len],
            tau_p: 100.0,
        }
    }
}

/// Selects the top `tau_p` percent of saliencies (ties to lower indices).
pub fn mask_from_saliency<S: Scalar>(saliency: Vec<S>, tau_p: f64) -> Result<CausalMask<S>> {
    validate_percentile(tau_p, "mask percentile tau_p")?;
    if saliency.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("saliency".into()));
    }
    let mut bits = vec![false; saliency.len()];
    for i in top_percentile(&saliency, tau_p) {
        bits[i] = true;
    }
    Ok(CausalMask {
        bits,
        saliency,
        tau_p,
    })
}

/// Saliency `0.5 * theta_i^2 * diag_i` (signed unless `abs_saliency`) and
/// its top-percentile mask.
pub fn causal_mask<S: Scalar>(
    params: &Params<S>,
    diag: &HessianDiag<S>,
    tau_p: f64,
    abs_saliency: bool,
) -> Result<CausalMask<S>> {
    if diag.values.len() != params.len() {
        return Err(Error::DimensionMismatch {
            what: "Hessian diagonal",
            expected: params.len(),
            got: diag.values.len(),
        });
    }
    let half = S::of(0.5);
    let saliency = params
        .values()
        .iter()
        .zip(&diag.values)
        .map(|(&t, &h)| {
            let h = if abs_saliency { h.abs() } else { h };
            half * t * t * h
        })
        .collect();
    mask_from_saliency(saliency, tau_p)
}
