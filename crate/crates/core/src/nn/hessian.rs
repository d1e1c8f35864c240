//! Hessian-vector products by central differences of the analytic gradient,
//! and two estimators of the Hessian diagonal built on them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::mlp::{Batch, GradVector, Params};
use crate::nn::objective::{MlpObjective, Objective};
use crate::scalar::{all_finite, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianEstimator {
    /// Rademacher probes, `diag ~ mean_m v_m * (H v_m)`.
    Hutchinson { probes: usize },
    /// One central difference per coordinate (2P gradient evaluations).
    ExactFd,
}

impl HessianEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            HessianEstimator::Hutchinson { .. } => "hutchinson",
            HessianEstimator::ExactFd => "exact_fd",
        }
    }
}

impl fmt::Display for HessianEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses `hutchinson` (64 probes) or `exact_fd`; the probe count is set
/// separately by callers that read it from configuration.
impl FromStr for HessianEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hutchinson" => Ok(HessianEstimator::Hutchinson { probes: 64 }),
            "exact_fd" => Ok(HessianEstimator::ExactFd),
            other => Err(Error::InvalidArgument(format!(
                "unknown Hessian estimator `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianDiag<S> {
    pub values: Vec<S>,
    pub estimator: HessianEstimator,
    pub fd_step: S,
}

/// `(grad(theta + eps v) - grad(theta - eps v)) / (2 eps)`.
pub fn hvp_fd_objective<S: Scalar, O: Objective<S> + ?Sized>(
    objective: &O,
    theta: &[S],
    v: &[S],
    eps: S,
) -> Result<Vec<S>> {
    if !(eps > S::zero()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be > 0, got {eps}"
        )));
    }
    for (what, len) in [("parameter vector", theta.len()), ("direction", v.len())] {
        if len != objective.dim() {
            return Err(Error::DimensionMismatch {
                what,
                expected: objective.dim(),
                got: len,
            });
        }
    }
    if v.iter().all(|&x| x == S::zero()) {
        return Ok(vec![S::zero(); v.len()]);
    }
    let plus: Vec<S> = theta.iter().zip(v).map(|(&t, &d)| t + eps * d).collect();
    let minus: Vec<S> = theta.iter().zip(v).map(|(&t, &d)| t - eps * d).collect();
    let g_plus = objective.grad_at(&plus)?;
    let g_minus = objective.grad_at(&minus)?;
    let two_eps = eps + eps;
    let hv: Vec<S> = g_plus
        .iter()
        .zip(&g_minus)
        .map(|(&a, &b)| (a - b) / two_eps)
        .collect();
    if !all_finite(&hv) {
        return Err(Error::NonFinite(format!(
            "Hessian-vector product (step {eps} may be too small)"
        )));
    }
    Ok(hv)
}

pub fn hvp_fd<S: Scalar>(
    params: &Params<S>,
    batch: &Batch<'_, S>,
    v: &GradVector<S>,
    eps: S,
) -> Result<GradVector<S>> {
    let objective = MlpObjective::new(params.spec(), batch);
    hvp_fd_objective(&objective, params.values(), &v.values, eps).map(GradVector::new)
}

/// Deterministic Rademacher probes for a given seed.
fn rademacher_probes<S: Scalar>(dim: usize, probes: usize, seed: u64) -> Vec<Vec<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    if rng.random::<bool>() {
                        S::one()
                    } else {
                        -S::one()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn hessian_diag_objective<S: Scalar, O: Objective<S> + ?Sized>(
    objective: &O,
    theta: &[S],
    estimator: HessianEstimator,
    eps: S,
    seed: u64,
) -> Result<HessianDiag<S>> {
    let dim = objective.dim();
    if theta.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "parameter vector length",
            expected: dim,
            got: theta.len(),
        });
    }
    let values = match estimator {
        HessianEstimator::Hutchinson { probes } => {
            if probes == 0 {
                return Err(Error::InvalidArgument(
                    "Hutchinson estimator needs at least one probe".into(),
                ));
            }
            let vs = rademacher_probes::<S>(dim, probes, seed);
            // Products run in parallel; the reduction below is in probe order.
            let products = vs
                .par_iter()
                .map(|v| hvp_fd_objective(objective, theta, v, eps))
                .collect::<Result<Vec<_>>>()?;
            let mut acc = vec![S::zero(); dim];
            for (v, hv) in vs.iter().zip(&products) {
                for ((a, &vi), &hvi) in acc.iter_mut().zip(v).zip(hv) {
                    *a = *a + vi * hvi;
                }
            }
            let m = S::of_usize(probes);
            acc.into_iter().map(|a| a / m).collect::<Vec<_>>()
        }
        HessianEstimator::ExactFd => {
            if !(eps > S::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "finite-difference step must be > 0, got {eps}"
                )));
            }
            (0..dim)
                .into_par_iter()
                .map(|i| {
                    let mut shifted = theta.to_vec();
                    shifted[i] = theta[i] + eps;
                    let plus = objective.grad_at(&shifted)?[i];
                    shifted[i] = theta[i] - eps;
                    let minus = objective.grad_at(&shifted)?[i];
                    Ok((plus - minus) / (eps + eps))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    if !all_finite(&values) {
        return Err(Error::NonFinite("Hessian diagonal".into()));
    }
    Ok(HessianDiag {
        values,
        estimator,
        fd_step: eps,
    })
}

pub fn hessian_diag<S: Scalar>(
    params: &Params<S>,
    batch: &Batch<'_, S>,
    estimator: HessianEstimator,
    eps: S,
    seed: u64,
) -> Result<HessianDiag<S>> {
    let objective = MlpObjective::new(params.spec(), batch);
    hessian_diag_objective(&objective, params.values(), estimator, eps, seed)
}
