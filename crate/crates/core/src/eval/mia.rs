//! Loss-threshold membership inference.
//!
//! Each pool is split in half by a seeded shuffle. The threshold that
//! maximizes balanced accuracy on the calibration halves (member iff
//! `loss < threshold`) is then scored on the evaluation halves. A value near
//! 0.5 means the attacker cannot tell members from non-members.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetSplit, ForgetSpec, SliceKind};
use crate::error::{Error, Result};
use crate::nn::{sample_losses, Params};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MiaResult {
    /// Balanced accuracy on the evaluation halves, in `[0, 1]`.
    pub balanced_accuracy: f64,
    pub threshold: f64,
    pub members: usize,
    pub non_members: usize,
}

fn balanced_accuracy(members: &[f64], non_members: &[f64], threshold: f64) -> f64 {
    let tpr = members.iter().filter(|&&l| l < threshold).count() as f64 / members.len() as f64;
    let tnr =
        non_members.iter().filter(|&&l| l >= threshold).count() as f64 / non_members.len() as f64;
    0.5 * (tpr + tnr)
}

fn halves(mut v: Vec<f64>, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    v.shuffle(rng);
    let eval = v.split_off(v.len() / 2);
    (v, eval)
}

pub fn mia_from_losses(members: &[f64], non_members: &[f64], seed: u64) -> Result<MiaResult> {
    if members.len() < 4 || non_members.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "membership inference needs >= 4 samples per pool (got {} members, {} non-members)",
            members.len(),
            non_members.len()
        )));
    }
    if members.iter().chain(non_members).any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("membership-inference losses".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m_cal, m_eval) = halves(members.to_vec(), &mut rng);
    let (n_cal, n_eval) = halves(non_members.to_vec(), &mut rng);

    let mut pooled: Vec<f64> = m_cal.iter().chain(&n_cal).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    // Candidates: below everything, every midpoint, above everything.
    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    candidates.push(pooled[0] - 1.0);
    candidates.extend(pooled.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(pooled[pooled.len() - 1] + 1.0);

    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for &t in &candidates {
        let score = balanced_accuracy(&m_cal, &n_cal, t);
        if score > best.0 {
            best = (score, t);
        }
    }
    Ok(MiaResult {
        balanced_accuracy: balanced_accuracy(&m_eval, &n_eval, best.1),
        threshold: best.1,
        members: members.len(),
        non_members: non_members.len(),
    })
}

pub fn mia_attack<S: Scalar>(
    params: &Params<S>,
    members: &DatasetSplit<S>,
    non_members: &DatasetSplit<S>,
    seed: u64,
) -> Result<MiaResult> {
    if members.is_empty() || non_members.is_empty() {
        return Err(Error::Empty("membership-inference pool"));
    }
    let to_f64 = |v: Vec<S>| v.into_iter().map(Scalar::to_f64_lossy).collect::<Vec<_>>();
    let m = to_f64(sample_losses(params, &members.batch()?)?);
    let n = to_f64(sample_losses(params, &non_members.batch()?)?);
    mia_from_losses(&m, &n, seed)
}

/// Forget-class test samples resampled to the aligned/conflicting mix of
/// the forget set, so the attacker scores membership rather than the shift
/// between a biased train split and a balanced test split.
///
/// All aligned test samples are kept; conflicting ones are added (in index
/// order) until the ratio matches the forget set, rounding to nearest.
pub fn matched_non_members<S: Scalar>(
    forget_set: &DatasetSplit<S>,
    test: &DatasetSplit<S>,
    forget: ForgetSpec,
) -> DatasetSplit<S> {
    let n_ba = forget_set.samples().iter().filter(|s| s.aligned).count();
    let n_bc = forget_set.len() - n_ba;
    let ba = test.slice_indices(forget, SliceKind::ForgetAligned);
    let bc = test.slice_indices(forget, SliceKind::ForgetConflicting);
    let want_bc = if n_ba == 0 {
        bc.len()
    } else {
        ((ba.len() as f64) * n_bc as f64 / n_ba as f64).round() as usize
    };
    let mut keep: Vec<usize> = ba.into_iter().chain(bc.into_iter().take(want_bc)).collect();
    keep.sort_unstable();
    test.select(&keep)
}
