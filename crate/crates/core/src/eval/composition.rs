use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::unlearn::partition;

/// True-group make-up of the causal-approximated set at one percentile.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionRow {
    pub k: f64,
    pub causal_size: usize,
    pub aligned_fraction: f64,
    pub conflicting_fraction: f64,
}

/// For every `k` in the sweep, the fraction of truly aligned and truly
/// conflicting samples among the `k` percent sharpest.
pub fn partition_composition<S: Scalar>(
    omega: &[S],
    aligned: &[bool],
    ks: &[f64],
) -> Result<Vec<CompositionRow>> {
    if omega.len() != aligned.len() {
        return Err(Error::DimensionMismatch {
            what: "alignment flags",
            expected: omega.len(),
            got: aligned.len(),
        });
    }
    ks.iter()
        .map(|&k| {
            let p = partition(omega, k)?;
            let n = p.causal.len();
            let n_ba = p.causal.iter().filter(|&&i| aligned[i]).count();
            Ok(CompositionRow {
                k,
                causal_size: n,
                aligned_fraction: n_ba as f64 / n as f64,
                conflicting_fraction: (n - n_ba) as f64 / n as f64,
            })
        })
        .collect()
}
