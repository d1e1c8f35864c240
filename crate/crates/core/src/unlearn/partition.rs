use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `ceil(pct * n / 100)`, computed so that exact products are not pushed up
/// by rounding noise (e.g. 5% of 2000 is 100, not 101).
pub fn percentile_count(pct: f64, n: usize) -> usize {
    let exact = pct * n as f64 / 100.0;
    let nearest = exact.round();
    let count = if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        exact.ceil()
    };
    (count as usize).min(n)
}

/// Indices of the `percentile_count(pct, n)` largest scores; ties prefer the
/// lower index. Returned in ascending index order.
pub fn top_percentile<S: Scalar>(scores: &[S], pct: f64) -> Vec<usize> {
    let count = percentile_count(pct, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut top = order[..count].to_vec();
    top.sort_unstable();
    top
}

fn check_percentile(pct: f64, what: &str) -> Result<()> {
    if pct > 0.0 && pct <= 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} must lie in (0, 100], got {pct}"
        )))
    }
}

/// Split of the forget set into its sharpest `k` percent (causal-approximated)
/// and the remainder (bias-approximated).
#[derive(Debug, Clone, PartialEq)]
pub struct ForgetPartition<S> {
    pub causal: Vec<usize>,
    pub bias: Vec<usize>,
    /// Smallest sharpness among the selected samples.
    pub threshold: S,
    pub k: f64,
}

pub fn partition<S: Scalar>(omega: &[S], k: f64) -> Result<ForgetPartition<S>> {
    if omega.is_empty() {
        return Err(Error::Empty("sharpness table"));
    }
    check_percentile(k, "sharpness percentile k")?;
    if omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("sharpness table".into()));
    }
    let causal = top_percentile(omega, k);
    let mut selected = vec![false; omega.len()];
    for &i in &causal {
        selected[i] = true;
    }
    let bias = (0..omega.len()).filter(|&i| !selected[i]).collect();
    let threshold = causal.iter().map(|&i| omega[i]).fold(S::infinity(), S::min);
    Ok(ForgetPartition {
        causal,
        bias,
        threshold,
        k,
    })
}

pub(crate) fn validate_percentile(pct: f64, what: &str) -> Result<()> {
    check_percentile(pct, what)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_the_sharpest_quarter() {
        let p = partition(&[0.1, 0.9, 0.5, 0.2], 25.0).unwrap();
        assert_eq!(p.causal, vec![1]);
        assert_eq!(p.bias, vec![0, 2, 3]);
        assert_eq!(p.threshold, 0.9);
    }

    #[test]
    fn full_percentile_selects_everything() {
        let p = partition(&[0.3, 0.1, 0.2], 100.0).unwrap();
        assert_eq!(p.causal, vec![0, 1, 2]);
        assert!(p.bias.is_empty());
        assert_eq!(p.threshold, 0.1);
    }

    #[test]
    fn ties_go_to_lower_indices() {
        let p = partition(&[0.5f64; 4], 50.0).unwrap();
        assert_eq!(p.causal, vec![0, 1]);
    }

    #[test]
    fn count_rule() {
        assert_eq!(percentile_count(5.0, 2000), 100);
        assert_eq!(percentile_count(50.0, 3), 2);
        assert_eq!(percentile_count(0.1, 10), 1);
        assert_eq!(percentile_count(100.0, 7), 7);
        assert_eq!(percentile_count(7.0, 100), 7);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(partition::<f64>(&[], 5.0).is_err());
        assert!(partition(&[1.0], 0.0).is_err());
        assert!(partition(&[1.0], 150.0).is_err());
        assert!(partition(&[f64::NAN], 50.0).is_err());
    }
}
