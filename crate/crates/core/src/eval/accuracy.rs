use crate::data::{DatasetSplit, ForgetSpec, SliceKind, SplitRole};
use crate::error::{Error, Result};
use crate::nn::{predict, Params};
use crate::scalar::Scalar;

/// Percentage of samples whose arg-max prediction equals the label.
pub fn subset_accuracy<S: Scalar>(params: &Params<S>, split: &DatasetSplit<S>) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Empty("split for accuracy"));
    }
    let mut correct = 0usize;
    for s in split.samples() {
        if predict(params, &s.x)? == s.y {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / split.len() as f64)
}

fn accuracy_or_absent<S: Scalar>(
    params: &Params<S>,
    split: &DatasetSplit<S>,
) -> Result<Option<f64>> {
    if split.is_empty() {
        Ok(None)
    } else {
        subset_accuracy(params, split).map(Some)
    }
}

/// Retain/forget accuracies for one split. Fields whose slice is empty are
/// `None` rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub split: SplitRole,
    pub method: String,
    pub seed: u64,
    /// RA: accuracy on retain-class samples.
    pub retain_accuracy: Option<f64>,
    /// FA: accuracy on forget-class samples.
    pub forget_accuracy: Option<f64>,
    pub aligned_accuracy: Option<f64>,
    pub conflicting_accuracy: Option<f64>,
    /// `|acc_BA - acc_BC|`.
    pub gap: Option<f64>,
    /// The better of the two forget-class subgroups, `max(acc_BA, acc_BC)`.
    pub worst_group_accuracy: Option<f64>,
}

impl MetricsReport {
    pub fn from_accuracies(
        split: SplitRole,
        method: impl Into<String>,
        seed: u64,
        retain: Option<f64>,
        forget: Option<f64>,
        aligned: Option<f64>,
        conflicting: Option<f64>,
    ) -> Self {
        let (gap, wga) = match (aligned, conflicting) {
            (Some(a), Some(c)) => (Some((a - c).abs()), Some(a.max(c))),
            _ => (None, None),
        };
        Self {
            split,
            method: method.into(),
            seed,
            retain_accuracy: retain,
            forget_accuracy: forget,
            aligned_accuracy: aligned,
            conflicting_accuracy: conflicting,
            gap,
            worst_group_accuracy: wga,
        }
    }
}

pub fn metrics_report<S: Scalar>(
    params: &Params<S>,
    split: &DatasetSplit<S>,
    forget: ForgetSpec,
    method: &str,
    seed: u64,
) -> Result<MetricsReport> {
    let acc = |which| accuracy_or_absent(params, &split.slice(forget, which));
    Ok(MetricsReport::from_accuracies(
        split.role(),
        method,
        seed,
        acc(SliceKind::Retain)?,
        acc(SliceKind::ForgetAll)?,
        acc(SliceKind::ForgetAligned)?,
        acc(SliceKind::ForgetConflicting)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BiasedSample;
    use crate::nn::{Activation, MlpSpec};

    /// Linear 2-feature model whose prediction is the class with the
    /// largest bias logit; weights are zero so the bias alone decides.
    fn constant_predictor(class: usize, k: usize) -> Params<f64> {
        let spec = MlpSpec::new(2, vec![], k, Activation::Tanh).unwrap();
        let mut v = vec![0.0; spec.param_count()];
        v[2 * k + class] = 1.0;
        Params::from_values(&spec, v).unwrap()
    }

    /// Predicts class 1 when the first feature is positive, else class 0.
    fn sign_predictor() -> Params<f64> {
        let spec = MlpSpec::new(2, vec![], 2, Activation::Tanh).unwrap();
        Params::from_values(&spec, vec![-1.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    fn split_of(rows: &[(f64, usize, usize)], k: usize) -> DatasetSplit<f64> {
        let samples = rows
            .iter()
            .map(|&(x, y, b)| BiasedSample {
                x: vec![x, 0.0],
                y,
                b,
                aligned: y == b,
            })
            .collect();
        DatasetSplit::new(samples, SplitRole::Test, k, 1, 1).unwrap()
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let rows: Vec<_> = (0..8)
            .map(|i| (if i % 2 == 0 { -1.0 } else { 1.0 }, i % 2, i % 2))
            .collect();
        let s = split_of(&rows, 2);
        assert_eq!(subset_accuracy(&sign_predictor(), &s).unwrap(), 100.0);

        let rows: Vec<_> = (0..12).map(|i| (0.0, i % 4, i % 4)).collect();
        let s = split_of(&rows, 4);
        assert_eq!(
            subset_accuracy(&constant_predictor(2, 4), &s).unwrap(),
            25.0
        );
    }

    #[test]
    fn counts_seven_of_ten() {
        let mut rows: Vec<_> = (0..7).map(|_| (1.0, 1, 1)).collect();
        rows.extend((0..3).map(|_| (1.0, 0, 0)));
        let s = split_of(&rows, 2);
        assert!((subset_accuracy(&sign_predictor(), &s).unwrap() - 70.0).abs() < 1e-12);
        assert!(subset_accuracy(&sign_predictor(), &s.empty_like()).is_err());
    }

    #[test]
    fn gap_and_worst_group_follow_definitions() {
        let r = MetricsReport::from_accuracies(
            SplitRole::Test,
            "x",
            0,
            Some(90.0),
            Some(40.0),
            Some(20.0),
            Some(60.0),
        );
        assert_eq!(r.gap, Some(40.0));
        assert_eq!(r.worst_group_accuracy, Some(60.0));
    }

    #[test]
    fn perfect_forgetting_reports_zeros() {
        // Forget class 1; the sign predictor says 0 for every x < 0.
        let rows = [(-1.0, 1, 1), (-1.0, 1, 0), (-1.0, 0, 0), (-2.0, 0, 1)];
        let s = split_of(&rows, 2);
        let f = ForgetSpec::new(1, 2).unwrap();
        let r = metrics_report(&sign_predictor(), &s, f, "m", 3).unwrap();
        assert_eq!(r.forget_accuracy, Some(0.0));
        assert_eq!(r.worst_group_accuracy, Some(0.0));
        assert_eq!(r.gap, Some(0.0));
        assert_eq!(r.retain_accuracy, Some(100.0));
    }

    #[test]
    fn empty_subgroup_is_absent() {
        let rows = [(1.0, 1, 1), (-1.0, 0, 0)];
        let s = split_of(&rows, 2);
        let f = ForgetSpec::new(1, 2).unwrap();
        let r = metrics_report(&sign_predictor(), &s, f, "m", 0).unwrap();
        assert_eq!(r.conflicting_accuracy, None);
        assert_eq!(r.gap, None);
        assert_eq!(r.worst_group_accuracy, None);
        assert_eq!(r.aligned_accuracy, Some(100.0));
    }
}
