use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::HessianEstimator;
use crate::unlearn::partition::validate_percentile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Cupid,
    NegGrad,
    RandomLabel,
    Retrain,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Cupid,
        Method::NegGrad,
        Method::RandomLabel,
        Method::Retrain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cupid => "cupid",
            Method::NegGrad => "neggrad",
            Method::RandomLabel => "random_label",
            Method::Retrain => "retrain",
        }
    }

    /// Only retraining touches the retain set.
    pub fn needs_retain_set(self) -> bool {
        matches!(self, Method::Retrain)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method `{s}` (expected cupid, neggrad, random_label or retrain)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlearnConfig {
    pub method: Method,
    /// Step size of every unlearning update.
    pub alpha: f64,
    /// Length of the sharpness perturbation.
    pub eta: f64,
    /// Sharpness percentile defining the causal-approximated set.
    pub k: f64,
    /// Saliency percentile defining the causal pathway.
    pub tau_p: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub use_proj: bool,
    pub use_bias_grad: bool,
    pub use_sharp_weight: bool,
    /// Divide the batch sharpness weight by the mean sharpness of the
    /// causal-approximated set.
    pub sharp_weight_normalize: bool,
    /// Weight each sample's gradient by its own sharpness before the
    /// projection, instead of scaling the projected batch gradient.
    pub per_sample_weight: bool,
    /// Use `|H_ii|` in the saliency instead of the signed diagonal.
    pub abs_saliency: bool,
    /// Stage switches for component ablations.
    pub use_partition: bool,
    pub use_pathway: bool,
    pub use_targeted: bool,
    pub hessian: HessianEstimator,
    pub fd_step: f64,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        Self {
            method: Method::Cupid,
            alpha: 1.0,
            eta: 1e-3,
            k: 5.0,
            tau_p: 50.0,
            epochs: 1,
            batch_size: 64,
            seed: 0,
            use_proj: true,
            use_bias_grad: true,
            use_sharp_weight: true,
            sharp_weight_normalize: true,
            per_sample_weight: false,
            abs_saliency: false,
            use_partition: true,
            use_pathway: true,
            use_targeted: true,
            hessian: HessianEstimator::Hutchinson { probes: 64 },
            fd_step: 1e-3,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be > 0, got {v}"
                )))
            }
        };
        positive("alpha", self.alpha)?;
        positive("eta", self.eta)?;
        positive("fd_step", self.fd_step)?;
        validate_percentile(self.k, "k")?;
        validate_percentile(self.tau_p, "tau_p")?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if let HessianEstimator::Hutchinson { probes: 0 } = self.hessian {
            return Err(Error::InvalidArgument("hessian probes must be >= 1".into()));
        }
        if self.use_targeted && !self.use_partition {
            return Err(Error::InvalidArgument(
                "the targeted update needs the sharpness partition (use_partition)".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("salun".parse::<Method>().is_err());
        assert!(Method::Retrain.needs_retain_set());
        assert!(!Method::Cupid.needs_retain_set());
    }

    #[test]
    fn validation_bounds() {
        assert!(UnlearnConfig::default().validate().is_ok());
        for bad in [
            UnlearnConfig {
                k: 150.0,
                ..Default::default()
            },
            UnlearnConfig {
                k: 0.0,
                ..Default::default()
            },
            UnlearnConfig {
                tau_p: -1.0,
                ..Default::default()
            },
            UnlearnConfig {
                alpha: 0.0,
                ..Default::default()
            },
            UnlearnConfig {
                eta: f64::NAN,
                ..Default::default()
            },
            UnlearnConfig {
                batch_size: 0,
                ..Default::default()
            },
            UnlearnConfig {
                use_partition: false,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
