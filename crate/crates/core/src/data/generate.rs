use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::split::{BiasedSample, DatasetSplit, SplitRole};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Generator settings.
///
/// Each class `y` owns a unit direction `e_y` in both the core and the bias
/// sub-space. The core block is `core_mean * e_y + core_noise * N(0, I)`;
/// the bias block is `bias_mean * e_b + bias_noise * N(0, I)` where `b = y`
/// for aligned samples. With the defaults the bias block has four times the
/// signal-to-noise ratio of the core block, so it is the easier cue.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub num_classes: usize,
    pub core_dim: usize,
    pub bias_dim: usize,
    pub core_mean: f64,
    pub bias_mean: f64,
    pub core_noise: f64,
    pub bias_noise: f64,
    pub train_aligned: f64,
    pub test_aligned: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            core_dim: 10,
            bias_dim: 10,
            core_mean: 1.0,
            bias_mean: 2.0,
            core_noise: 1.0,
            bias_noise: 0.5,
            train_aligned: 0.995,
            test_aligned: 0.5,
            train_per_class: 2000,
            test_per_class: 400,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.core_dim < self.num_classes || self.bias_dim < self.num_classes {
            return Err(Error::InvalidArgument(format!(
                "core_dim ({}) and bias_dim ({}) must be >= num_classes ({}) for one-hot class directions",
                self.core_dim, self.bias_dim, self.num_classes
            )));
        }
        for (name, v) in [
            ("train_aligned", self.train_aligned),
            ("test_aligned", self.test_aligned),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        for (name, v) in [
            ("core_noise", self.core_noise),
            ("bias_noise", self.bias_noise),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !(self.core_mean.is_finite() && self.bias_mean.is_finite()) {
            return Err(Error::InvalidArgument("class means must be finite".into()));
        }
        Ok(())
    }

    /// Aligned samples per class for `n` samples at ratio `rho`.
    pub fn aligned_count(n: usize, rho: f64) -> usize {
        (rho * n as f64).round() as usize
    }
}

fn sample_split<S: Scalar>(
    cfg: &GenConfig,
    per_class: usize,
    rho: f64,
    role: SplitRole,
    rng: &mut ChaCha8Rng,
) -> Result<DatasetSplit<S>> {
    let k = cfg.num_classes;
    let n_aligned = GenConfig::aligned_count(per_class, rho);
    let mut samples = Vec::with_capacity(k * per_class);
    for y in 0..k {
        for i in 0..per_class {
            let b = if i < n_aligned {
                y
            } else {
                let r = rng.random_range(0..k - 1);
                if r >= y {
                    r + 1
                } else {
                    r
                }
            };
            let mut x = Vec::with_capacity(cfg.core_dim + cfg.bias_dim);
            for d in 0..cfg.core_dim {
                let z: f64 = StandardNormal.sample(rng);
                let mean = if d == y { cfg.core_mean } else { 0.0 };
                x.push(S::of(mean + cfg.core_noise * z));
            }
            for d in 0..cfg.bias_dim {
                let z: f64 = StandardNormal.sample(rng);
                let mean = if d == b { cfg.bias_mean } else { 0.0 };
                x.push(S::of(mean + cfg.bias_noise * z));
            }
            samples.push(BiasedSample {
                x,
                y,
                b,
                aligned: b == y,
            });
        }
    }
    samples.shuffle(rng);
    DatasetSplit::new(samples, role, k, cfg.core_dim, cfg.bias_dim)
}

/// Draws the (train, test) pair. Deterministic for a given config.
pub fn generate<S: Scalar>(cfg: &GenConfig) -> Result<(DatasetSplit<S>, DatasetSplit<S>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = sample_split(
        cfg,
        cfg.train_per_class,
        cfg.train_aligned,
        SplitRole::Train,
        &mut rng,
    )?;
    let test = sample_split(
        cfg,
        cfg.test_per_class,
        cfg.test_aligned,
        SplitRole::Test,
        &mut rng,
    )?;
    Ok((train, test))
}
