use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{subset_accuracy, DynamicsLog};
use crate::nn::mlp::{loss, loss_and_grad, Params};
use crate::scalar::{all_finite, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.05,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be >= 0, got {}",
                self.lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mini-batch gradient descent on mean cross-entropy with seeded shuffling.
///
/// After every epoch the loss and accuracy of each tracked subset are
/// appended to the returned log under the subset's name.
pub fn sgd_train<S: Scalar>(
    init: &Params<S>,
    data: &DatasetSplit<S>,
    cfg: &TrainConfig,
    track: &[(&str, &DatasetSplit<S>)],
) -> Result<(Params<S>, DynamicsLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init.clone();
    let mut log = DynamicsLog::default();
    let lr = S::of(cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.batch_of(chunk)?;
            let (l, g) = loss_and_grad(&params, &batch)?;
            if !l.is_finite() || !g.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: l.to_f64_lossy(),
                });
            }
            for (p, &gi) in params.values_mut().iter_mut().zip(&g.values) {
                *p = *p - lr * gi;
            }
            if !all_finite(params.values()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: l.to_f64_lossy(),
                });
            }
        }
        for (name, subset) in track {
            if subset.is_empty() {
                continue;
            }
            let l = loss(&params, &subset.batch()?)?;
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: usize::MAX,
                    loss: l.to_f64_lossy(),
                });
            }
            let acc = subset_accuracy(&params, subset)?;
            log.push(epoch, name, l.to_f64_lossy(), acc);
        }
    }
    Ok((params, log))
}
