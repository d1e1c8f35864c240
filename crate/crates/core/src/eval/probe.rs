use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::nn::{forward, loss_and_grad, predict, Activation, Batch, MlpSpec, Params};
use crate::scalar::Scalar;

pub const PROBE_EPOCHS: usize = 200;
pub const PROBE_STEP: f64 = 0.1;
pub const PROBE_TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// Held-out accuracy (percentage) of predicting the bias attribute.
    pub bias_probe_accuracy: f64,
    pub model: String,
}

/// Multinomial logistic regression on fixed features.
///
/// Seeded 70/30 split, seeded init, then [`PROBE_EPOCHS`] full-batch
/// gradient steps of size [`PROBE_STEP`]. Returns held-out accuracy.
pub fn linear_probe<S: Scalar>(
    features: &[Vec<S>],
    labels: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "probe labels",
            expected: features.len(),
            got: labels.len(),
        });
    }
    if features.len() < 4 {
        return Err(Error::InvalidArgument(
            "probe needs at least 4 samples".into(),
        ));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::InvalidArgument(
            "probe labels take a single value; nothing to predict".into(),
        ));
    }
    let dim = features[0].len();
    let spec = MlpSpec::new(dim, vec![], num_classes, Activation::Tanh)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.shuffle(&mut rng);
    let n_train = ((features.len() as f64) * PROBE_TRAIN_FRACTION).round() as usize;
    let (train_idx, test_idx) = order.split_at(n_train.clamp(1, features.len() - 1));

    let batch = Batch::new(
        train_idx.iter().map(|&i| features[i].as_slice()).collect(),
        train_idx.iter().map(|&i| labels[i]).collect(),
    )?;
    let mut params = Params::<S>::init(&spec, seed);
    let step = S::of(PROBE_STEP);
    for _ in 0..PROBE_EPOCHS {
        let (_, g) = loss_and_grad(&params, &batch)?;
        let next: Vec<S> = params
            .values()
            .iter()
            .zip(&g.values)
            .map(|(&p, &gi)| p - step * gi)
            .collect();
        params = params.with_values(next)?;
    }
    let mut correct = 0usize;
    for &i in test_idx {
        if predict(&params, &features[i])? == labels[i] {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / test_idx.len() as f64)
}

/// Probes the frozen penultimate representation of `params` for the bias
/// attribute of every sample in `data`.
pub fn linear_probe_bias<S: Scalar>(
    params: &Params<S>,
    data: &DatasetSplit<S>,
    model: &str,
    seed: u64,
) -> Result<ProbeResult> {
    let features = data
        .samples()
        .iter()
        .map(|s| forward(params, &s.x).map(|f| f.hidden))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = data.samples().iter().map(|s| s.b).collect();
    Ok(ProbeResult {
        bias_probe_accuracy: linear_probe(&features, &labels, data.num_classes(), seed)?,
        model: model.to_string(),
    })
}
