//! Dense feed-forward classifier with analytic backpropagation.
//!
//! Parameters live in one flat vector. Layer `l` contributes its weight
//! matrix (row-major, shape `out x in`) followed by its bias vector, layers in
//! input-to-output order. Every other module (sharpness, Hessian diagonal,
//! masks, pathway updates) works on this flat layout.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(S::zero()),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative<S: Scalar>(self, z: S, a: S) -> S {
        match self {
            Activation::Tanh => S::one() - a * a,
            Activation::Relu => {
                if z > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidSpec(format!(
                "unknown activation `{other}` (expected tanh or relu)"
            ))),
        }
    }
}

/// Architecture of the classifier. An empty `hidden_dims` gives a
/// multinomial linear model.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    num_classes: usize,
    activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        num_classes: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be >= 1".into()));
        }
        if let Some(pos) = hidden_dims.iter().position(|&h| h == 0) {
            return Err(Error::InvalidSpec(format!(
                "hidden layer {pos} has width 0"
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            num_classes,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Width of the representation handed to the output layer.
    pub fn feature_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }

    pub(crate) fn layers(&self) -> Vec<LayerLayout> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.num_classes);
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let layout = LayerLayout {
                    in_dim: w[0],
                    out_dim: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                layout
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.in_dim * l.out_dim + l.out_dim)
            .sum()
    }

    /// Indices of every bias entry in the flat layout.
    pub fn bias_indices(&self) -> Vec<usize> {
        self.layers()
            .iter()
            .flat_map(|l| l.bias_offset..l.bias_offset + l.out_dim)
            .collect()
    }
}

/// Flat parameter vector tied to the architecture it parameterizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<S> {
    spec: MlpSpec,
    values: Vec<S>,
}

impl<S: Scalar> Params<S> {
    /// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![S::zero(); spec.param_count()];
        for layer in spec.layers() {
            let scale = 1.0 / (layer.in_dim as f64).sqrt();
            let weights = &mut values
                [layer.weight_offset..layer.weight_offset + layer.in_dim * layer.out_dim];
            for w in weights {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = S::of(z * scale);
            }
        }
        Self {
            spec: spec.clone(),
            values,
        }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            spec: spec.clone(),
            values: vec![S::zero(); spec.param_count()],
        }
    }

    pub fn from_values(spec: &MlpSpec, values: Vec<S>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector length",
                expected: spec.param_count(),
                got: values.len(),
            });
        }
        if !all_finite(&values) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self {
            spec: spec.clone(),
            values,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same architecture, new values. Length and finiteness are checked.
    pub fn with_values(&self, values: Vec<S>) -> Result<Self> {
        Self::from_values(&self.spec, values)
    }

    /// `self + scale * direction`, without finiteness checks.
    pub(crate) fn offset(&self, direction: &[S], scale: S) -> Self {
        debug_assert_eq!(direction.len(), self.values.len());
        Self {
            spec: self.spec.clone(),
            values: self
                .values
                .iter()
                .zip(direction)
                .map(|(&p, &d)| p + scale * d)
                .collect(),
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }
}

/// Gradient (or any other vector) aligned with a [`Params`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector<S> {
    pub values: Vec<S>,
}

impl<S: Scalar> GradVector<S> {
    pub fn new(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![S::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &Self) -> S {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> S {
        norm(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.values)
    }
}

/// A non-empty set of labelled inputs borrowed from some dataset.
#[derive(Debug, Clone)]
pub struct Batch<'a, S> {
    inputs: Vec<&'a [S]>,
    labels: Vec<usize>,
}

impl<'a, S: Scalar> Batch<'a, S> {
    pub fn new(inputs: Vec<&'a [S]>, labels: Vec<usize>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if inputs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "batch labels",
                expected: inputs.len(),
                got: labels.len(),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn single(input: &'a [S], label: usize) -> Self {
        Self {
            inputs: vec![input],
            labels: vec![label],
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[&'a [S]] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [S], usize)> + '_ {
        self.inputs.iter().copied().zip(self.labels.iter().copied())
    }

    fn validate(&self, spec: &MlpSpec) -> Result<()> {
        for (x, y) in self.iter() {
            if x.len() != spec.input_dim {
                return Err(Error::DimensionMismatch {
                    what: "input features",
                    expected: spec.input_dim,
                    got: x.len(),
                });
            }
            if y >= spec.num_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {y} out of range for {} classes",
                    spec.num_classes
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward<S> {
    pub logits: Vec<S>,
    /// Last hidden activation (the raw input for a linear model).
    pub hidden: Vec<S>,
}

/// Pre-activations and activations of every layer for one input.
struct Trace<S> {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<S>>,
    pre: Vec<Vec<S>>,
}

fn trace<S: Scalar>(params: &Params<S>, layers: &[LayerLayout], x: &[S]) -> Trace<S> {
    let theta = &params.values;
    let last = layers.len() - 1;
    let mut acts = Vec::with_capacity(layers.len() + 1);
    let mut pre = Vec::with_capacity(layers.len());
    acts.push(x.to_vec());
    for (l, layer) in layers.iter().enumerate() {
        let input = &acts[l];
        let z: Vec<S> = (0..layer.out_dim)
            .map(|o| {
                let row = &theta[layer.weight_offset + o * layer.in_dim
                    ..layer.weight_offset + (o + 1) * layer.in_dim];
                dot(row, input) + theta[layer.bias_offset + o]
            })
            .collect();
        let a = if l == last {
            z.clone()
        } else {
            z.iter().map(|&v| params.spec.activation.apply(v)).collect()
        };
        pre.push(z);
        acts.push(a);
    }
    Trace { acts, pre }
}

fn check_input<S>(spec: &MlpSpec, x: &[S]) -> Result<()> {
    if x.len() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            what: "input features",
            expected: spec.input_dim,
            got: x.len(),
        });
    }
    Ok(())
}

pub fn forward<S: Scalar>(params: &Params<S>, x: &[S]) -> Result<Forward<S>> {
    check_input(&params.spec, x)?;
    let layers = params.spec.layers();
    let mut t = trace(params, &layers, x);
    let logits = t.acts.pop().expect("at least one layer");
    let hidden = t.acts.pop().expect("input is always present");
    Ok(Forward { logits, hidden })
}

pub fn log_sum_exp<S: Scalar>(z: &[S]) -> S {
    let m = z.iter().copied().fold(S::neg_infinity(), S::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<S>().ln()
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax<S: Scalar>(z: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn cross_entropy<S: Scalar>(logits: &[S], label: usize) -> S {
    // Clamp the rounding residue so a saturated prediction never reports < 0.
    (log_sum_exp(logits) - logits[label]).max(S::zero())
}

pub fn predict<S: Scalar>(params: &Params<S>, x: &[S]) -> Result<usize> {
    Ok(argmax(&forward(params, x)?.logits))
}

/// Per-sample softmax cross-entropy, in batch order.
pub fn sample_losses<S: Scalar>(params: &Params<S>, batch: &Batch<'_, S>) -> Result<Vec<S>> {
    batch.validate(&params.spec)?;
    let layers = params.spec.layers();
    Ok(batch
        .iter()
        .map(|(x, y)| {
            let t = trace(params, &layers, x);
            cross_entropy(t.acts.last().expect("output layer"), y)
        })
        .collect())
}

/// Mean softmax cross-entropy over the batch.
pub fn loss<S: Scalar>(params: &Params<S>, batch: &Batch<'_, S>) -> Result<S> {
    let losses = sample_losses(params, batch)?;
    Ok(losses.iter().copied().sum::<S>() / S::of_usize(losses.len()))
}

/// Mean loss and its exact gradient by backpropagation.
pub fn loss_and_grad<S: Scalar>(
    params: &Params<S>,
    batch: &Batch<'_, S>,
) -> Result<(S, GradVector<S>)> {
    backprop(params, batch, None)
}

/// Gradient of `(1/n) sum_i w_i * loss_i`. The returned loss is still the
/// unweighted mean.
pub fn weighted_loss_and_grad<S: Scalar>(
    params: &Params<S>,
    batch: &Batch<'_, S>,
    weights: &[S],
) -> Result<(S, GradVector<S>)> {
    if weights.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            what: "sample weights",
            expected: batch.len(),
            got: weights.len(),
        });
    }
    backprop(params, batch, Some(weights))
}

fn backprop<S: Scalar>(
    params: &Params<S>,
    batch: &Batch<'_, S>,
    weights: Option<&[S]>,
) -> Result<(S, GradVector<S>)> {
    batch.validate(&params.spec)?;
    let spec = &params.spec;
    let theta = &params.values;
    let layers = spec.layers();
    let inv_n = S::one() / S::of_usize(batch.len());
    let mut g = vec![S::zero(); theta.len()];
    let mut total = S::zero();

    for (i, (x, y)) in batch.iter().enumerate() {
        let t = trace(params, &layers, x);
        let logits = t.acts.last().expect("output layer");
        total = total + cross_entropy(logits, y);
        let scale = weights.map_or(inv_n, |w| w[i] * inv_n);

        let lse = log_sum_exp(logits);
        let mut delta: Vec<S> = logits
            .iter()
            .enumerate()
            .map(|(k, &z)| {
                let p = (z - lse).exp();
                let target = if k == y { S::one() } else { S::zero() };
                (p - target) * scale
            })
            .collect();

        for l in (0..layers.len()).rev() {
            let layer = layers[l];
            let input = &t.acts[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == S::zero() {
                    continue;
                }
                let row = layer.weight_offset + o * layer.in_dim;
                for (gw, &a) in g[row..row + layer.in_dim].iter_mut().zip(input) {
                    *gw = *gw + d * a;
                }
                g[layer.bias_offset + o] = g[layer.bias_offset + o] + d;
            }
            if l == 0 {
                break;
            }
            let below_pre = &t.pre[l - 1];
            let below_act = &t.acts[l];
            delta = (0..layer.in_dim)
                .map(|i| {
                    let back = delta.iter().enumerate().fold(S::zero(), |acc, (o, &d)| {
                        acc + d * theta[layer.weight_offset + o * layer.in_dim + i]
                    });
                    back * spec.activation.derivative(below_pre[i], below_act[i])
                })
                .collect();
        }
    }

    Ok((total * inv_n, GradVector::new(g)))
}

pub fn grad<S: Scalar>(params: &Params<S>, batch: &Batch<'_, S>) -> Result<GradVector<S>> {
    loss_and_grad(params, batch).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(hidden: Vec<usize>) -> MlpSpec {
        MlpSpec::new(3, hidden, 4, Activation::Tanh).unwrap()
    }

    #[test]
    fn rejects_zero_width_hidden_layer() {
        assert!(matches!(
            MlpSpec::new(3, vec![0], 4, Activation::Tanh),
            Err(Error::InvalidSpec(_))
        ));
        assert!(MlpSpec::new(3, vec![4], 1, Activation::Tanh).is_err());
        assert!(MlpSpec::new(0, vec![4], 2, Activation::Tanh).is_err());
    }

    #[test]
    fn param_count_matches_layout() {
        let s = spec(vec![5, 2]);
        assert_eq!(s.param_count(), 3 * 5 + 5 + 5 * 2 + 2 + 2 * 4 + 4);
        let layers = s.layers();
        assert_eq!(layers[2].bias_offset + 4, s.param_count());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let s = spec(vec![6]);
        let a = Params::<f64>::init(&s, 7);
        let b = Params::<f64>::init(&s, 7);
        assert_eq!(a, b);
        assert_ne!(a, Params::<f64>::init(&s, 8));
        for i in s.bias_indices() {
            assert_eq!(a.values()[i], 0.0);
        }
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let p = Params::<f64>::zeros(&spec(vec![4]));
        let out = forward(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert!(out.logits.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn linear_net_on_basis_vector_reads_first_weight_column() {
        let s = spec(vec![]);
        let p = Params::<f64>::init(&s, 3);
        let mut values = p.values().to_vec();
        for (k, i) in s.bias_indices().into_iter().enumerate() {
            values[i] = 0.25 * k as f64;
        }
        let p = p.with_values(values.clone()).unwrap();
        let out = forward(&p, &[1.0, 0.0, 0.0]).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(out.logits[k], values[k * 3] + values[12 + k]);
        }
        assert_eq!(out.hidden, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let p = Params::<f64>::zeros(&spec(vec![4]));
        assert!(matches!(
            forward(&p, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let p = Params::<f64>::zeros(&spec(vec![4]));
        let x = [0.3, 0.1, -0.2];
        let b = Batch::single(&x[..], 2);
        assert_abs_diff_eq!(loss(&p, &b).unwrap(), 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn two_class_hand_value() {
        // Linear 1-input net with logits (1, 0) for x = 1.
        let s = MlpSpec::new(1, vec![], 2, Activation::Tanh).unwrap();
        let p = Params::from_values(&s, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let x = [1.0];
        let l = loss(&p, &Batch::single(&x[..], 0)).unwrap();
        assert_abs_diff_eq!(l, 0.313261687518223, epsilon = 1e-12);
    }

    #[test]
    fn saturated_prediction_has_vanishing_loss_and_gradient() {
        let s = MlpSpec::new(1, vec![], 4, Activation::Tanh).unwrap();
        let mut v = vec![0.0; s.param_count()];
        v[4 + 1] = 1000.0; // bias of class 1
        let p = Params::from_values(&s, v).unwrap();
        let x = [0.5];
        let b = Batch::single(&x[..], 1);
        let (l, g) = loss_and_grad(&p, &b).unwrap();
        assert!(l < 1e-9);
        assert!(l >= 0.0);
        assert!(g.norm() < 1e-8);
    }

    #[test]
    fn duplicated_sample_has_single_sample_gradient() {
        let s = spec(vec![5]);
        let p = Params::<f64>::init(&s, 11);
        let x = [0.4, -1.2, 0.9];
        let one = grad(&p, &Batch::single(&x[..], 3)).unwrap();
        let two = grad(&p, &Batch::new(vec![&x[..], &x[..]], vec![3, 3]).unwrap()).unwrap();
        for (a, b) in one.values.iter().zip(&two.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn batch_validation() {
        let x = [0.0; 3];
        assert!(Batch::<f64>::new(vec![], vec![]).is_err());
        assert!(Batch::new(vec![&x[..]], vec![0, 1]).is_err());
        let p = Params::<f64>::zeros(&spec(vec![2]));
        let bad = Batch::single(&x[..], 4);
        assert!(loss(&p, &bad).is_err());
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
        assert_eq!(argmax(&[2.0f32, 2.0]), 0);
    }
}
