use crate::error::{Error, Result};
use crate::nn::mlp::{loss, loss_and_grad, Batch, MlpSpec, Params};
use crate::scalar::Scalar;

/// A differentiable scalar loss over a flat parameter vector.
///
/// Curvature estimators and sharpness are written against this trait so
/// they can be checked on closed-form objectives as well as on networks.
pub trait Objective<S: Scalar>: Sync {
    fn dim(&self) -> usize;

    fn loss_at(&self, theta: &[S]) -> Result<S>;

    fn grad_at(&self, theta: &[S]) -> Result<Vec<S>>;

    fn loss_and_grad_at(&self, theta: &[S]) -> Result<(S, Vec<S>)> {
        Ok((self.loss_at(theta)?, self.grad_at(theta)?))
    }
}

/// Mean cross-entropy of a network architecture over a fixed batch.
pub struct MlpObjective<'s, 'a, S> {
    spec: &'s MlpSpec,
    batch: &'s Batch<'a, S>,
}

impl<'s, 'a, S: Scalar> MlpObjective<'s, 'a, S> {
    pub fn new(spec: &'s MlpSpec, batch: &'s Batch<'a, S>) -> Self {
        Self { spec, batch }
    }

    fn params(&self, theta: &[S]) -> Result<Params<S>> {
        if theta.len() != self.spec.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector length",
                expected: self.spec.param_count(),
                got: theta.len(),
            });
        }
        // Perturbed points may legitimately carry huge values; only the
        // length is checked here.
        let mut p = Params::zeros(self.spec);
        p.values_mut().copy_from_slice(theta);
        Ok(p)
    }
}

impl<S: Scalar> Objective<S> for MlpObjective<'_, '_, S> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss_at(&self, theta: &[S]) -> Result<S> {
        loss(&self.params(theta)?, self.batch)
    }

    fn grad_at(&self, theta: &[S]) -> Result<Vec<S>> {
        Ok(loss_and_grad(&self.params(theta)?, self.batch)?.1.values)
    }

    fn loss_and_grad_at(&self, theta: &[S]) -> Result<(S, Vec<S>)> {
        let (l, g) = loss_and_grad(&self.params(theta)?, self.batch)?;
        Ok((l, g.values))
    }
}

/// Separable quadratic `0.5 * sum_i a_i * theta_i^2`.
#[derive(Debug, Clone)]
pub struct Quadratic<S> {
    pub curvature: Vec<S>,
}

impl<S: Scalar> Quadratic<S> {
    pub fn new(curvature: Vec<S>) -> Self {
        Self { curvature }
    }
}

impl<S: Scalar> Objective<S> for Quadratic<S> {
    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn loss_at(&self, theta: &[S]) -> Result<S> {
        let half = S::of(0.5);
        Ok(self
            .curvature
            .iter()
            .zip(theta)
            .map(|(&a, &t)| half * a * t * t)
            .sum())
    }

    fn grad_at(&self, theta: &[S]) -> Result<Vec<S>> {
        Ok(self
            .curvature
            .iter()
            .zip(theta)
            .map(|(&a, &t)| a * t)
            .collect())
    }
}
