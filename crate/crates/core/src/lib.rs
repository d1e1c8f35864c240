//! Sharpness-guided class unlearning for classifiers that learned a
//! spurious shortcut.
//!
//! The crate bundles everything needed to study the problem end to end on
//! synthetic data:
//!
//! - [`nn`]: a dense classifier with exact gradients, finite-difference
//!   Hessian-vector products and Hessian-diagonal estimators;
//! - [`data`]: a generator of datasets whose bias attribute is easier to
//!   learn than the class signal;
//! - [`unlearn`]: the three-stage pathway unlearner plus gradient-ascent,
//!   random-label and retraining baselines;
//! - [`eval`]: retain/forget accuracies, subgroup gap, membership inference
//!   and bias probes.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix `f64`, which is what the experiments use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod scalar;
pub mod unlearn;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;
pub type ParamVector = nn::Params<Real>;
pub type GradVector = nn::GradVector<Real>;
pub type Dataset = data::DatasetSplit<Real>;
pub type Sample = data::BiasedSample<Real>;
pub type SharpnessTable = unlearn::SharpnessTable<Real>;
pub type ForgetPartition = unlearn::ForgetPartition<Real>;
pub type CausalMask = unlearn::CausalMask<Real>;
pub type GradientDecomposition = unlearn::GradientDecomposition<Real>;
pub type HessianDiag = nn::HessianDiag<Real>;
