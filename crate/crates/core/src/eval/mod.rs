//! Accuracy metrics, membership inference, bias probing and the analysis
//! artifacts (sharpness histograms, partition composition, dynamics).

mod accuracy;
mod composition;
mod dynamics;
mod histogram;
mod mia;
mod probe;

pub use accuracy::{metrics_report, subset_accuracy, MetricsReport};
pub use composition::{partition_composition, CompositionRow};
pub use dynamics::{DynamicsLog, DynamicsRecord};
pub use histogram::{sharpness_histogram, SharpnessHistogram};
pub use mia::{matched_non_members, mia_attack, mia_from_losses, MiaResult};
pub use probe::{linear_probe, linear_probe_bias, ProbeResult};
