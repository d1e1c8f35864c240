//! Forget-class unlearning: the sharpness-guided pathway update and the
//! baseline unlearners it is compared against.

mod baselines;
mod config;
mod decompose;
mod mask;
mod partition;
mod pathway;
mod sharpness;

pub use baselines::{relabel_forget_set, run_neggrad, run_random_label, run_retrain};
pub use config::{Method, UnlearnConfig};
pub use decompose::{decompose, GradientDecomposition};
pub use mask::{causal_mask, mask_from_saliency, CausalMask};
pub use partition::{partition, percentile_count, top_percentile, ForgetPartition};
pub use pathway::{
    cupid_step, pathway_update, run_cupid, run_cupid_with_stages, CupidStages, RunLog, StepRecord,
    HESSIAN_SEED_OFFSET,
};
pub use sharpness::{compute_sharpness, sharpness_of, SharpnessTable, DEGENERATE_NORM};
