//! Synthetic datasets with a controllable spurious attribute.

mod generate;
mod io;
mod split;

pub use generate::{generate, GenConfig};
pub use io::{load_split, save_split};
pub use split::{BiasedSample, DatasetSplit, ForgetSpec, SliceKind, SplitRole};
