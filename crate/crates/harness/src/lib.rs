//! Config-driven experiments for shortcut-aware class unlearning.
//!
//! A run goes `gen-data` -> `train` -> `analyze` / `unlearn` -> `eval` ->
//! `report`; `ablate` runs whole grids in memory. Every stage is seeded
//! from one master seed, so identical configurations give identical
//! reports apart from timing.

pub mod ablate;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use report::RunReport;
