//! Penalized Cox proportional-hazards regression.
//!
//! The centrepiece is Exclusive Lasso coordinate descent, which keeps at
//! least one covariate alive in every predefined group. Lasso, Ridge,
//! Elastic Net, Group Lasso and IPF-Lasso fits share the same solver. Around
//! it sit cross-validated tuning, a grouped survival-data simulator, and
//! censoring-aware evaluation (selection metrics, IPCW Brier score).

pub mod error;
pub mod metrics;
pub mod model_selection;
pub mod penalty;
pub mod simulate;
pub mod solver;
pub mod survival;

pub mod cli;

pub use error::{CoxError, Result};
pub use penalty::{GroupStructure, PenaltyFamily, PenaltySpec};
pub use solver::{FittedModel, SolverConfig};
pub use survival::{Observation, SurvivalDataset};
