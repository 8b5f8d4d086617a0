//! Simulated evaluation: hidden ground truth, batch episodes per method and
//! scene, and summary statistics.

mod experiment;
mod stats;
mod truth;

use thiserror::Error;

use crate::dish::DishError;
use crate::planner::PlannerError;
use crate::pomdp::PomdpError;

pub use experiment::{
    resolve_scene, run_cell, run_episode, run_experiment, write_results, CellResult, CellSpec,
    EpisodeSummary, ExperimentConfig, ExperimentTable, InitialObservations, Method, ResultRow,
    RewardSweep,
};
pub use stats::{bootstrap_ci, mann_whitney_u, mean, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
pub use truth::{DishEnvironment, GroundTruth};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Dish(#[from] DishError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
}
