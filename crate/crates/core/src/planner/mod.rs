//! Fixed-width, fixed-depth policy-graph planning over particle beliefs.
//!
//! A round of improvement projects the root belief through the graph layer by
//! layer ([`forward_beliefs`]), then re-optimizes every layer from the last one
//! back to the first ([`backup_layer`]). Each node picks the action and the
//! observation edges that maximize the value of the particles routed to it,
//! with continuation values estimated by simulating the already-improved
//! later layers. [`advance_online`] turns this into a receding-horizon
//! planner by shifting the graph one layer after each executed step.

mod beliefs;
mod dot;
mod graph;
mod improve;
mod online;

use thiserror::Error;

use crate::pomdp::PomdpError;

pub use beliefs::{forward_beliefs, sample_reachable_belief, NodeBelief, NodeParticle};
pub use dot::{annotate, export_dot, EdgeStats, GraphAnnotations, NodeStats};
pub use graph::{Node, PolicyGraph};
pub use improve::{
    advance_online, backup_layer, deduplicate_nodes, evaluate, improve, improve_traced,
    init_random_graph, optimize_node, rollout_value, select_action, shift_graph,
};
pub use online::OnlinePlanner;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid policy graph: {0}")]
    InvalidGraph(String),
    #[error("start node {0} is out of range")]
    InvalidStartNode(usize),
    #[error("executed action {executed} differs from the start node's action {planned}")]
    ActionMismatch { executed: usize, planned: usize },
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
}

/// Planner settings. Defaults follow the experimental setup: horizon 3,
/// width 3, 10 offline and 4 online improvement rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub width: usize,
    pub particles: usize,
    pub rollouts_per_candidate: usize,
    pub offline_rounds: usize,
    pub online_rounds: usize,
    pub ess_threshold: f64,
    pub seed: u64,
    /// Re-optimize duplicate nodes against freshly sampled beliefs.
    pub deduplicate: bool,
    /// Optional cap on simulated layers per rollout; `None` simulates to the
    /// end of the graph.
    pub rollout_depth_cap: Option<usize>,
    /// Particle count of sampled beliefs used to re-optimize unvisited or
    /// duplicate nodes; `None` means `particles / width`.
    pub reoptimize_particles: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            horizon: 3,
            width: 3,
            particles: 2000,
            rollouts_per_candidate: 1,
            offline_rounds: 10,
            online_rounds: 4,
            ess_threshold: 0.1,
            seed: 0,
            deduplicate: true,
            rollout_depth_cap: None,
            reoptimize_particles: None,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let positive = [
            ("horizon", self.horizon),
            ("width", self.width),
            ("particles", self.particles),
            ("rollouts_per_candidate", self.rollouts_per_candidate),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(PlannerError::InvalidConfig(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return Err(PlannerError::InvalidConfig(format!(
                "ess_threshold {} outside [0, 1]",
                self.ess_threshold
            )));
        }
        if self.reoptimize_particles == Some(0) {
            return Err(PlannerError::InvalidConfig(
                "reoptimize_particles must be positive".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn reoptimize_count(&self) -> usize {
        self.reoptimize_particles
            .unwrap_or(self.particles / self.width)
            .max(1)
    }
}

/// Monte-Carlo estimate of a policy value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}
