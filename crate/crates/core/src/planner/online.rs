use crate::pomdp::{self, ActionId, GenerativeModel, ObservationId, ParticleBelief, PomdpError};
use crate::rng::{purpose, substream, SimRng};

use super::improve::{improve, init_random_graph, select_action, shift_graph};
use super::{PlannerConfig, PlannerError, PolicyGraph, ValueEstimate};

/// Receding-horizon agent: owns the current graph, the filtered belief and
/// the start node, and replans after every executed step.
#[derive(Debug, Clone)]
pub struct OnlinePlanner<S> {
    config: PlannerConfig,
    graph: PolicyGraph,
    belief: ParticleBelief<S>,
    start: usize,
    rng: SimRng,
    value: ValueEstimate,
    collapses: usize,
}

impl<S: Clone> OnlinePlanner<S> {
    /// Builds a random graph and runs the offline improvement rounds.
    pub fn new<M: GenerativeModel<State = S>>(
        model: &M,
        belief: ParticleBelief<S>,
        config: PlannerConfig,
    ) -> Result<Self, PlannerError> {
        let mut rng = substream(config.seed, &[purpose::PLANNER_INIT]);
        let mut graph = init_random_graph(&config, model, &mut rng)?;
        let value = improve(
            &mut graph,
            &belief,
            0,
            model,
            &config,
            config.offline_rounds,
            &mut rng,
        )?;
        Ok(OnlinePlanner {
            config,
            graph,
            belief,
            start: 0,
            rng,
            value,
            collapses: 0,
        })
    }

    pub fn action(&self) -> ActionId {
        select_action(&self.graph, self.start)
    }

    pub fn graph(&self) -> &PolicyGraph {
        &self.graph
    }

    pub fn belief(&self) -> &ParticleBelief<S> {
        &self.belief
    }

    pub fn start_node(&self) -> usize {
        self.start
    }

    pub fn value(&self) -> ValueEstimate {
        self.value
    }

    /// Number of times the filter collapsed and the belief was rebuilt.
    pub fn collapses(&self) -> usize {
        self.collapses
    }

    /// Incorporates the executed action and its observation, then replans.
    pub fn observe<M: GenerativeModel<State = S>>(
        &mut self,
        model: &M,
        action: ActionId,
        observation: ObservationId,
    ) -> Result<(), PlannerError> {
        if observation.0 >= model.observation_count() {
            return Err(PomdpError::InvalidObservation(observation.0).into());
        }
        let planned = self.action();
        if planned != action {
            return Err(PlannerError::ActionMismatch {
                executed: action.0,
                planned: planned.0,
            });
        }
        let belief = match pomdp::belief_update(
            &self.belief,
            action,
            observation,
            model,
            self.config.ess_threshold,
            &mut self.rng,
        ) {
            Ok(b) => b,
            Err(PomdpError::BeliefCollapse { .. }) => {
                self.collapses += 1;
                model.recover_belief(&self.belief, action, observation, &mut self.rng)
            }
            Err(e) => return Err(e.into()),
        };
        let (mut graph, start) =
            shift_graph(&self.graph, observation, self.start, model, &mut self.rng);
        self.value = improve(
            &mut graph,
            &belief,
            start,
            model,
            &self.config,
            self.config.online_rounds,
            &mut self.rng,
        )?;
        self.graph = graph;
        self.belief = belief;
        self.start = start;
        Ok(())
    }
}
