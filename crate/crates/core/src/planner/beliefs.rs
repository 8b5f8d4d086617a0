use rand::Rng;

use crate::pomdp::{self, ActionId, GenerativeModel, ParticleBelief, PomdpError};
use crate::rng::SimRng;

use super::PolicyGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeParticle<S> {
    pub weight: f64,
    pub state: S,
    pub node: usize,
}

/// Joint belief over (state, node) pairs for one graph layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBelief<S> {
    pub particles: Vec<NodeParticle<S>>,
}

impl<S> NodeBelief<S> {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Probability mass of each node in a layer of the given width.
    pub fn node_mass(&self, width: usize) -> Vec<f64> {
        let mut mass = vec![0.0; width];
        for p in &self.particles {
            mass[p.node] += p.weight;
        }
        mass
    }

    pub fn at_node(&self, node: usize) -> impl Iterator<Item = &NodeParticle<S>> {
        self.particles.iter().filter(move |p| p.node == node)
    }
}

/// Projects `b0`, placed at `start_node` of layer 0, through the graph.
///
/// Each particle follows its node's action, samples a next state and an
/// observation and moves along the matching edge. Weights do not change, so
/// every layer carries the same particles and total weight as `b0`.
pub fn forward_beliefs<M: GenerativeModel>(
    graph: &PolicyGraph,
    b0: &ParticleBelief<M::State>,
    start_node: usize,
    model: &M,
    rng: &mut SimRng,
) -> Vec<NodeBelief<M::State>> {
    let mut layers = Vec::with_capacity(graph.horizon());
    let mut current = NodeBelief {
        particles: b0
            .iter()
            .map(|(weight, s)| NodeParticle {
                weight,
                state: s.clone(),
                node: start_node,
            })
            .collect(),
    };
    for t in 0..graph.horizon() {
        if graph.is_last(t) {
            layers.push(current);
            break;
        }
        let next = NodeBelief {
            particles: current
                .particles
                .iter()
                .map(|p| {
                    let node = graph.node(t, p.node);
                    let tr = model.sample_transition(&p.state, node.action, rng);
                    NodeParticle {
                        weight: p.weight,
                        state: tr.state,
                        node: node.next(tr.observation),
                    }
                })
                .collect(),
        };
        layers.push(current);
        current = next;
    }
    layers
}

/// Samples a belief reachable from `b0` by `depth` uniformly random valid
/// actions, with observations drawn from the belief's own predictive
/// distribution. Collapsed updates are retried up to 10 times before falling
/// back to `b0`.
pub fn sample_reachable_belief<M: GenerativeModel>(
    b0: &ParticleBelief<M::State>,
    model: &M,
    depth: usize,
    ess_threshold: f64,
    rng: &mut SimRng,
) -> ParticleBelief<M::State> {
    const ATTEMPTS: usize = 10;
    if depth == 0 {
        return b0.clone();
    }
    for _ in 0..ATTEMPTS {
        match walk(b0, model, depth, ess_threshold, rng) {
            Ok(b) => return b,
            Err(PomdpError::BeliefCollapse { .. }) => continue,
            Err(_) => break,
        }
    }
    b0.clone()
}

fn walk<M: GenerativeModel>(
    b0: &ParticleBelief<M::State>,
    model: &M,
    depth: usize,
    ess_threshold: f64,
    rng: &mut SimRng,
) -> pomdp::Result<ParticleBelief<M::State>> {
    let mut belief = b0.clone();
    for _ in 0..depth {
        let pick = belief.sample_index(rng);
        let state = &belief.particles()[pick].state;
        if model.is_terminal(state) {
            break;
        }
        let valid: Vec<ActionId> = (0..model.action_count())
            .map(ActionId)
            .filter(|&a| model.is_valid_action(state, a))
            .collect();
        if valid.is_empty() {
            break;
        }
        let action = valid[rng.random_range(0..valid.len())];
        let observation = model.sample_transition(state, action, rng).observation;
        let next = pomdp::belief_update(&belief, action, observation, model, ess_threshold, rng)?;
        if next.iter().all(|(w, s)| w == 0.0 || model.is_terminal(s)) {
            break;
        }
        belief = next;
    }
    Ok(belief)
}
