use rand::Rng;

use crate::pomdp::{ActionId, ObservationId};
use crate::rng::SimRng;

use super::PlannerError;

/// One conditional-plan node: the action to take and, for every observation,
/// the node of the next layer to continue from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub action: ActionId,
    /// Indexed by observation id; empty on the last layer.
    pub edges: Vec<usize>,
}

impl Node {
    pub fn next(&self, observation: ObservationId) -> usize {
        self.edges[observation.0]
    }
}

/// A layered, fixed-width, acyclic policy graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyGraph {
    width: usize,
    observations: usize,
    layers: Vec<Vec<Node>>,
}

impl PolicyGraph {
    pub fn from_layers(
        layers: Vec<Vec<Node>>,
        width: usize,
        observations: usize,
    ) -> Result<Self, PlannerError> {
        let g = PolicyGraph {
            width,
            observations,
            layers,
        };
        g.validate()?;
        Ok(g)
    }

    /// Uniformly random actions and edges.
    pub fn random(
        horizon: usize,
        width: usize,
        actions: usize,
        observations: usize,
        rng: &mut SimRng,
    ) -> Self {
        let layers = (0..horizon)
            .map(|t| random_layer(width, actions, observations, t + 1 < horizon, rng))
            .collect();
        PolicyGraph {
            width,
            observations,
            layers,
        }
    }

    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn observation_count(&self) -> usize {
        self.observations
    }

    pub fn layers(&self) -> &[Vec<Node>] {
        &self.layers
    }

    pub fn layer(&self, t: usize) -> &[Node] {
        &self.layers[t]
    }

    pub fn node(&self, t: usize, q: usize) -> &Node {
        &self.layers[t][q]
    }

    pub(crate) fn node_mut(&mut self, t: usize, q: usize) -> &mut Node {
        &mut self.layers[t][q]
    }

    pub(crate) fn set_layer(&mut self, t: usize, nodes: Vec<Node>) {
        debug_assert_eq!(nodes.len(), self.width);
        self.layers[t] = nodes;
    }

    pub fn is_last(&self, t: usize) -> bool {
        t + 1 == self.layers.len()
    }

    /// Checks layer widths, edge totality and edge bounds.
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.layers.is_empty() {
            return Err(PlannerError::InvalidGraph("graph has no layers".into()));
        }
        for (t, layer) in self.layers.iter().enumerate() {
            if layer.len() != self.width {
                return Err(PlannerError::InvalidGraph(format!(
                    "layer {t} has {} nodes, expected {}",
                    layer.len(),
                    self.width
                )));
            }
            let last = self.is_last(t);
            for (q, node) in layer.iter().enumerate() {
                let expected = if last { 0 } else { self.observations };
                if node.edges.len() != expected {
                    return Err(PlannerError::InvalidGraph(format!(
                        "node ({t},{q}) has {} edges, expected {expected}",
                        node.edges.len()
                    )));
                }
                if let Some(&bad) = node.edges.iter().find(|&&e| e >= self.width) {
                    return Err(PlannerError::InvalidGraph(format!(
                        "node ({t},{q}) points to missing node {bad}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Drops layer 0, appends a random last layer and gives the former last
    /// layer random outgoing edges. Returns the shifted graph.
    pub fn shifted(&self, actions: usize, rng: &mut SimRng) -> PolicyGraph {
        let horizon = self.horizon();
        let mut layers: Vec<Vec<Node>> = self.layers[1..].to_vec();
        if let Some(prev_last) = layers.last_mut() {
            for node in prev_last.iter_mut() {
                node.edges = (0..self.observations)
                    .map(|_| rng.random_range(0..self.width))
                    .collect();
            }
        }
        layers.push(random_layer(self.width, actions, self.observations, false, rng));
        debug_assert_eq!(layers.len(), horizon);
        PolicyGraph {
            width: self.width,
            observations: self.observations,
            layers,
        }
    }
}

fn random_layer(
    width: usize,
    actions: usize,
    observations: usize,
    with_edges: bool,
    rng: &mut SimRng,
) -> Vec<Node> {
    (0..width)
        .map(|_| Node {
            action: ActionId(rng.random_range(0..actions)),
            edges: if with_edges {
                (0..observations).map(|_| rng.random_range(0..width)).collect()
            } else {
                Vec::new()
            },
        })
        .collect()
}
