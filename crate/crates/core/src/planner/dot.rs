use std::fmt::Write;

use crate::pomdp::{ActionId, GenerativeModel, ObservationId, ParticleBelief};
use crate::rng::SimRng;

use super::PolicyGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub visit_probability: f64,
    /// Expected immediate reward mass, `Σ w · E[r | s, a]` over the node's
    /// particles. Divide by `visit_probability` for the conditional value.
    pub expected_reward: f64,
    /// Free-form extra label lines, e.g. per-object marginals.
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStats {
    pub observation: ObservationId,
    pub target: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphAnnotations {
    /// `nodes[t][q]`.
    pub nodes: Vec<Vec<NodeStats>>,
    /// `edges[t][q]`, one entry per observation; empty on the last layer.
    pub edges: Vec<Vec<Vec<EdgeStats>>>,
}

/// Projects `b0` through the graph and collects visiting probabilities,
/// expected rewards and edge probabilities. Particles in terminal states do
/// not count as visiting. `details` receives the live weighted states of each
/// node and returns extra label lines.
pub fn annotate<M, F>(
    graph: &PolicyGraph,
    b0: &ParticleBelief<M::State>,
    start_node: usize,
    model: &M,
    rng: &mut SimRng,
    mut details: F,
) -> GraphAnnotations
where
    M: GenerativeModel,
    F: FnMut(usize, usize, &[(f64, &M::State)]) -> Vec<String>,
{
    let width = graph.width();
    let mut nodes = Vec::with_capacity(graph.horizon());
    let mut edges = Vec::with_capacity(graph.horizon());
    let mut current: Vec<(f64, M::State, usize)> =
        b0.iter().map(|(w, s)| (w, s.clone(), start_node)).collect();
    for t in 0..graph.horizon() {
        let mut layer_nodes = Vec::with_capacity(width);
        for q in 0..width {
            let action = graph.node(t, q).action;
            let live: Vec<(f64, &M::State)> = current
                .iter()
                .filter(|(w, s, n)| *n == q && *w > 0.0 && !model.is_terminal(s))
                .map(|(w, s, _)| (*w, s))
                .collect();
            // `+ 0.0` turns the empty sum's -0.0 into 0.0 for display.
            let visit_probability = live.iter().map(|(w, _)| w).sum::<f64>() + 0.0;
            let expected_reward = live
                .iter()
                .map(|&(w, s)| {
                    w * model
                        .expected_reward(s, action)
                        .unwrap_or_else(|| model.sample_transition(s, action, rng).reward)
                })
                .sum::<f64>()
                + 0.0;
            layer_nodes.push(NodeStats {
                visit_probability,
                expected_reward,
                details: details(t, q, &live),
            });
        }
        nodes.push(layer_nodes);
        if graph.is_last(t) {
            edges.push(vec![Vec::new(); width]);
            break;
        }
        let mut mass = vec![vec![0.0; graph.observation_count()]; width];
        let mut next = Vec::with_capacity(current.len());
        for (w, s, q) in &current {
            let node = graph.node(t, *q);
            let terminal = model.is_terminal(s);
            let tr = model.sample_transition(s, node.action, rng);
            if !terminal {
                mass[*q][tr.observation.0] += *w;
            }
            next.push((*w, tr.state, node.next(tr.observation)));
        }
        edges.push(
            (0..width)
                .map(|q| {
                    let node = graph.node(t, q);
                    (0..graph.observation_count())
                        .map(|o| EdgeStats {
                            observation: ObservationId(o),
                            target: node.edges[o],
                            probability: mass[q][o],
                        })
                        .collect()
                })
                .collect(),
        );
        current = next;
    }
    GraphAnnotations { nodes, edges }
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders an annotated graph as a Graphviz digraph.
///
/// Node labels show the action, the visiting probability in parentheses, the
/// expected reward and the reward divided by the visiting probability,
/// followed by any detail lines. Edges between the same pair of nodes are
/// merged into one arrow listing every observation with its probability.
/// Unvisited nodes and edges are dashed.
pub fn export_dot<A, O>(
    graph: &PolicyGraph,
    annotations: &GraphAnnotations,
    action_label: A,
    observation_label: O,
) -> String
where
    A: Fn(ActionId) -> String,
    O: Fn(ActionId, ObservationId) -> String,
{
    let mut out = String::new();
    writeln!(out, "digraph policy {{").unwrap();
    writeln!(out, "  rankdir=TB;").unwrap();
    writeln!(out, "  node [shape=box, fontname=\"Helvetica\"];").unwrap();
    writeln!(out, "  edge [fontname=\"Helvetica\", fontsize=10];").unwrap();
    for t in 0..graph.horizon() {
        writeln!(out, "  subgraph layer_{t} {{").unwrap();
        writeln!(out, "    rank=same;").unwrap();
        for q in 0..graph.width() {
            let stats = &annotations.nodes[t][q];
            let node = graph.node(t, q);
            let ratio = if stats.visit_probability > 0.0 {
                format!("{:.3}", stats.expected_reward / stats.visit_probability)
            } else {
                "-".to_string()
            };
            let mut label = format!(
                "{} ({:.3})\\nR={:.3} R/P={}",
                escape(&action_label(node.action)),
                stats.visit_probability,
                stats.expected_reward,
                ratio
            );
            for line in &stats.details {
                write!(label, "\\n{}", escape(line)).unwrap();
            }
            let style = if stats.visit_probability > 0.0 {
                "solid"
            } else {
                "dashed"
            };
            writeln!(out, "    n{t}_{q} [label=\"{label}\", style={style}];").unwrap();
        }
        writeln!(out, "  }}").unwrap();
    }
    for t in 0..graph.horizon().saturating_sub(1) {
        for q in 0..graph.width() {
            let node = graph.node(t, q);
            for target in 0..graph.width() {
                let routed: Vec<&EdgeStats> = annotations.edges[t][q]
                    .iter()
                    .filter(|e| e.target == target)
                    .collect();
                if routed.is_empty() {
                    continue;
                }
                let total: f64 = routed.iter().map(|e| e.probability).sum();
                let label = routed
                    .iter()
                    .map(|e| {
                        format!(
                            "{} ({:.2})",
                            escape(&observation_label(node.action, e.observation)),
                            e.probability
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\\n");
                let style = if total > 0.0 { "solid" } else { "dashed" };
                let next = t + 1;
                writeln!(
                    out,
                    "  n{t}_{q} -> n{next}_{target} [label=\"{label}\", style={style}];"
                )
                .unwrap();
            }
        }
    }
    writeln!(out, "}}").unwrap();
    out
}
