use rand::Rng;

use crate::pomdp::{self, ActionId, GenerativeModel, ObservationId, ParticleBelief, PomdpError};
use crate::rng::{seeded, SimRng};

use super::beliefs::{forward_beliefs, sample_reachable_belief, NodeBelief};
use super::{Node, PlannerConfig, PlannerError, PolicyGraph, ValueEstimate};

pub fn init_random_graph<M: GenerativeModel>(
    config: &PlannerConfig,
    model: &M,
    rng: &mut SimRng,
) -> Result<PolicyGraph, PlannerError> {
    config.validate()?;
    Ok(PolicyGraph::random(
        config.horizon,
        config.width,
        model.action_count(),
        model.observation_count(),
        rng,
    ))
}

/// Exclusive end layer of a simulation starting at layer `t`.
fn end_layer(graph: &PolicyGraph, t: usize, cap: Option<usize>) -> usize {
    cap.map_or(graph.horizon(), |c| (t + c.max(1)).min(graph.horizon()))
}

/// Sum of rewards from following the graph from `(state, node)` at layer `t`
/// up to (excluding) layer `end`. Uses closed-form expected rewards when the
/// model has them, so the last layer needs no transition sample.
fn simulate<M: GenerativeModel>(
    graph: &PolicyGraph,
    mut t: usize,
    end: usize,
    state: &M::State,
    mut node: usize,
    model: &M,
    rng: &mut SimRng,
) -> f64 {
    let mut total = 0.0;
    let mut owned: Option<M::State> = None;
    while t < end {
        let s = owned.as_ref().unwrap_or(state);
        if model.is_terminal(s) {
            break;
        }
        let n = graph.node(t, node);
        let expected = model.expected_reward(s, n.action);
        if t + 1 == end {
            total += match expected {
                Some(r) => r,
                None => model.sample_transition(s, n.action, rng).reward,
            };
            break;
        }
        let tr = model.sample_transition(s, n.action, rng);
        total += expected.unwrap_or(tr.reward);
        node = n.next(tr.observation);
        owned = Some(tr.state);
        t += 1;
    }
    total
}

/// One Monte-Carlo sample of the reward collected by following the graph from
/// `(state, node)` at layer `t` to the last layer.
pub fn rollout_value<M: GenerativeModel>(
    graph: &PolicyGraph,
    t: usize,
    state: &M::State,
    node: usize,
    model: &M,
    rng: &mut SimRng,
) -> f64 {
    simulate(graph, t, graph.horizon(), state, node, model, rng)
}

/// Finds the best (action, observation edges) for a node at layer `t` holding
/// the given weighted particles, assuming layers after `t` are fixed.
///
/// For every candidate action each particle is advanced `rollouts_per_candidate`
/// times; the sampled next state is then simulated from every next-layer node
/// with the same random stream, so candidate next nodes are compared on common
/// random numbers. Per observation the best next node is kept, and the action
/// with the highest immediate plus continuation value wins. Ties go to the
/// lowest index. Returns the node and its weighted value.
pub fn optimize_node<M: GenerativeModel>(
    graph: &PolicyGraph,
    t: usize,
    particles: &[(f64, &M::State)],
    model: &M,
    config: &PlannerConfig,
    rng: &mut SimRng,
) -> (Node, f64) {
    let width = graph.width();
    let observations = graph.observation_count();
    let end = end_layer(graph, t, config.rollout_depth_cap);
    let continues = t + 1 < end;
    let reps = config.rollouts_per_candidate.max(1);
    let share = 1.0 / reps as f64;

    let live: Vec<(f64, &M::State)> = particles
        .iter()
        .copied()
        .filter(|(w, s)| *w > 0.0 && !model.is_terminal(s))
        .collect();
    let mut candidates: Vec<ActionId> = (0..model.action_count())
        .map(ActionId)
        .filter(|&a| live.iter().any(|(_, s)| model.is_valid_action(s, a)))
        .collect();
    if candidates.is_empty() {
        candidates = (0..model.action_count()).map(ActionId).collect();
    }

    let mut continuation = vec![0.0; observations * width];
    let mut best: Option<(f64, Node)> = None;
    for action in candidates {
        let mut value = 0.0;
        let mut edges = Vec::new();
        if continues {
            continuation.fill(0.0);
        }
        for &(w, s) in &live {
            let expected = model.expected_reward(s, action);
            if !continues {
                value += match expected {
                    Some(r) => w * r,
                    None => (0..reps)
                        .map(|_| w * share * model.sample_transition(s, action, rng).reward)
                        .sum(),
                };
                continue;
            }
            for _ in 0..reps {
                let tr = model.sample_transition(s, action, rng);
                value += w * share * expected.unwrap_or(tr.reward);
                let base = tr.observation.0 * width;
                let snapshot = rng.clone();
                for next in 0..width {
                    let mut stream = snapshot.clone();
                    let v = simulate(graph, t + 1, end, &tr.state, next, model, &mut stream);
                    continuation[base + next] += w * share * v;
                    if next + 1 == width {
                        *rng = stream;
                    }
                }
            }
        }
        if continues {
            edges = Vec::with_capacity(observations);
            for o in 0..observations {
                let row = &continuation[o * width..(o + 1) * width];
                let (arg, v) = argmax(row);
                edges.push(arg);
                value += v;
            }
        }
        if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
            best = Some((value, Node { action, edges }));
        }
    }
    let (value, node) = best.expect("at least one candidate action");
    (node, value)
}

fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Re-optimizes a node against a belief sampled by random exploration from
/// `b0`, or leaves it untouched if that belief has no live particles.
fn reoptimize_from_sample<M: GenerativeModel>(
    graph: &PolicyGraph,
    t: usize,
    b0: &ParticleBelief<M::State>,
    model: &M,
    config: &PlannerConfig,
    rng: &mut SimRng,
) -> Option<Node> {
    let depth = rng.random_range(0..graph.horizon());
    let seed_belief = pomdp::resample_to(b0, config.reoptimize_count(), rng).ok()?;
    let sampled = sample_reachable_belief(&seed_belief, model, depth, config.ess_threshold, rng);
    let particles: Vec<(f64, &M::State)> = sampled
        .iter()
        .filter(|(w, s)| *w > 0.0 && !model.is_terminal(s))
        .collect();
    if particles.is_empty() {
        return None;
    }
    Some(optimize_node(graph, t, &particles, model, config, rng).0)
}

/// Backs up every node of layer `t` against its share of `layer_belief`.
///
/// Nodes that receive no live belief mass are re-optimized against a sampled
/// reachable belief instead, except on layer 0 where only the start node is
/// ever executed.
pub fn backup_layer<M: GenerativeModel>(
    graph: &PolicyGraph,
    t: usize,
    layer_belief: &NodeBelief<M::State>,
    b0: &ParticleBelief<M::State>,
    model: &M,
    config: &PlannerConfig,
    rng: &mut SimRng,
) -> Vec<Node> {
    let width = graph.width();
    let mut groups: Vec<Vec<(f64, &M::State)>> = vec![Vec::new(); width];
    for p in &layer_belief.particles {
        if p.weight > 0.0 && !model.is_terminal(&p.state) {
            groups[p.node].push((p.weight, &p.state));
        }
    }
    let mut nodes = graph.layer(t).to_vec();
    for (q, group) in groups.iter().enumerate() {
        if !group.is_empty() {
            nodes[q] = optimize_node(graph, t, group, model, config, rng).0;
        } else if t > 0 {
            if let Some(node) = reoptimize_from_sample(graph, t, b0, model, config, rng) {
                nodes[q] = node;
            }
        }
    }
    nodes
}

/// Re-optimizes every node of layer `t` whose policy duplicates a lower-index
/// node of the same layer. Edges of layer `t - 1` that pointed at a duplicate
/// are redirected to its twin first, so the graph value is unchanged.
/// Layer 0 is left alone. Returns the number of re-optimized nodes.
pub fn deduplicate_nodes<M: GenerativeModel>(
    graph: &mut PolicyGraph,
    t: usize,
    b0: &ParticleBelief<M::State>,
    model: &M,
    config: &PlannerConfig,
    rng: &mut SimRng,
) -> usize {
    if t == 0 || t >= graph.horizon() {
        return 0;
    }
    let mut count = 0;
    for dup in 1..graph.width() {
        let Some(twin) = (0..dup).find(|&k| graph.node(t, k) == graph.node(t, dup)) else {
            continue;
        };
        for q in 0..graph.width() {
            for e in graph.node_mut(t - 1, q).edges.iter_mut() {
                if *e == dup {
                    *e = twin;
                }
            }
        }
        if let Some(node) = reoptimize_from_sample(graph, t, b0, model, config, rng) {
            *graph.node_mut(t, dup) = node;
        }
        count += 1;
    }
    count
}

/// Weighted mean and standard error of one rollout per particle of `b0`
/// from `start_node`.
pub fn evaluate<M: GenerativeModel>(
    graph: &PolicyGraph,
    b0: &ParticleBelief<M::State>,
    start_node: usize,
    model: &M,
    rng: &mut SimRng,
) -> ValueEstimate {
    let values: Vec<(f64, f64)> = b0
        .iter()
        .map(|(w, s)| (w, rollout_value(graph, 0, s, start_node, model, rng)))
        .collect();
    let total: f64 = values.iter().map(|(w, _)| w).sum();
    let mean = values.iter().map(|(w, v)| w * v).sum::<f64>() / total;
    let var = values
        .iter()
        .map(|(w, v)| (w / total).powi(2) * (v - mean).powi(2))
        .sum::<f64>();
    ValueEstimate {
        mean,
        std_error: var.sqrt(),
        samples: values.len(),
    }
}

fn improve_round<M: GenerativeModel>(
    graph: &mut PolicyGraph,
    b0: &ParticleBelief<M::State>,
    start_node: usize,
    model: &M,
    config: &PlannerConfig,
    rng: &mut SimRng,
) {
    let beliefs = forward_beliefs(graph, b0, start_node, model, rng);
    for t in (0..graph.horizon()).rev() {
        let nodes = backup_layer(graph, t, &beliefs[t], b0, model, config, rng);
        graph.set_layer(t, nodes);
        if config.deduplicate {
            deduplicate_nodes(graph, t, b0, model, config, rng);
        }
    }
}

fn check_start(graph: &PolicyGraph, start_node: usize) -> Result<(), PlannerError> {
    if start_node >= graph.width() {
        return Err(PlannerError::InvalidStartNode(start_node));
    }
    Ok(())
}

/// Runs `rounds` improvement rounds for belief `b0` rooted at `start_node`
/// and returns a value estimate of the final graph.
pub fn improve<M: GenerativeModel>(
    graph: &mut PolicyGraph,
    b0: &ParticleBelief<M::State>,
    start_node: usize,
    model: &M,
    config: &PlannerConfig,
    rounds: usize,
    rng: &mut SimRng,
) -> Result<ValueEstimate, PlannerError> {
    config.validate()?;
    check_start(graph, start_node)?;
    if b0.is_empty() {
        return Err(PomdpError::EmptyBelief.into());
    }
    for _ in 0..rounds {
        improve_round(graph, b0, start_node, model, config, rng);
    }
    Ok(evaluate(graph, b0, start_node, model, rng))
}

/// Like [`improve`], but evaluates the graph before the first and after
/// every round with the same evaluation seed. Returns `rounds + 1` estimates.
#[allow(clippy::too_many_arguments)]
pub fn improve_traced<M: GenerativeModel>(
    graph: &mut PolicyGraph,
    b0: &ParticleBelief<M::State>,
    start_node: usize,
    model: &M,
    config: &PlannerConfig,
    rounds: usize,
    eval_seed: u64,
    rng: &mut SimRng,
) -> Result<Vec<ValueEstimate>, PlannerError> {
    config.validate()?;
    check_start(graph, start_node)?;
    let mut trace = vec![evaluate(graph, b0, start_node, model, &mut seeded(eval_seed))];
    for _ in 0..rounds {
        improve_round(graph, b0, start_node, model, config, rng);
        trace.push(evaluate(graph, b0, start_node, model, &mut seeded(eval_seed)));
    }
    Ok(trace)
}

pub fn select_action(graph: &PolicyGraph, start_node: usize) -> ActionId {
    graph.node(0, start_node).action
}

/// Moves the planning window one step: the layer-0 node's edge for
/// `observation` becomes the new start node, layers 1.. move down one place
/// and a random last layer is appended.
pub fn shift_graph<M: GenerativeModel>(
    graph: &PolicyGraph,
    observation: ObservationId,
    start_node: usize,
    model: &M,
    rng: &mut SimRng,
) -> (PolicyGraph, usize) {
    let next_start = if graph.horizon() > 1 {
        graph.node(0, start_node).next(observation)
    } else {
        0
    };
    (graph.shifted(model.action_count(), rng), next_start)
}

/// Receding-horizon step: filters the belief with the executed action and the
/// received observation, shifts the graph and runs `online_rounds`
/// improvement rounds rooted at the node the observation edge led to.
#[allow(clippy::too_many_arguments)]
pub fn advance_online<M: GenerativeModel>(
    graph: &PolicyGraph,
    executed_action: ActionId,
    observation: ObservationId,
    prev_belief: &ParticleBelief<M::State>,
    prev_start_node: usize,
    model: &M,
    config: &PlannerConfig,
    rng: &mut SimRng,
) -> Result<(PolicyGraph, ParticleBelief<M::State>, usize), PlannerError> {
    if observation.0 >= model.observation_count() {
        return Err(PomdpError::InvalidObservation(observation.0).into());
    }
    check_start(graph, prev_start_node)?;
    let planned = select_action(graph, prev_start_node);
    if planned != executed_action {
        return Err(PlannerError::ActionMismatch {
            executed: executed_action.0,
            planned: planned.0,
        });
    }
    let belief = pomdp::belief_update(
        prev_belief,
        executed_action,
        observation,
        model,
        config.ess_threshold,
        rng,
    )?;
    let (mut next, start) = shift_graph(graph, observation, prev_start_node, model, rng);
    improve(&mut next, &belief, start, model, config, config.online_rounds, rng)?;
    Ok((next, belief, start))
}
