//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use pomdp_manip::dish::{
    Contact, DishModel, DomainParams, ObjectState, Outcomes, SceneObject, SceneSpec, WorldState,
};
use pomdp_manip::planner::{Node, PolicyGraph};
use pomdp_manip::pomdp::{ActionId, GenerativeModel, ObservationId};
use pomdp_manip::toy::TwoStateDomain;

/// Replays a fixed prefix of random outcomes, taking `false` past its end,
/// and accumulates the probability of the path taken.
struct Branch {
    choices: Vec<bool>,
    used: usize,
    probability: f64,
    defaulted: Vec<usize>,
}

impl Branch {
    fn next(&mut self, p_true: f64) -> bool {
        let choice = if self.used < self.choices.len() {
            self.choices[self.used]
        } else {
            self.defaulted.push(self.used);
            self.choices.push(false);
            false
        };
        self.used += 1;
        self.probability *= if choice { p_true } else { 1.0 - p_true };
        choice
    }
}

impl Outcomes for Branch {
    fn grasp(&mut self, p_success: f64) -> bool {
        self.next(p_success)
    }

    fn reading(&mut self, _slot: usize, p_dirty: f64) -> bool {
        self.next(p_dirty)
    }
}

/// Every outcome of one transition with its probability, found by
/// depth-first enumeration of the random choices `apply` makes.
pub fn enumerate_transitions(
    model: &DishModel,
    state: &WorldState,
    action: ActionId,
) -> Vec<(WorldState, ObservationId, f64, f64)> {
    let mut out = Vec::new();
    let mut stack = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let mut branch = Branch {
            choices: prefix,
            used: 0,
            probability: 1.0,
            defaulted: Vec::new(),
        };
        let (next, reward) = model.apply(state, action, None, &mut branch);
        for &i in &branch.defaulted {
            let mut alt = branch.choices[..i].to_vec();
            alt.push(true);
            stack.push(alt);
        }
        if branch.probability > 0.0 {
            let o = model.observation_of(&next);
            out.push((next, o, branch.probability, reward));
        }
    }
    out
}

/// The part of a state the filter is judged on.
pub type StateKey = (u64, u64, bool, Vec<ObjectState>);

pub fn key(s: &WorldState) -> StateKey {
    (
        s.dirty_mask(),
        s.table_mask(),
        s.is_finished(),
        (0..s.object_count()).map(|i| *s.object(i)).collect(),
    )
}

pub type Exact = Vec<(WorldState, f64)>;

/// Exact initial belief: independent attributes, each with a uniform prior
/// updated by one reading under the object's full occlusion.
pub fn exact_initial(model: &DishModel, observations: &[bool]) -> Exact {
    let n = model.object_count();
    let params = model.params();
    let mut out = Vec::new();
    for mask in 0..(1u64 << n) {
        let mut p = 1.0;
        for (i, &read_dirty) in observations.iter().enumerate() {
            let occl = model.occlusion_at(i, 0);
            let dirty = mask >> i & 1 == 1;
            let like = params.obs_prob(dirty, occl);
            p *= 0.5 * if read_dirty { like } else { 1.0 - like };
        }
        out.push((model.initial_state(mask, observations), p));
    }
    normalize(out)
}

fn normalize(mut belief: Exact) -> Exact {
    let total: f64 = belief.iter().map(|(_, p)| p).sum();
    assert!(total > 0.0, "observation has zero probability");
    for (_, p) in &mut belief {
        *p /= total;
    }
    belief
}

/// One step of the exact Bayes filter.
pub fn exact_update(model: &DishModel, belief: &Exact, action: ActionId, observation: ObservationId) -> Exact {
    let mut next: HashMap<StateKey, (WorldState, f64)> = HashMap::new();
    for (s, p) in belief {
        for (s2, o, q, _) in enumerate_transitions(model, s, action) {
            if o == observation {
                next.entry(key(&s2)).or_insert((s2, 0.0)).1 += p * q;
            }
        }
    }
    normalize(next.into_values().collect())
}

/// Total-variation distance between a weighted particle set and an exact
/// belief over state keys.
pub fn total_variation<'a>(particles: impl Iterator<Item = (f64, &'a WorldState)>, exact: &Exact) -> f64 {
    let mut mass: HashMap<StateKey, f64> = HashMap::new();
    let mut total = 0.0;
    for (w, s) in particles {
        *mass.entry(key(s)).or_default() += w;
        total += w;
    }
    let mut exact_mass: HashMap<StateKey, f64> = HashMap::new();
    for (s, p) in exact {
        *exact_mass.entry(key(s)).or_default() += p;
    }
    let keys: std::collections::HashSet<&StateKey> = mass.keys().chain(exact_mass.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (mass.get(k).copied().unwrap_or(0.0) / total - exact_mass.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Two cups: cup 1 in front half-hides cup 2.
pub fn two_object_model() -> DishModel {
    let object = |id, y, dirty| SceneObject {
        id,
        centroid: [0.0, y],
        perimeter: 90,
        dirty,
    };
    let scene = SceneSpec {
        objects: vec![object(1, 0.4, false), object(2, 0.5, true)],
        contacts: vec![Contact {
            occluder: 1,
            occluded: 2,
            tou: 30,
        }],
    };
    DishModel::new(&scene, DomainParams::default()).expect("valid scene")
}

/// Exact value of a policy graph on the two-state domain from the given
/// unnormalized mass over states `[0, 1, terminal]`.
pub fn toy_value(d: &TwoStateDomain, g: &PolicyGraph, t: usize, q: usize, mass: [f64; 3]) -> f64 {
    let a = g.node(t, q).action;
    let mut total: f64 = (0..3).map(|s| mass[s] * d.reward(s as u8, a)).sum();
    if g.is_last(t) {
        return total;
    }
    for o in 0..2 {
        let mut next = [0.0; 3];
        for (s2, slot) in next.iter_mut().enumerate() {
            let reach: f64 = (0..3)
                .map(|s| mass[s] * d.transition_probability(s as u8, a, s2 as u8))
                .sum();
            *slot = reach * d.observation_probability(ObservationId(o), &(s2 as u8), a);
        }
        if next.iter().sum::<f64>() > 0.0 {
            total += toy_value(d, g, t + 1, g.node(t, q).next(ObservationId(o)), next);
        }
    }
    total
}

/// Every two-layer graph of width one: one action per layer.
pub fn open_loop_two_step_graphs(actions: usize, observations: usize) -> Vec<PolicyGraph> {
    let mut graphs = Vec::new();
    for a0 in 0..actions {
        for a1 in 0..actions {
            graphs.push(
                PolicyGraph::from_layers(vec![
                    vec![Node {
                        action: ActionId(a0),
                        edges: vec![0; observations],
                    }],
                    vec![Node {
                        action: ActionId(a1),
                        edges: vec![],
                    }],
                ], 1, observations)
                .expect("valid graph"),
            );
        }
    }
    graphs
}

/// Greatest expected total reward over all open-loop two-step plans.
pub fn toy_open_loop_optimum(d: &TwoStateDomain) -> f64 {
    let mass = [d.prior0, 1.0 - d.prior0, 0.0];
    open_loop_two_step_graphs(d.action_count(), d.observation_count())
        .iter()
        .map(|g| toy_value(d, g, 0, 0, mass))
        .fold(f64::NEG_INFINITY, f64::max)
}
