use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::dish::{DishModel, Sampled, WorldState};
use crate::pomdp::{ActionId, GenerativeModel, ObservationId, ParticleBelief, Transition};
use crate::rng::SimRng;

/// Hidden per-episode ground truth: the attribute of every object and a
/// grasp history, invisible to the agent, that fixes the environment's grasp
/// success probabilities.
#[derive(Debug)]
pub struct GroundTruth {
    dirty: u64,
    hidden: Vec<(f64, f64)>,
    reads: AtomicUsize,
}

impl Clone for GroundTruth {
    fn clone(&self) -> Self {
        GroundTruth {
            dirty: self.dirty,
            hidden: self.hidden.clone(),
            reads: AtomicUsize::new(self.reads()),
        }
    }
}

impl GroundTruth {
    pub fn new(dirty: u64, hidden: Vec<(f64, f64)>) -> GroundTruth {
        GroundTruth {
            dirty,
            hidden,
            reads: AtomicUsize::new(0),
        }
    }

    /// Draws a total count `n ~ Gamma(shape, scale)` per object and splits
    /// it as `n_succ ~ U(0, n)`, `n_fail = n - n_succ`. A zero scale gives
    /// empty histories.
    pub fn sample(model: &DishModel, gamma_shape: f64, gamma_scale: f64, rng: &mut SimRng) -> GroundTruth {
        let gamma = (gamma_scale > 0.0 && gamma_shape > 0.0)
            .then(|| Gamma::new(gamma_shape, gamma_scale).expect("positive gamma parameters"));
        let hidden = (0..model.object_count())
            .map(|_| {
                let n: f64 = gamma.as_ref().map_or(0.0, |g| g.sample(rng));
                let succ = rng.random::<f64>() * n;
                (succ, n - succ)
            })
            .collect();
        GroundTruth::new(model.true_dirty_mask(), hidden)
    }

    pub fn dirty_mask(&self) -> u64 {
        self.dirty
    }

    /// The hidden `(n_succ, n_fail)` pairs. Every call is counted so tests
    /// can audit who reads them.
    pub fn hidden_counts(&self) -> &[(f64, f64)] {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.hidden
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }
}

/// The simulated world: the dish model driven by hidden ground truth.
#[derive(Debug, Clone)]
pub struct DishEnvironment {
    model: DishModel,
    truth: GroundTruth,
}

impl DishEnvironment {
    pub fn new(model: DishModel, truth: GroundTruth) -> DishEnvironment {
        DishEnvironment { model, truth }
    }

    pub fn model(&self) -> &DishModel {
        &self.model
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// True start state with the given initial readings cached.
    pub fn initial_state(&self, observations: &[bool]) -> WorldState {
        self.model.initial_state(self.truth.dirty, observations)
    }

    /// Samples one reading per object under full occlusion from the true
    /// attributes.
    pub fn sample_initial_observations(&self, rng: &mut SimRng) -> Vec<bool> {
        (0..self.model.object_count())
            .map(|i| {
                let occl = self.model.occlusion_at(i, 0);
                let dirty = self.truth.dirty >> i & 1 == 1;
                rng.random::<f64>() < self.model.params().obs_prob(dirty, occl)
            })
            .collect()
    }
}

impl GenerativeModel for DishEnvironment {
    type State = WorldState;

    fn action_count(&self) -> usize {
        self.model.action_count()
    }

    fn observation_count(&self) -> usize {
        self.model.observation_count()
    }

    fn sample_transition(&self, state: &WorldState, action: ActionId, rng: &mut SimRng) -> Transition<WorldState> {
        let (next, reward) = self
            .model
            .apply(state, action, Some(self.truth.hidden_counts()), &mut Sampled(rng));
        Transition {
            observation: self.model.observation_of(&next),
            state: next,
            reward,
        }
    }

    fn is_terminal(&self, state: &WorldState) -> bool {
        self.model.is_terminal(state)
    }

    fn initial_belief(&self, rng: &mut SimRng, particles: usize) -> ParticleBelief<WorldState> {
        self.model.initial_belief(rng, particles)
    }

    fn observation_probability(&self, o: ObservationId, next: &WorldState, action: ActionId) -> f64 {
        self.model.observation_probability(o, next, action)
    }

    fn is_valid_action(&self, state: &WorldState, action: ActionId) -> bool {
        self.model.is_valid_action(state, action)
    }
}
