//! Domain-independent POMDP machinery: discrete action and observation ids,
//! weighted particle beliefs, the generative-model contract, the particle
//! Bayes filter and episode execution.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PomdpError {
    #[error("belief is empty")]
    EmptyBelief,
    #[error("belief collapse: observation {observation} has zero probability under every particle")]
    BeliefCollapse { observation: usize },
    #[error("invalid action {action} at step {step}")]
    InvalidAction { action: usize, step: usize },
    #[error("invalid observation {0}")]
    InvalidObservation(usize),
    #[error("invalid particle weight {0}")]
    InvalidWeight(f64),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

pub type Result<T> = std::result::Result<T, PomdpError>;

/// Index of an action in a domain's action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

/// Index of an observation symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObservationId(pub usize);

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

impl fmt::Display for ObservationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// One sampled step of a generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub state: S,
    pub observation: ObservationId,
    pub reward: f64,
}

/// The capabilities a domain supplies to the planner and the filter.
///
/// Terminal states must be absorbing: sampling a transition from one returns
/// the same state, zero reward and a fixed observation.
pub trait GenerativeModel {
    type State: Clone;

    fn action_count(&self) -> usize;

    fn observation_count(&self) -> usize;

    fn sample_transition(
        &self,
        state: &Self::State,
        action: ActionId,
        rng: &mut SimRng,
    ) -> Transition<Self::State>;

    fn is_terminal(&self, state: &Self::State) -> bool;

    fn initial_belief(&self, rng: &mut SimRng, particles: usize) -> ParticleBelief<Self::State>;

    /// `P(o | s', a)`. A distribution over observations for fixed `(s', a)`.
    fn observation_probability(
        &self,
        observation: ObservationId,
        next_state: &Self::State,
        action: ActionId,
    ) -> f64;

    /// Whether `action` may be executed for real in `state`. Planning may still
    /// simulate invalid actions; the model defines their effect.
    fn is_valid_action(&self, _state: &Self::State, _action: ActionId) -> bool {
        true
    }

    /// `E[R | s, a]` when the domain can compute it in closed form.
    fn expected_reward(&self, _state: &Self::State, _action: ActionId) -> Option<f64> {
        None
    }

    /// Folds a received observation into a freshly sampled next state.
    ///
    /// Domains whose states record observations overwrite the sampled record
    /// with the received one here; `observation_probability` must then treat
    /// that record as not yet observed.
    fn condition_on_observation(
        &self,
        _next_state: &mut Self::State,
        _action: ActionId,
        _observation: ObservationId,
    ) {
    }

    /// Rebuilds a belief after an observation ruled out every particle.
    fn recover_belief(
        &self,
        belief: &ParticleBelief<Self::State>,
        _action: ActionId,
        _observation: ObservationId,
        rng: &mut SimRng,
    ) -> ParticleBelief<Self::State> {
        self.initial_belief(rng, belief.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle<S> {
    pub weight: f64,
    pub state: S,
}

/// A weighted particle approximation `b(s) = Σ_j w_j δ(s, s_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief<S> {
    particles: Vec<Particle<S>>,
}

impl<S> ParticleBelief<S> {
    /// Uniform weights over the given states.
    pub fn uniform(states: Vec<S>) -> Self {
        let w = 1.0 / states.len().max(1) as f64;
        ParticleBelief {
            particles: states
                .into_iter()
                .map(|state| Particle { weight: w, state })
                .collect(),
        }
    }

    /// Builds a belief from raw weights and normalizes them.
    pub fn from_weighted(pairs: Vec<(f64, S)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(PomdpError::EmptyBelief);
        }
        if let Some(&(w, _)) = pairs.iter().find(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
            return Err(PomdpError::InvalidWeight(w));
        }
        let mut belief = ParticleBelief {
            particles: pairs
                .into_iter()
                .map(|(weight, state)| Particle { weight, state })
                .collect(),
        };
        belief.normalize()?;
        Ok(belief)
    }

    pub fn point_mass(state: S, particles: usize) -> Self
    where
        S: Clone,
    {
        Self::uniform(vec![state; particles.max(1)])
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle<S>] {
        &self.particles
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &S)> {
        self.particles.iter().map(|p| (p.weight, &p.state))
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.weight)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights().sum()
    }

    /// Weighted mean of `f` over the particles.
    pub fn expectation(&self, mut f: impl FnMut(&S) -> f64) -> f64 {
        self.particles.iter().map(|p| p.weight * f(&p.state)).sum()
    }

    fn normalize(&mut self) -> Result<()> {
        let total = self.total_weight();
        if self.particles.is_empty() {
            return Err(PomdpError::EmptyBelief);
        }
        if total <= 0.0 || !total.is_finite() {
            return Err(PomdpError::InvalidWeight(total));
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        Ok(())
    }

    /// Draws one particle index proportionally to weight.
    pub fn sample_index(&self, rng: &mut SimRng) -> usize {
        let mut u: f64 = rng.random::<f64>() * self.total_weight();
        for (i, p) in self.particles.iter().enumerate() {
            if u < p.weight {
                return i;
            }
            u -= p.weight;
        }
        self.particles
            .iter()
            .rposition(|p| p.weight > 0.0)
            .unwrap_or(0)
    }

    pub fn into_particles(self) -> Vec<Particle<S>> {
        self.particles
    }
}

/// `1 / Σ_j w_j²` for normalized weights.
pub fn effective_sample_size<S>(belief: &ParticleBelief<S>) -> Result<f64> {
    if belief.is_empty() {
        return Err(PomdpError::EmptyBelief);
    }
    let sum_sq: f64 = belief.weights().map(|w| w * w).sum();
    Ok(1.0 / sum_sq)
}

/// Systematic (low-variance) resampling to `belief.len()` equally weighted
/// particles.
pub fn resample<S: Clone>(belief: &ParticleBelief<S>, rng: &mut SimRng) -> Result<ParticleBelief<S>> {
    resample_to(belief, belief.len(), rng)
}

/// Systematic resampling to `count` particles.
pub fn resample_to<S: Clone>(
    belief: &ParticleBelief<S>,
    count: usize,
    rng: &mut SimRng,
) -> Result<ParticleBelief<S>> {
    if belief.is_empty() || count == 0 {
        return Err(PomdpError::EmptyBelief);
    }
    let total = belief.total_weight();
    if total <= 0.0 {
        return Err(PomdpError::InvalidWeight(total));
    }
    let step = total / count as f64;
    let mut pointer = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(count);
    let mut cumulative = 0.0;
    let mut idx = 0;
    let last_positive = belief
        .particles
        .iter()
        .rposition(|p| p.weight > 0.0)
        .unwrap_or(0);
    for _ in 0..count {
        while idx < last_positive && cumulative + belief.particles[idx].weight <= pointer {
            cumulative += belief.particles[idx].weight;
            idx += 1;
        }
        out.push(belief.particles[idx].state.clone());
        pointer += step;
    }
    Ok(ParticleBelief::uniform(out))
}

/// Particle Bayes filter step for an executed action and received observation.
///
/// Each particle is advanced by one sampled transition, reweighted by
/// `P(o | s', a)` and conditioned on `o`. Resampling happens when
/// `ESS / N < ess_threshold`.
pub fn belief_update<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    action: ActionId,
    observation: ObservationId,
    model: &M,
    ess_threshold: f64,
    rng: &mut SimRng,
) -> Result<ParticleBelief<M::State>> {
    if belief.is_empty() {
        return Err(PomdpError::EmptyBelief);
    }
    if observation.0 >= model.observation_count() {
        return Err(PomdpError::InvalidObservation(observation.0));
    }
    let mut next = Vec::with_capacity(belief.len());
    for p in &belief.particles {
        let tr = model.sample_transition(&p.state, action, rng);
        let likelihood = model.observation_probability(observation, &tr.state, action);
        let mut state = tr.state;
        model.condition_on_observation(&mut state, action, observation);
        next.push(Particle {
            weight: p.weight * likelihood,
            state,
        });
    }
    let mut updated = ParticleBelief { particles: next };
    let total = updated.total_weight();
    if total.is_nan() || total <= 0.0 {
        return Err(PomdpError::BeliefCollapse {
            observation: observation.0,
        });
    }
    updated.normalize()?;
    let ess = effective_sample_size(&updated)?;
    if ess / (updated.len() as f64) < ess_threshold {
        updated = resample(&updated, rng)?;
    }
    Ok(updated)
}

/// One executed step of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub action: ActionId,
    pub observation: ObservationId,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub steps: Vec<StepRecord>,
    pub terminated_early: bool,
}

/// Runs `policy` against `env` from `initial_state` for at most `horizon`
/// steps, stopping early when the environment reaches a terminal state.
pub fn run_episode<M, P>(
    env: &M,
    initial_state: M::State,
    mut policy: P,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<EpisodeResult>
where
    M: GenerativeModel,
    P: FnMut(usize, &[StepRecord]) -> ActionId,
{
    if horizon == 0 {
        return Err(PomdpError::ZeroHorizon);
    }
    let mut state = initial_state;
    let mut steps: Vec<StepRecord> = Vec::with_capacity(horizon);
    for step in 0..horizon {
        if env.is_terminal(&state) {
            break;
        }
        let action = policy(step, &steps);
        if action.0 >= env.action_count() || !env.is_valid_action(&state, action) {
            return Err(PomdpError::InvalidAction {
                action: action.0,
                step,
            });
        }
        let tr = env.sample_transition(&state, action, rng);
        steps.push(StepRecord {
            action,
            observation: tr.observation,
            reward: tr.reward,
        });
        state = tr.state;
    }
    let terminated_early = env.is_terminal(&state) && steps.len() < horizon;
    Ok(EpisodeResult {
        total_reward: steps.iter().map(|s| s.reward).sum(),
        steps,
        terminated_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::toy::{Lever, TwoStateDomain};
    use proptest::prelude::*;

    fn belief_of(weights: &[f64]) -> ParticleBelief<usize> {
        ParticleBelief::from_weighted(weights.iter().copied().zip(0..).collect()).unwrap()
    }

    #[test]
    fn ess_examples() {
        let uniform = ParticleBelief::uniform((0..8).collect::<Vec<_>>());
        assert!((effective_sample_size(&uniform).unwrap() - 8.0).abs() < 1e-12);
        let half = belief_of(&[0.5, 0.5, 0.0, 0.0]);
        assert!((effective_sample_size(&half).unwrap() - 2.0).abs() < 1e-12);
        let point = belief_of(&[1.0, 0.0, 0.0]);
        assert!((effective_sample_size(&point).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_belief_is_an_error() {
        let empty: ParticleBelief<u8> = ParticleBelief::uniform(vec![]);
        assert_eq!(effective_sample_size(&empty), Err(PomdpError::EmptyBelief));
        assert!(resample(&empty, &mut seeded(0)).is_err());
        assert!(ParticleBelief::<u8>::from_weighted(vec![]).is_err());
    }

    #[test]
    fn resample_single_particle() {
        let b = belief_of(&[1.0]);
        let r = resample_to(&b, 5, &mut seeded(1)).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|(w, &s)| s == 0 && (w - 0.2).abs() < 1e-12));
    }

    #[test]
    fn resample_drops_zero_weight() {
        let b = belief_of(&[1.0, 0.0]);
        for seed in 0..20 {
            let r = resample(&b, &mut seeded(seed)).unwrap();
            assert!(r.iter().all(|(_, &s)| s == 0));
        }
        let b = belief_of(&[0.0, 1.0]);
        let r = resample(&b, &mut seeded(3)).unwrap();
        assert!(r.iter().all(|(_, &s)| s == 1));
    }

    #[test]
    fn resample_frequency_concentrates() {
        // Systematic resampling places floor/ceil(N·w) copies, so the bound
        // [0.73, 0.77] derived from binomial concentration holds easily.
        let mut pairs = vec![(0.75 / 5000.0, 1usize); 5000];
        pairs.extend(vec![(0.25 / 5000.0, 2usize); 5000]);
        let b = ParticleBelief::from_weighted(pairs).unwrap();
        let r = resample(&b, &mut seeded(11)).unwrap();
        let freq = r.iter().filter(|(_, &s)| s == 1).count() as f64 / r.len() as f64;
        assert!((0.73..=0.77).contains(&freq), "freq {freq}");
    }

    #[test]
    fn bayes_weights_follow_likelihood() {
        // Two particles, one with P(o|s') = 1, the other 0.
        let model = TwoStateDomain::default();
        let b = ParticleBelief::uniform(vec![0u8, 1u8]);
        // Lever::Stay keeps the state; observation 0 is "see state 0".
        let perfect = TwoStateDomain {
            accuracy: 1.0,
            ..model
        };
        let out = belief_update(
            &b,
            Lever::Stay.id(),
            ObservationId(0),
            &perfect,
            0.0,
            &mut seeded(2),
        )
        .unwrap();
        let w: Vec<f64> = out.weights().collect();
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn constant_likelihood_keeps_weights() {
        let model = TwoStateDomain {
            accuracy: 0.5,
            ..TwoStateDomain::default()
        };
        let b = ParticleBelief::from_weighted(vec![(0.2, 0u8), (0.3, 1u8), (0.5, 0u8)]).unwrap();
        let out = belief_update(&b, Lever::Stay.id(), ObservationId(1), &model, 0.0, &mut seeded(3))
            .unwrap();
        let w: Vec<f64> = out.weights().collect();
        for (a, b) in w.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn collapse_is_reported() {
        let perfect = TwoStateDomain {
            accuracy: 1.0,
            ..TwoStateDomain::default()
        };
        let b = ParticleBelief::uniform(vec![1u8, 1u8]);
        let err = belief_update(&b, Lever::Stay.id(), ObservationId(0), &perfect, 0.1, &mut seeded(4));
        assert_eq!(err, Err(PomdpError::BeliefCollapse { observation: 0 }));
    }

    #[test]
    fn episode_stops_on_terminal_action() {
        let model = TwoStateDomain::default();
        let mut rng = seeded(5);
        let r = run_episode(&model, 0u8, |_, _| Lever::Commit0.id(), 10, &mut rng).unwrap();
        assert_eq!(r.steps.len(), 1);
        assert!(r.terminated_early);
    }

    #[test]
    fn episode_runs_to_horizon() {
        let model = TwoStateDomain::default();
        let mut rng = seeded(6);
        let r = run_episode(&model, 0u8, |_, _| Lever::Stay.id(), 10, &mut rng).unwrap();
        assert_eq!(r.steps.len(), 10);
        assert!(!r.terminated_early);
        let sum: f64 = r.steps.iter().map(|s| s.reward).sum();
        assert!((sum - r.total_reward).abs() < 1e-9);
    }

    #[test]
    fn episode_rejects_invalid_action() {
        let model = TwoStateDomain::default();
        let r = run_episode(&model, 0u8, |_, _| ActionId(99), 3, &mut seeded(0));
        assert_eq!(r, Err(PomdpError::InvalidAction { action: 99, step: 0 }));
        assert_eq!(
            run_episode(&model, 0u8, |_, _| ActionId(0), 0, &mut seeded(0)),
            Err(PomdpError::ZeroHorizon)
        );
    }

    #[test]
    fn episode_is_deterministic() {
        let model = TwoStateDomain::default();
        let policy = |step: usize, _: &[StepRecord]| {
            if step < 4 {
                Lever::Stay.id()
            } else {
                Lever::Commit1.id()
            }
        };
        let a = run_episode(&model, 0u8, policy, 10, &mut seeded(9)).unwrap();
        let b = run_episode(&model, 0u8, policy, 10, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn ess_within_bounds(weights in prop::collection::vec(0.0f64..10.0, 1..50)) {
            prop_assume!(weights.iter().sum::<f64>() > 1e-9);
            let b = belief_of(&weights);
            let ess = effective_sample_size(&b).unwrap();
            prop_assert!(ess >= 1.0 - 1e-9);
            prop_assert!(ess <= weights.len() as f64 + 1e-9);
            prop_assert!((b.total_weight() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn resample_is_normalized(weights in prop::collection::vec(0.0f64..10.0, 1..50), seed in 0u64..1000) {
            prop_assume!(weights.iter().sum::<f64>() > 1e-9);
            let b = belief_of(&weights);
            let r = resample(&b, &mut seeded(seed)).unwrap();
            prop_assert_eq!(r.len(), weights.len());
            prop_assert!((r.total_weight() - 1.0).abs() < 1e-9);
            // Only positive-weight states survive.
            for (_, &s) in r.iter() {
                prop_assert!(weights[s] > 0.0);
            }
        }
    }
}
