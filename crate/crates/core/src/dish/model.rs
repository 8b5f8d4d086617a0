use std::sync::Arc;

use rand::Rng;
use smallvec::{smallvec, SmallVec};

use crate::pomdp::{ActionId, GenerativeModel, ObservationId, ParticleBelief, Transition};
use crate::rng::SimRng;

use super::observation::{observation_count, DishAction, DishObservation};
use super::params::{occlusion_ratio, DomainParams};
use super::scene::SceneSpec;
use super::state::{ObjectState, Reveal, StepOutcome, WorldState};
use super::DishError;

/// Most objects a scene may hold (state masks are `u64`).
pub const MAX_OBJECTS: usize = 64;
/// Most occluders of a single object (setting keys are 6-bit masks).
pub const MAX_OCCLUDERS: usize = 6;

/// Observation emitted by FINISH and by terminal states: success, no readings.
pub const FINISH_OBSERVATION: ObservationId = ObservationId(1);

#[derive(Debug)]
struct Tables {
    ids: Vec<u32>,
    /// Occluders of each object, as object indices in ascending order.
    occluders: Vec<SmallVec<[u8; MAX_OCCLUDERS]>>,
    /// Objects each object occludes, nearest centroid first (ties by id),
    /// paired with the occluder's bit in the occluded object's setting key.
    occluded: Vec<SmallVec<[(u8, u8); 8]>>,
    /// `occl[i][key]`: occlusion ratio of `i` with the occluders in `key` absent.
    occl: Vec<Vec<f64>>,
    prior: Vec<Vec<f64>>,
    /// `read_dirty[i][key][true_dirty]`: probability of reading `i` as dirty.
    read_dirty: Vec<Vec<[f64; 2]>>,
}

impl Tables {
    fn build(scene: &SceneSpec, params: &DomainParams) -> Result<Tables, DishError> {
        let mut objects = scene.objects.clone();
        objects.sort_by_key(|o| o.id);
        let n = objects.len();
        if n > MAX_OBJECTS {
            return Err(DishError::Unsupported(format!(
                "{n} objects exceed the limit of {MAX_OBJECTS}"
            )));
        }
        let ids: Vec<u32> = objects.iter().map(|o| o.id).collect();
        let index = |id: u32| ids.binary_search(&id).expect("validated contact");
        let mut occluders: Vec<SmallVec<[u8; MAX_OCCLUDERS]>> = vec![SmallVec::new(); n];
        let mut tou: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut contacts = scene.contacts.clone();
        contacts.sort_by_key(|c| (c.occluded, c.occluder));
        for c in &contacts {
            let (a, b) = (index(c.occluder), index(c.occluded));
            if occluders[b].len() == MAX_OCCLUDERS {
                return Err(DishError::Unsupported(format!(
                    "object {} has more than {MAX_OCCLUDERS} occluders",
                    c.occluded
                )));
            }
            occluders[b].push(a as u8);
            tou[b].push(c.tou as f64);
        }
        let mut occluded: Vec<SmallVec<[(u8, u8); 8]>> = vec![SmallVec::new(); n];
        for (b, list) in occluders.iter().enumerate() {
            for (bit, &a) in list.iter().enumerate() {
                occluded[a as usize].push((b as u8, bit as u8));
            }
        }
        let dist = |a: usize, b: usize| {
            let (p, q) = (objects[a].centroid, objects[b].centroid);
            (p[0] - q[0]).hypot(p[1] - q[1])
        };
        for (a, list) in occluded.iter_mut().enumerate() {
            list.sort_by(|x, y| {
                dist(a, x.0 as usize)
                    .total_cmp(&dist(a, y.0 as usize))
                    .then(x.0.cmp(&y.0))
            });
        }
        let mut occl = Vec::with_capacity(n);
        for b in 0..n {
            let settings = 1usize << occluders[b].len();
            occl.push(
                (0..settings)
                    .map(|key| {
                        let present: f64 = tou[b]
                            .iter()
                            .enumerate()
                            .filter(|(bit, _)| key >> bit & 1 == 0)
                            .map(|(_, t)| t)
                            .sum();
                        occlusion_ratio(objects[b].perimeter as f64, present)
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        let prior = occl
            .iter()
            .map(|row| row.iter().map(|&o| params.grasp_prior(o)).collect())
            .collect();
        let read_dirty = occl
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&o| [params.obs_prob(false, o), params.obs_prob(true, o)])
                    .collect()
            })
            .collect();
        Ok(Tables {
            ids,
            occluders,
            occluded,
            occl,
            prior,
            read_dirty,
        })
    }
}

/// Source of the binary outcomes of a transition.
pub trait Outcomes {
    fn grasp(&mut self, p_success: f64) -> bool;
    /// Attribute reading at position `slot` of the observation.
    fn reading(&mut self, slot: usize, p_dirty: f64) -> bool;
}

/// Draws outcomes from a random stream.
pub struct Sampled<'a>(pub &'a mut SimRng);

impl Outcomes for Sampled<'_> {
    fn grasp(&mut self, p: f64) -> bool {
        self.0.random::<f64>() < p
    }
    fn reading(&mut self, _slot: usize, p: f64) -> bool {
        self.0.random::<f64>() < p
    }
}

/// Replays the outcomes of a received observation.
pub struct Forced(pub DishObservation);

impl Outcomes for Forced {
    fn grasp(&mut self, _p: f64) -> bool {
        self.0.grasp_success
    }
    fn reading(&mut self, slot: usize, _p: f64) -> bool {
        self.0.dirty.get(slot).copied().unwrap_or(false)
    }
}

/// The dish-clearing POMDP over one scene. Inside planning, grasp outcomes
/// follow each particle's own counts; the simulator supplies hidden counts
/// through [`DishModel::apply`].
#[derive(Debug, Clone)]
pub struct DishModel {
    tables: Arc<Tables>,
    params: DomainParams,
    initial_observations: Vec<bool>,
    true_dirty: u64,
}

impl DishModel {
    /// Builds the model for a validated scene. The initial readings default
    /// to the scene's true attributes; see [`DishModel::with_initial_observations`].
    pub fn new(scene: &SceneSpec, params: DomainParams) -> Result<DishModel, DishError> {
        scene.validate()?;
        params.validate()?;
        let tables = Tables::build(scene, &params)?;
        let mut sorted = scene.objects.clone();
        sorted.sort_by_key(|o| o.id);
        let true_dirty = sorted
            .iter()
            .enumerate()
            .filter(|(_, o)| o.dirty)
            .fold(0u64, |m, (i, _)| m | 1 << i);
        Ok(DishModel {
            tables: Arc::new(tables),
            params,
            initial_observations: sorted.iter().map(|o| o.dirty).collect(),
            true_dirty,
        })
    }

    /// Sets the per-object readings taken before the first action, with
    /// every occluder in place.
    pub fn with_initial_observations(mut self, observations: Vec<bool>) -> Result<Self, DishError> {
        if observations.len() != self.object_count() {
            return Err(DishError::InvalidParams(format!(
                "{} initial observations for {} objects",
                observations.len(),
                self.object_count()
            )));
        }
        self.initial_observations = observations;
        Ok(self)
    }

    pub fn with_params(&self, params: DomainParams) -> Result<DishModel, DishError> {
        params.validate()?;
        if params.theta_g1 != self.params.theta_g1
            || params.theta_g2 != self.params.theta_g2
            || params.theta_d1 != self.params.theta_d1
            || params.theta_d2 != self.params.theta_d2
            || params.theta_c1 != self.params.theta_c1
            || params.theta_c2 != self.params.theta_c2
        {
            return Err(DishError::InvalidParams(
                "probability parameters are fixed at construction".into(),
            ));
        }
        Ok(DishModel {
            params,
            ..self.clone()
        })
    }

    pub fn params(&self) -> &DomainParams {
        &self.params
    }

    pub fn object_count(&self) -> usize {
        self.tables.ids.len()
    }

    /// Scene id of object index `i`.
    pub fn object_id(&self, i: usize) -> u32 {
        self.tables.ids[i]
    }

    pub fn object_index(&self, id: u32) -> Option<usize> {
        self.tables.ids.binary_search(&id).ok()
    }

    pub fn initial_observations(&self) -> &[bool] {
        &self.initial_observations
    }

    /// Ground-truth attribute mask from the scene.
    pub fn true_dirty_mask(&self) -> u64 {
        self.true_dirty
    }

    pub fn action(&self, a: ActionId) -> Option<DishAction> {
        DishAction::from_id(a, self.object_count())
    }

    pub fn action_id(&self, a: DishAction) -> ActionId {
        a.to_id(self.object_count())
    }

    pub fn action_label(&self, a: ActionId) -> String {
        match self.action(a) {
            Some(DishAction::Finish) => "FINISH".into(),
            Some(DishAction::Lift(i)) => format!("LIFT({})", self.object_id(i)),
            Some(DishAction::Wash(i)) => format!("WASH({})", self.object_id(i)),
            None => format!("{a}"),
        }
    }

    /// Observation label such as `S,D,C`; readings past the number of
    /// objects the action's target occludes render as `-`.
    pub fn observation_label(&self, a: ActionId, o: ObservationId) -> String {
        let informative = match self.action(a).and_then(DishAction::target) {
            Some(i) => self.tables.occluded[i].len().min(self.params.k),
            None => 0,
        };
        match DishObservation::decode(o, self.params.k) {
            Ok(obs) => obs.label(informative),
            Err(_) => format!("{o}"),
        }
    }

    /// Setting key of object `i`: which of its occluders are off the table.
    pub fn setting_key(&self, state: &WorldState, i: usize) -> u8 {
        self.tables.occluders[i]
            .iter()
            .enumerate()
            .filter(|(_, &a)| !state.on_table(a as usize))
            .fold(0u8, |key, (bit, _)| key | 1 << bit)
    }

    /// Occlusion ratio of `i` under setting `key`.
    pub fn occlusion_at(&self, i: usize, key: u8) -> f64 {
        self.tables.occl[i][key as usize]
    }

    /// Current occlusion ratio of object `i`, counting only occluders still
    /// on the table.
    pub fn occlusion(&self, state: &WorldState, i: usize) -> f64 {
        self.occlusion_at(i, self.setting_key(state, i))
    }

    /// Occluder indices of object `i`, in setting-key bit order.
    pub fn occluders(&self, i: usize) -> &[u8] {
        &self.tables.occluders[i]
    }

    /// Up to `k` on-table objects directly occluded by `i`, nearest first.
    pub fn nearest_occluded(&self, state: &WorldState, i: usize, k: usize) -> SmallVec<[usize; 4]> {
        self.tables.occluded[i]
            .iter()
            .filter(|(j, _)| state.on_table(*j as usize))
            .take(k)
            .map(|(j, _)| *j as usize)
            .collect()
    }

    /// Agent-side grasp success probability from the state's own counts.
    pub fn grasp_probability(&self, state: &WorldState, i: usize) -> f64 {
        let o = state.object(i);
        self.grasp_probability_with(state, i, o.n_succ as f64, o.n_fail as f64)
    }

    fn grasp_probability_with(&self, state: &WorldState, i: usize, succ: f64, fail: f64) -> f64 {
        let prior = self.tables.prior[i][self.setting_key(state, i) as usize];
        let n = self.params.n_prior;
        (prior * n + succ) / (n + succ + fail)
    }

    /// Expected immediate reward of WASH(i) using the state's counts and
    /// attribute bit.
    pub fn expected_wash_reward(&self, state: &WorldState, i: usize) -> f64 {
        let p = self.grasp_probability(state, i);
        let r = &self.params.rewards;
        let wash = if state.is_dirty(i) { r.wash_dirty } else { r.wash_clean };
        p * wash + (1.0 - p) * r.grasp_fail
    }

    /// State before the first action: everything on the table, zero counts
    /// and the initial readings cached under the full-occlusion setting.
    pub fn initial_state(&self, dirty: u64, observations: &[bool]) -> WorldState {
        let n = self.object_count();
        let objects = (0..n)
            .map(|i| {
                let mut o = ObjectState::default();
                o.cache(0, observations.get(i).copied().unwrap_or(false));
                o
            })
            .collect();
        WorldState {
            on_table: if n == 64 { u64::MAX } else { (1u64 << n) - 1 },
            dirty,
            objects,
            step: 0,
            finished: false,
            last: StepOutcome::default(),
        }
    }

    /// Posterior `P(dirty)` of every object given all readings cached in
    /// `state`. Readings are conditionally independent given the attribute
    /// and grasp outcomes carry no attribute information, so this is exact.
    pub fn attribute_marginals(&self, state: &WorldState) -> Vec<f64> {
        (0..self.object_count())
            .map(|i| {
                let history: Vec<(bool, f64)> = state
                    .object(i)
                    .readings()
                    .map(|(key, d)| (d, self.occlusion_at(i, key)))
                    .collect();
                self.params.attribute_posterior(&history).p_dirty
            })
            .collect()
    }

    /// `n` particles sharing `template`'s visible history, with attribute
    /// bits drawn independently from the per-object posteriors.
    pub fn sample_belief(&self, template: &WorldState, n: usize, rng: &mut SimRng) -> ParticleBelief<WorldState> {
        let marginals = self.attribute_marginals(template);
        ParticleBelief::uniform(
            (0..n)
                .map(|_| {
                    let mask = marginals
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| rng.random::<f64>() < p)
                        .fold(0u64, |m, (i, _)| m | 1 << i);
                    template.with_dirty_mask(mask)
                })
                .collect(),
        )
    }

    /// Belief after the given initial readings.
    pub fn initial_belief_from(&self, observations: &[bool], n: usize, rng: &mut SimRng) -> ParticleBelief<WorldState> {
        self.sample_belief(&self.initial_state(0, observations), n, rng)
    }

    /// Agent-side bookkeeping: replays an executed action and its received
    /// observation on a state whose attribute bits are irrelevant.
    pub fn observe_step(&self, view: &WorldState, action: ActionId, observation: ObservationId) -> Result<WorldState, DishError> {
        let obs = DishObservation::decode(observation, self.params.k)?;
        Ok(self.apply(view, action, None, &mut Forced(obs)).0)
    }

    fn truncation(&self, next: &WorldState) -> f64 {
        self.params.rewards.finish_per_dirty * next.dirty_on_table() as f64
    }

    /// One transition. `hidden` overrides the state's counts as the source
    /// of grasp probabilities, one `(n_succ, n_fail)` pair per object.
    pub fn apply<O: Outcomes>(
        &self,
        state: &WorldState,
        action: ActionId,
        hidden: Option<&[(f64, f64)]>,
        outcomes: &mut O,
    ) -> (WorldState, f64) {
        if state.finished {
            let mut next = state.clone();
            next.last = StepOutcome {
                absorbed: true,
                success: true,
                reveals: SmallVec::new(),
            };
            return (next, 0.0);
        }
        let r = self.params.rewards;
        let mut next = state.clone();
        next.last = StepOutcome::default();
        let mut reward: f64;
        match self.action(action) {
            Some(DishAction::Finish) => {
                reward = self.truncation(state);
                next.finished = true;
                next.last.success = true;
            }
            Some(act @ (DishAction::Lift(i) | DishAction::Wash(i))) if state.on_table(i) => {
                let wash = matches!(act, DishAction::Wash(_));
                let p = match hidden {
                    Some(h) => self.grasp_probability_with(state, i, h[i].0, h[i].1),
                    None => self.grasp_probability(state, i),
                };
                let success = outcomes.grasp(p);
                next.last.success = success;
                let counts = &mut next.objects[i];
                if success {
                    counts.n_succ += 1;
                } else {
                    counts.n_fail += 1;
                }
                reward = match (wash, success) {
                    (true, true) => {
                        next.on_table &= !(1u64 << i);
                        if state.is_dirty(i) {
                            r.wash_dirty
                        } else {
                            r.wash_clean
                        }
                    }
                    (true, false) => r.grasp_fail,
                    (false, _) => r.lift,
                };
                self.reveal(state, &mut next, i, wash, success, outcomes);
            }
            Some(DishAction::Lift(_)) => reward = r.lift,
            _ => reward = r.grasp_fail,
        }
        next.step += 1;
        if !next.finished && next.step as usize >= self.params.max_steps {
            next.finished = true;
            reward += self.truncation(&next);
        }
        (next, reward)
    }

    fn reveal<O: Outcomes>(
        &self,
        state: &WorldState,
        next: &mut WorldState,
        target: usize,
        wash: bool,
        success: bool,
        outcomes: &mut O,
    ) {
        let visible = self.tables.occluded[target]
            .iter()
            .filter(|(j, _)| state.on_table(*j as usize))
            .take(self.params.k);
        for (slot, &(j, bit)) in visible.enumerate() {
            let ji = j as usize;
            let current = self.setting_key(next, ji);
            let reveal = if !success {
                let dirty = next.objects[ji].latest(current).unwrap_or(false);
                Reveal {
                    object: j,
                    key: current,
                    fresh: false,
                    dirty,
                }
            } else {
                let key = if wash { current } else { current | 1 << bit };
                match next.objects[ji].cached(key) {
                    Some(dirty) => Reveal {
                        object: j,
                        key,
                        fresh: false,
                        dirty,
                    },
                    None => {
                        let p = self.tables.read_dirty[ji][key as usize][state.is_dirty(ji) as usize];
                        let dirty = outcomes.reading(slot, p);
                        next.objects[ji].cache(key, dirty);
                        Reveal {
                            object: j,
                            key,
                            fresh: true,
                            dirty,
                        }
                    }
                }
            };
            next.last.reveals.push(reveal);
        }
    }

    /// Observation emitted by the transition that produced `next`.
    pub fn observation_of(&self, next: &WorldState) -> ObservationId {
        if next.last.absorbed {
            return FINISH_OBSERVATION;
        }
        let mut id = next.last.success as usize;
        for (slot, r) in next.last.reveals.iter().enumerate() {
            id |= (r.dirty as usize) << (slot + 1);
        }
        ObservationId(id)
    }

    /// Per-node label lines for policy-graph export: the posterior mean
    /// attribute of each object still on the table.
    pub fn describe_particles(&self, particles: &[(f64, &WorldState)]) -> Vec<String> {
        let total: f64 = particles.iter().map(|(w, _)| w).sum();
        if total <= 0.0 {
            return Vec::new();
        }
        let Some((_, first)) = particles.first() else {
            return Vec::new();
        };
        let cells: Vec<String> = (0..self.object_count())
            .filter(|&i| first.on_table(i))
            .map(|i| {
                let p: f64 = particles
                    .iter()
                    .filter(|(_, s)| s.is_dirty(i))
                    .map(|(w, _)| w)
                    .sum::<f64>()
                    / total;
                format!("{}:{p:.2}", self.object_id(i))
            })
            .collect();
        vec![format!("P(dirty) {}", cells.join(" "))]
    }
}

impl GenerativeModel for DishModel {
    type State = WorldState;

    fn action_count(&self) -> usize {
        1 + 2 * self.object_count()
    }

    fn observation_count(&self) -> usize {
        observation_count(self.params.k)
    }

    fn sample_transition(&self, state: &WorldState, action: ActionId, rng: &mut SimRng) -> Transition<WorldState> {
        let (next, reward) = self.apply(state, action, None, &mut Sampled(rng));
        Transition {
            observation: self.observation_of(&next),
            state: next,
            reward,
        }
    }

    fn is_terminal(&self, state: &WorldState) -> bool {
        state.finished
    }

    fn initial_belief(&self, rng: &mut SimRng, particles: usize) -> ParticleBelief<WorldState> {
        self.initial_belief_from(&self.initial_observations, particles, rng)
    }

    fn observation_probability(&self, o: ObservationId, next: &WorldState, _action: ActionId) -> f64 {
        let last = &next.last;
        if last.absorbed {
            return (o == FINISH_OBSERVATION) as u8 as f64;
        }
        if (o.0 & 1 == 1) != last.success {
            return 0.0;
        }
        let mut prob = 1.0;
        for slot in 0..self.params.k {
            let bit = o.0 >> (slot + 1) & 1 == 1;
            match last.reveals.get(slot) {
                Some(r) if r.fresh => {
                    let j = r.object as usize;
                    let p = self.tables.read_dirty[j][r.key as usize][next.is_dirty(j) as usize];
                    prob *= if bit { p } else { 1.0 - p };
                }
                Some(r) if r.dirty != bit => return 0.0,
                Some(_) => {}
                None if bit => return 0.0,
                None => {}
            }
        }
        prob
    }

    fn is_valid_action(&self, state: &WorldState, action: ActionId) -> bool {
        match self.action(action) {
            Some(DishAction::Finish) => true,
            Some(DishAction::Lift(i) | DishAction::Wash(i)) => state.on_table(i),
            None => false,
        }
    }

    fn expected_reward(&self, state: &WorldState, action: ActionId) -> Option<f64> {
        if state.finished {
            return Some(0.0);
        }
        let r = &self.params.rewards;
        let truncates = state.step as usize + 1 >= self.params.max_steps;
        let dirty = state.dirty_on_table() as f64;
        let value = match self.action(action) {
            Some(DishAction::Finish) => return Some(r.finish_per_dirty * dirty),
            Some(DishAction::Wash(i)) if state.on_table(i) => {
                let p = self.grasp_probability(state, i);
                let removed = if state.is_dirty(i) { p } else { 0.0 };
                let wash = self.expected_wash_reward(state, i);
                return Some(wash + if truncates { r.finish_per_dirty * (dirty - removed) } else { 0.0 });
            }
            Some(DishAction::Lift(_)) => r.lift,
            _ => r.grasp_fail,
        };
        Some(value + if truncates { r.finish_per_dirty * dirty } else { 0.0 })
    }

    fn condition_on_observation(&self, next: &mut WorldState, _action: ActionId, o: ObservationId) {
        let reveals = std::mem::take(&mut next.last.reveals);
        let mut conditioned: SmallVec<[Reveal; 4]> = smallvec![];
        for (slot, mut r) in reveals.into_iter().enumerate() {
            if r.fresh {
                r.dirty = o.0 >> (slot + 1) & 1 == 1;
                next.objects[r.object as usize].cache(r.key, r.dirty);
            }
            conditioned.push(r);
        }
        next.last.reveals = conditioned;
    }

    /// Rebuilds the belief from the visible history: the executed step is
    /// replayed with the received outcomes on one surviving particle, then
    /// attribute bits are redrawn from their exact posteriors.
    fn recover_belief(
        &self,
        belief: &ParticleBelief<WorldState>,
        action: ActionId,
        observation: ObservationId,
        rng: &mut SimRng,
    ) -> ParticleBelief<WorldState> {
        let Some((_, prev)) = belief.iter().find(|(w, _)| *w > 0.0) else {
            return self.initial_belief(rng, belief.len());
        };
        match self.observe_step(prev, action, observation) {
            Ok(view) => self.sample_belief(&view, belief.len(), rng),
            Err(_) => belief.clone(),
        }
    }
}
