mod common;

use common::enumerate_transitions;
use pomdp_manip::dish::{bundled_scene, merge_objects, DishModel, DomainParams, WorldState};
use pomdp_manip::pomdp::{ActionId, GenerativeModel, ObservationId};
use pomdp_manip::rng::seeded;

fn scene_model(name: &str) -> DishModel {
    let scene = merge_objects(&bundled_scene(name).unwrap()).unwrap();
    DishModel::new(&scene, DomainParams::default()).unwrap()
}

/// States reached by random play from sampled initial beliefs.
fn visited_states(model: &DishModel, seed: u64, count: usize) -> Vec<WorldState> {
    let mut rng = seeded(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let mut s = model.initial_belief(&mut rng, 1).into_particles().remove(0).state;
        while !model.is_terminal(&s) && out.len() < count {
            out.push(s.clone());
            // Skew away from FINISH so episodes last.
            let a = ActionId(1 + rand::Rng::random_range(&mut rng, 0..model.action_count() - 1));
            s = model.sample_transition(&s, a, &mut rng).state;
        }
    }
    out
}

fn check_state(model: &DishModel, s: &WorldState) {
    for a in (0..model.action_count()).map(ActionId) {
        let outcomes = enumerate_transitions(model, s, a);
        let total: f64 = outcomes.iter().map(|o| o.2).sum();
        assert!((total - 1.0).abs() < 1e-9, "branch mass {total}");
        let mean_reward: f64 = outcomes.iter().map(|o| o.2 * o.3).sum();
        let expected = model.expected_reward(s, a).unwrap();
        assert!((mean_reward - expected).abs() < 1e-9, "{a}: {mean_reward} vs {expected}");
        for o in (0..model.observation_count()).map(ObservationId) {
            let direct: f64 = outcomes.iter().filter(|x| x.1 == o).map(|x| x.2).sum();
            let marginal: f64 = outcomes
                .iter()
                .map(|x| x.2 * model.observation_probability(o, &x.0, a))
                .sum();
            assert!((direct - marginal).abs() < 1e-9, "{a} {o}: {direct} vs {marginal}");
        }
        for (next, _, _, _) in &outcomes {
            let mass: f64 = (0..model.observation_count())
                .map(|o| model.observation_probability(ObservationId(o), next, a))
                .sum();
            assert!((mass - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn observation_model_matches_enumeration_two_objects() {
    let model = common::two_object_model().with_initial_observations(vec![false, true]).unwrap();
    for s in visited_states(&model, 1, 60) {
        check_state(&model, &s);
    }
}

#[test]
fn observation_model_matches_enumeration_table_scene() {
    let model = scene_model("scene01");
    for s in visited_states(&model, 2, 25) {
        check_state(&model, &s);
    }
}

#[test]
fn observation_model_matches_enumeration_occluded_scene() {
    let model = scene_model("occluded_dirty").with_initial_observations(vec![false; 8]).unwrap();
    for s in visited_states(&model, 3, 25) {
        check_state(&model, &s);
    }
}

#[test]
fn conditioned_particles_match_exact_filter() {
    // Smaller particle count than the acceptance check, looser bound.
    let model = common::two_object_model().with_initial_observations(vec![true, false]).unwrap();
    let mut rng = seeded(9);
    let mut truth = model.initial_state(0b01, &[true, false]);
    let mut exact = common::exact_initial(&model, &[true, false]);
    let mut belief = model.initial_belief(&mut rng, 4000);
    for a in [1, 1, 3, 2].map(ActionId) {
        let tr = model.sample_transition(&truth, a, &mut rng);
        exact = common::exact_update(&model, &exact, a, tr.observation);
        belief = pomdp_manip::pomdp::belief_update(&belief, a, tr.observation, &model, 0.1, &mut rng).unwrap();
        let tv = common::total_variation(belief.iter(), &exact);
        assert!(tv < 0.06, "{tv}");
        truth = tr.state;
    }
}
