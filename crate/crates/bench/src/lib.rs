//! Shared fixtures for the planning benchmarks.

use pomdp_manip::dish::{bundled_scene, merge_objects};
use pomdp_manip::rng::seeded;
use pomdp_manip::{DishModel, DomainParams, GenerativeModel, ParticleBelief, PlannerConfig};

/// The first bundled table scene with every dirty cup read as dirty.
pub fn table_model() -> DishModel {
    let scene = merge_objects(&bundled_scene("scene01").expect("bundled scene")).expect("valid scene");
    let dirty: Vec<bool> = scene.objects.iter().map(|o| o.dirty).collect();
    DishModel::new(&scene, DomainParams::default())
        .and_then(|m| m.with_initial_observations(dirty))
        .expect("valid model")
}

pub fn initial_belief(model: &DishModel, particles: usize) -> ParticleBelief<<DishModel as GenerativeModel>::State> {
    model.initial_belief(&mut seeded(1), particles)
}

pub fn default_config() -> PlannerConfig {
    PlannerConfig::default()
}
