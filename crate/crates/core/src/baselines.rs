//! Greedy manipulation heuristics that take attribute readings at face value.

use crate::dish::{DishAction, DishModel, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeuristicConfig {
    /// Use the object's grasp counts; otherwise only the occlusion prior.
    pub use_grasp_history: bool,
}

/// Washes the object read as dirty that is most likely to be grasped, or
/// finishes when no object on the table reads dirty. Never lifts.
///
/// `view` is the agent-side state (see [`DishModel::observe_step`]); its
/// attribute bits are ignored. The reading used for each object is the one
/// cached under the largest setting contained in its current setting.
pub fn greedy_action(model: &DishModel, view: &WorldState, config: HeuristicConfig) -> DishAction {
    let params = model.params();
    let mut best: Option<(usize, f64)> = None;
    for i in 0..model.object_count() {
        if !view.on_table(i) {
            continue;
        }
        let key = model.setting_key(view, i);
        if view.object(i).latest(key) != Some(true) {
            continue;
        }
        let occl = model.occlusion_at(i, key);
        let p = if config.use_grasp_history {
            let o = view.object(i);
            params.grasp_success_prob(o.n_succ as f64, o.n_fail as f64, occl)
        } else {
            params.grasp_success_prob(0.0, 0.0, occl)
        };
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((i, p));
        }
    }
    best.map_or(DishAction::Finish, |(i, _)| DishAction::Wash(i))
}
