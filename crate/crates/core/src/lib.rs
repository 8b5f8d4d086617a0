//! Online POMDP planning with finite policy graphs over particle beliefs,
//! applied to a multi-object manipulation domain.
//!
//! - [`pomdp`]: particle beliefs, the generative-model trait and the filter.
//! - [`planner`]: policy-graph improvement and receding-horizon planning.
//! - [`dish`]: the dish-washing domain with occlusion-dependent sensing.
//! - [`baselines`]: greedy heuristics.
//! - [`harness`]: batch simulation and statistics.

pub mod baselines;
pub mod dish;
pub mod harness;
pub mod planner;
pub mod pomdp;
pub mod rng;
pub mod toy;

pub use dish::{DishAction, DishError, DishModel, DomainParams, Rewards, SceneSpec};
pub use planner::{OnlinePlanner, PlannerConfig, PlannerError, PolicyGraph};
pub use pomdp::{ActionId, GenerativeModel, ObservationId, ParticleBelief, PomdpError};
pub use rng::SimRng;
