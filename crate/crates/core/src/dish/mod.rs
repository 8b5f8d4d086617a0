//! Clearing dirty dishes from a cluttered table.
//!
//! Objects sit on a table and may partially hide each other. The agent can
//! LIFT an object to look behind it, WASH it (move it into the dishwasher) or
//! FINISH. Grasps succeed with a probability that decays with occlusion and
//! adapts to the object's grasp history; attribute readings (dirty or clean)
//! are noisier for more occluded objects and repeat exactly while an object's
//! set of present occluders is unchanged.

mod model;
mod observation;
mod params;
mod scene;
mod state;


use thiserror::Error;

pub use model::{DishModel, Forced, Outcomes, Sampled, FINISH_OBSERVATION, MAX_OBJECTS, MAX_OCCLUDERS};
pub use observation::{observation_count, DishAction, DishObservation};
pub use params::{occlusion_ratio, AttributePosterior, DomainParams, Rewards};
pub use scene::{
    bundled_scene, merge_objects, merge_objects_traced, table_scene_names, Contact, MergeEvent,
    SceneObject, SceneSpec, BUNDLED_SCENES, MERGE_DISTANCE, MERGE_RATIO,
};
pub use state::{ObjectState, Reveal, StepOutcome, WorldState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DishError {
    #[error("scene parse error: {0}")]
    Parse(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported scene: {0}")]
    Unsupported(String),
    #[error("observation {0} out of range")]
    InvalidObservation(usize),
    #[error("{0}")]
    Io(String),
}
