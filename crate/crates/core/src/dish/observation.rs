use smallvec::SmallVec;

use crate::pomdp::{ActionId, ObservationId};

use super::DishError;

/// Actions over objects indexed `0..n` in scene id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DishAction {
    Finish,
    Lift(usize),
    Wash(usize),
}

impl DishAction {
    /// `FINISH = 0`, `LIFT(i) = 1 + i`, `WASH(i) = 1 + n + i`.
    pub fn to_id(self, objects: usize) -> ActionId {
        match self {
            DishAction::Finish => ActionId(0),
            DishAction::Lift(i) => ActionId(1 + i),
            DishAction::Wash(i) => ActionId(1 + objects + i),
        }
    }

    pub fn from_id(id: ActionId, objects: usize) -> Option<DishAction> {
        match id.0 {
            0 => Some(DishAction::Finish),
            a if a <= objects => Some(DishAction::Lift(a - 1)),
            a if a <= 2 * objects => Some(DishAction::Wash(a - 1 - objects)),
            _ => None,
        }
    }

    pub fn target(self) -> Option<usize> {
        match self {
            DishAction::Finish => None,
            DishAction::Lift(i) | DishAction::Wash(i) => Some(i),
        }
    }
}

/// Grasp outcome plus `k` attribute readings (dirty = true) of the nearest
/// objects the target was occluding. Missing readings are padded as clean.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DishObservation {
    pub grasp_success: bool,
    pub dirty: SmallVec<[bool; 4]>,
}

impl DishObservation {
    /// Bit 0 is grasp success, bit `j` the `j`-th attribute reading.
    pub fn encode(&self) -> ObservationId {
        let attrs = self
            .dirty
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &d)| acc | ((d as usize) << (j + 1)));
        ObservationId(attrs | self.grasp_success as usize)
    }

    pub fn decode(id: ObservationId, k: usize) -> Result<DishObservation, DishError> {
        if id.0 >= observation_count(k) {
            return Err(DishError::InvalidObservation(id.0));
        }
        Ok(DishObservation {
            grasp_success: id.0 & 1 == 1,
            dirty: (0..k).map(|j| id.0 >> (j + 1) & 1 == 1).collect(),
        })
    }

    /// Renders e.g. `S,D,C`. The last `k - informative` positions are padding
    /// and render as `-`.
    pub fn label(&self, informative: usize) -> String {
        let mut out = String::from(if self.grasp_success { "S" } else { "F" });
        for (j, &d) in self.dirty.iter().enumerate() {
            out.push(',');
            out.push(match (j < informative, d) {
                (false, _) => '-',
                (true, true) => 'D',
                (true, false) => 'C',
            });
        }
        out
    }
}

pub fn observation_count(k: usize) -> usize {
    1 << (k + 1)
}
