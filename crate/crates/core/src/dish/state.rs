use smallvec::SmallVec;

/// Per-object agent-visible history: grasp counts and the attribute reading
/// cached for each occlusion setting the object has been seen under.
///
/// A setting key is a bitmask over the object's occluder list (sorted by
/// index) marking which occluders are absent, so at most 64 settings exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ObjectState {
    pub n_succ: u32,
    pub n_fail: u32,
    known: u64,
    readings: u64,
}

impl ObjectState {
    pub fn cached(&self, key: u8) -> Option<bool> {
        let bit = 1u64 << key;
        (self.known & bit != 0).then_some(self.readings & bit != 0)
    }

    pub(crate) fn cache(&mut self, key: u8, dirty: bool) {
        let bit = 1u64 << key;
        self.known |= bit;
        if dirty {
            self.readings |= bit;
        } else {
            self.readings &= !bit;
        }
    }

    /// Cached `(key, observed_dirty)` pairs in key order.
    pub fn readings(&self) -> impl Iterator<Item = (u8, bool)> + '_ {
        (0..64u8).filter_map(move |k| self.cached(k).map(|d| (k, d)))
    }

    /// Reading under the largest cached setting contained in `current`
    /// (ties go to the larger key), i.e. the most recent one still valid.
    pub fn latest(&self, current: u8) -> Option<bool> {
        let mut best: Option<u8> = None;
        let mut known = self.known;
        while known != 0 {
            let key = known.trailing_zeros() as u8;
            known &= known - 1;
            if key & !current != 0 {
                continue;
            }
            let better = best.is_none_or(|b| {
                (key.count_ones(), key) > (b.count_ones(), b)
            });
            if better {
                best = Some(key);
            }
        }
        best.and_then(|k| self.cached(k))
    }
}

/// One attribute reading produced by the last transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Reveal {
    pub object: u8,
    pub key: u8,
    /// The reading was drawn by this transition rather than read from the
    /// cache, so it is random given the object's true attribute.
    pub fresh: bool,
    pub dirty: bool,
}

/// What the last transition emitted, kept so the observation likelihood can
/// be evaluated on the next state alone.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct StepOutcome {
    /// The state was already terminal.
    pub absorbed: bool,
    pub success: bool,
    pub reveals: SmallVec<[Reveal; 4]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldState {
    pub(crate) on_table: u64,
    pub(crate) dirty: u64,
    pub(crate) objects: SmallVec<[ObjectState; 8]>,
    pub(crate) step: u32,
    pub(crate) finished: bool,
    pub(crate) last: StepOutcome,
}

impl WorldState {
    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn on_table(&self, i: usize) -> bool {
        self.on_table >> i & 1 == 1
    }

    pub fn is_dirty(&self, i: usize) -> bool {
        self.dirty >> i & 1 == 1
    }

    pub fn object(&self, i: usize) -> &ObjectState {
        &self.objects[i]
    }

    pub fn step(&self) -> usize {
        self.step as usize
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn last_outcome(&self) -> &StepOutcome {
        &self.last
    }

    pub fn dirty_on_table(&self) -> u32 {
        (self.on_table & self.dirty).count_ones()
    }

    pub fn table_mask(&self) -> u64 {
        self.on_table
    }

    pub fn dirty_mask(&self) -> u64 {
        self.dirty
    }

    /// Same state with the attribute bits replaced.
    pub fn with_dirty_mask(&self, dirty: u64) -> WorldState {
        WorldState {
            dirty,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_and_latest() {
        let mut o = ObjectState::default();
        assert_eq!(o.latest(0b11), None);
        o.cache(0, false);
        o.cache(0b01, true);
        o.cache(0b10, false);
        assert_eq!(o.cached(0b01), Some(true));
        assert_eq!(o.cached(0b11), None);
        assert_eq!(o.latest(0), Some(false));
        assert_eq!(o.latest(0b01), Some(true));
        // Two incomparable one-bit settings: the larger key wins.
        assert_eq!(o.latest(0b11), Some(false));
        assert_eq!(o.readings().count(), 3);
    }
}
