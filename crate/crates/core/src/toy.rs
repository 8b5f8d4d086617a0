//! A two-state "which lever" domain, small enough to solve by enumeration.
//!
//! The hidden state is 0 or 1. `Stay` keeps the state (flipping it with
//! probability `flip`), costs `probe_reward` and returns a noisy reading of
//! the new state. `Commit0`/`Commit1` bet on the state and end the episode.

use rand::Rng;

use crate::pomdp::{ActionId, GenerativeModel, ObservationId, ParticleBelief, Transition};
use crate::rng::SimRng;

pub const TERMINAL: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lever {
    Stay,
    Commit0,
    Commit1,
}

impl Lever {
    pub const ALL: [Lever; 3] = [Lever::Stay, Lever::Commit0, Lever::Commit1];

    pub fn id(self) -> ActionId {
        ActionId(self as usize)
    }

    pub fn from_id(a: ActionId) -> Lever {
        Lever::ALL[a.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateDomain {
    pub prior0: f64,
    pub flip: f64,
    pub accuracy: f64,
    pub probe_reward: f64,
    pub win: f64,
    pub lose: f64,
}

impl Default for TwoStateDomain {
    fn default() -> Self {
        TwoStateDomain {
            prior0: 0.5,
            flip: 0.0,
            accuracy: 0.85,
            probe_reward: -1.0,
            win: 10.0,
            lose: -15.0,
        }
    }
}

impl TwoStateDomain {
    pub fn transition_probability(&self, s: u8, a: ActionId, next: u8) -> f64 {
        if s == TERMINAL {
            return (next == TERMINAL) as u8 as f64;
        }
        match Lever::from_id(a) {
            Lever::Stay if next == s => 1.0 - self.flip,
            Lever::Stay if next != TERMINAL => self.flip,
            Lever::Stay => 0.0,
            _ => (next == TERMINAL) as u8 as f64,
        }
    }

    pub fn reward(&self, s: u8, a: ActionId) -> f64 {
        if s == TERMINAL {
            return 0.0;
        }
        match Lever::from_id(a) {
            Lever::Stay => self.probe_reward,
            Lever::Commit0 if s == 0 => self.win,
            Lever::Commit1 if s == 1 => self.win,
            _ => self.lose,
        }
    }
}

impl GenerativeModel for TwoStateDomain {
    type State = u8;

    fn action_count(&self) -> usize {
        3
    }

    fn observation_count(&self) -> usize {
        2
    }

    fn sample_transition(&self, state: &u8, action: ActionId, rng: &mut SimRng) -> Transition<u8> {
        let s = *state;
        if s == TERMINAL {
            return Transition {
                state: TERMINAL,
                observation: ObservationId(0),
                reward: 0.0,
            };
        }
        let reward = self.reward(s, action);
        match Lever::from_id(action) {
            Lever::Stay => {
                let next = if rng.random::<f64>() < self.flip { 1 - s } else { s };
                let correct = rng.random::<f64>() < self.accuracy;
                let obs = if correct { next } else { 1 - next };
                Transition {
                    state: next,
                    observation: ObservationId(obs as usize),
                    reward,
                }
            }
            _ => Transition {
                state: TERMINAL,
                observation: ObservationId(0),
                reward,
            },
        }
    }

    fn is_terminal(&self, state: &u8) -> bool {
        *state == TERMINAL
    }

    fn initial_belief(&self, rng: &mut SimRng, particles: usize) -> ParticleBelief<u8> {
        ParticleBelief::uniform(
            (0..particles)
                .map(|_| if rng.random::<f64>() < self.prior0 { 0 } else { 1 })
                .collect(),
        )
    }

    fn observation_probability(&self, o: ObservationId, next: &u8, action: ActionId) -> f64 {
        if *next == TERMINAL || Lever::from_id(action) != Lever::Stay {
            return (o.0 == 0) as u8 as f64;
        }
        if o.0 == *next as usize {
            self.accuracy
        } else {
            1.0 - self.accuracy
        }
    }

    fn expected_reward(&self, state: &u8, action: ActionId) -> Option<f64> {
        Some(self.reward(*state, action))
    }
}
