//! One-dimensional car on `[0, 10]`.
//!
//! The car starts at 8 and moves by its action in `[-1, 1]` each step,
//! stopping at the walls. The reward depends on the position after the move:
//! 2 inside `[0.5, 1.5]`, 1 inside `[8.5, 9.5]`, 0 elsewhere. Episodes last 100
//! steps and never terminate early.

use super::{EnvSpec, EnvState, Environment, StepResult};
use crate::error::{check_len, Error, Result};
use crate::rng::RngStream;

pub const START: f64 = 8.0;
pub const POS_LOW: f64 = 0.0;
pub const POS_HIGH: f64 = 10.0;
pub const ACTION_LOW: f64 = -1.0;
pub const ACTION_HIGH: f64 = 1.0;
pub const EPISODE_STEPS: usize = 100;

pub fn next_position(x: f64, action: f64) -> f64 {
    (x + action.clamp(ACTION_LOW, ACTION_HIGH)).clamp(POS_LOW, POS_HIGH)
}

pub fn reward_at(x: f64) -> f64 {
    if (0.5..=1.5).contains(&x) {
        2.0
    } else if (8.5..=9.5).contains(&x) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct MoveCar {
    spec: EnvSpec,
    state: EnvState,
}

impl MoveCar {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 1,
                action_dim: 1,
                action_low: vec![ACTION_LOW],
                action_high: vec![ACTION_HIGH],
                max_episode_steps: EPISODE_STEPS,
            },
            state: EnvState {
                observation: vec![START],
                steps_elapsed: 0,
            },
        }
    }
}

impl Default for MoveCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MoveCar {
    fn name(&self) -> &'static str {
        "movecar"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut RngStream) -> EnvState {
        self.state = EnvState {
            observation: vec![START],
            steps_elapsed: 0,
        };
        self.state.clone()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        assert_eq!(action.len(), 1, "MoveCar takes a scalar action");
        let x = next_position(self.state.observation[0], action[0]);
        self.state.observation[0] = x;
        self.state.steps_elapsed += 1;
        let timeout = self.state.steps_elapsed >= self.spec.max_episode_steps;
        StepResult {
            next_observation: vec![x],
            reward: reward_at(x),
            done: timeout,
            timeout,
        }
    }

    fn state(&self) -> &EnvState {
        &self.state
    }

    fn inject(&mut self, observation: &[f64]) -> Result<()> {
        check_len("MoveCar observation", 1, observation.len())?;
        let x = observation[0];
        if !(POS_LOW..=POS_HIGH).contains(&x) {
            return Err(Error::InvalidArgument(format!("position {x} outside [0, 10]")));
        }
        self.state = EnvState {
            observation: vec![x],
            steps_elapsed: 0,
        };
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64) -> MoveCar {
        let mut env = MoveCar::new();
        env.inject(&[x]).unwrap();
        env
    }

    #[test]
    fn reset_is_fixed() {
        let mut env = MoveCar::new();
        let a = env.reset(&mut RngStream::new(1));
        let b = env.reset(&mut RngStream::new(999));
        assert_eq!(a.observation, vec![8.0]);
        assert_eq!(a.steps_elapsed, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn step_examples() {
        let r = at(8.0).step(&[-1.0]);
        assert_eq!((r.next_observation[0], r.reward), (7.0, 0.0));
        let r = at(2.0).step(&[-1.0]);
        assert_eq!((r.next_observation[0], r.reward), (1.0, 2.0));
        let r = at(9.4).step(&[1.0]);
        assert_eq!((r.next_observation[0], r.reward), (10.0, 0.0));
        // out-of-range actions are clipped
        let r = at(5.0).step(&[-7.0]);
        assert_eq!(r.next_observation[0], 4.0);
    }

    #[test]
    fn episode_ends_at_step_limit() {
        let mut env = MoveCar::new();
        env.reset(&mut RngStream::new(0));
        for t in 1..=100 {
            let r = env.step(&[0.3]);
            assert_eq!(r.done, t == 100);
            assert_eq!(r.timeout, t == 100);
            assert!((0.0..=10.0).contains(&r.next_observation[0]));
        }
    }

    #[test]
    fn injection_rejects_bad_states() {
        let mut env = MoveCar::new();
        assert!(env.inject(&[11.0]).is_err());
        assert!(env.inject(&[1.0, 2.0]).is_err());
    }
}
