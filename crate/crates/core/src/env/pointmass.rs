//! Point mass on a line, driven toward the origin.
//!
//! State `(x, v)`, action `a` in `[-1, 1]`, time step `DT = 0.1`:
//!
//! ```text
//! x' = x + DT v
//! v' = v + DT a
//! r  = -(x^2 + VEL_COST v^2 + ACTION_COST a^2)
//! ```
//!
//! The reward is charged on the state before the move. Episodes start at
//! `x ~ U(-1, 1)`, `v = 0` and last 200 steps.

use super::{EnvSpec, EnvState, Environment, StepResult};
use crate::error::{check_len, Error, Result};
use crate::rng::RngStream;

pub const DT: f64 = 0.1;
pub const VEL_COST: f64 = 0.1;
pub const ACTION_COST: f64 = 0.01;
pub const EPISODE_STEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
    state: EnvState,
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 2,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                max_episode_steps: EPISODE_STEPS,
            },
            state: EnvState {
                observation: vec![0.0, 0.0],
                steps_elapsed: 0,
            },
        }
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn name(&self) -> &'static str {
        "pointmass1d"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut RngStream) -> EnvState {
        self.state = EnvState {
            observation: vec![rng.uniform_range(-1.0, 1.0), 0.0],
            steps_elapsed: 0,
        };
        self.state.clone()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        assert_eq!(action.len(), 1, "point mass takes a scalar action");
        let a = action[0].clamp(-1.0, 1.0);
        let (x, v) = (self.state.observation[0], self.state.observation[1]);
        let reward = -(x * x + VEL_COST * v * v + ACTION_COST * a * a);
        let next = vec![x + DT * v, v + DT * a];
        self.state.observation = next.clone();
        self.state.steps_elapsed += 1;
        let timeout = self.state.steps_elapsed >= self.spec.max_episode_steps;
        StepResult {
            next_observation: next,
            reward,
            done: timeout,
            timeout,
        }
    }

    fn state(&self) -> &EnvState {
        &self.state
    }

    fn inject(&mut self, observation: &[f64]) -> Result<()> {
        check_len("point-mass observation", 2, observation.len())?;
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point-mass observation".into()));
        }
        self.state = EnvState {
            observation: observation.to_vec(),
            steps_elapsed: 0,
        };
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
