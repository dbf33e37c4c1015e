//! Continuous-control environments with a reset/step interface.
//!
//! Actions outside the box are clipped by the environment. Episodes end only
//! through the step limit unless an environment has terminal states; a step
//! limit sets both `done` and `timeout`.

pub mod movecar;
pub mod pointmass;

pub use movecar::MoveCar;
pub use pointmass::PointMass;

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&a, (&lo, &hi))| a.clamp(lo, hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub steps_elapsed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// The episode ended because of the step limit rather than a terminal state.
    pub timeout: bool,
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;

    fn spec(&self) -> &EnvSpec;

    fn reset(&mut self, rng: &mut RngStream) -> EnvState;

    fn step(&mut self, action: &[f64]) -> StepResult;

    fn state(&self) -> &EnvState;

    /// Places the environment at `observation` with a fresh step counter.
    fn inject(&mut self, observation: &[f64]) -> Result<()>;

    fn clone_box(&self) -> Box<dyn Environment>;
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub const ENV_NAMES: [&str; 2] = ["movecar", "pointmass1d"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "movecar" => Ok(Box::new(MoveCar::new())),
        "pointmass1d" => Ok(Box::new(PointMass::new())),
        other => Err(Error::Config(format!(
            "unknown environment `{other}` (expected one of {})",
            ENV_NAMES.join(", ")
        ))),
    }
}
