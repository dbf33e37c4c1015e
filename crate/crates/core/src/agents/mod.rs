//! Actor-critic agents sharing replay, target networks and the training loop.

pub mod checkpoint;
pub mod config;
pub mod replay;
pub mod state;
pub mod targets;
pub mod train;
pub mod update;

pub use config::{beta_preset, AgentConfig, Algorithm, UpdateScheme, ALGORITHMS};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use state::{ActorCriticState, Network};
pub use train::{select_action, train, BiasSettings, EpisodeRecord, MetricsRow, TrainOutput, TrainSchedule};
