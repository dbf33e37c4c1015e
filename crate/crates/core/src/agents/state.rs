use crate::agents::config::{AgentConfig, Algorithm};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::numeric::{AdamState, MlpSpec, ParamVector};
use crate::rng::RngStream;

/// Online parameters, their target copy and the optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub online: ParamVector,
    pub target: ParamVector,
    pub adam: AdamState,
}

impl Network {
    pub fn new(online: ParamVector, learning_rate: f64) -> Self {
        let adam = AdamState::new(online.len(), learning_rate);
        Self {
            target: online.clone(),
            online,
            adam,
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        self.online.spec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticState {
    pub algorithm: Algorithm,
    pub critics: Vec<Network>,
    pub actors: Vec<Network>,
}

impl ActorCriticState {
    pub fn init(config: &AgentConfig, env: &EnvSpec, rng: &mut RngStream) -> Result<Self> {
        let critic_spec = MlpSpec::critic(env.state_dim + env.action_dim, &config.critic_hidden)?;
        let actor_spec = MlpSpec::actor(
            env.state_dim,
            &config.actor_hidden,
            &env.action_low,
            &env.action_high,
        )?;
        let critics = (0..config.num_critics())
            .map(|_| Network::new(ParamVector::init(critic_spec.clone(), rng), config.learning_rate))
            .collect();
        let actors = (0..config.num_actors())
            .map(|_| Network::new(ParamVector::init(actor_spec.clone(), rng), config.learning_rate))
            .collect();
        Ok(Self {
            algorithm: config.algorithm,
            critics,
            actors,
        })
    }

    /// Networks in checkpoint order: critics, then actors.
    pub fn networks(&self) -> impl Iterator<Item = &Network> {
        self.critics.iter().chain(&self.actors)
    }

    pub fn check_shapes(&self) -> Result<()> {
        for net in self.networks() {
            if net.online.spec() != net.target.spec() || net.adam.len() != net.online.len() {
                return Err(Error::Invariant("target or optimizer shape differs from online network".into()));
            }
        }
        Ok(())
    }
}

/// Row-wise concatenation of states and actions into critic inputs.
pub fn critic_inputs(states: &[f64], state_dim: usize, actions: &[f64], action_dim: usize) -> Vec<f64> {
    let n = if state_dim == 0 { 0 } else { states.len() / state_dim };
    let mut out = Vec::with_capacity(n * (state_dim + action_dim));
    for i in 0..n {
        out.extend_from_slice(&states[i * state_dim..(i + 1) * state_dim]);
        out.extend_from_slice(&actions[i * action_dim..(i + 1) * action_dim]);
    }
    out
}
