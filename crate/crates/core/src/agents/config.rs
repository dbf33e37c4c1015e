use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ddpg,
    Sd2,
    Td3,
    Sd3,
    /// TD3 whose per-critic target is `min(softmax of the other critic, own critic at the policy action)`.
    ClippedSoftmaxTd3,
    /// TD3 with the bootstrap averaged over K sampled target actions.
    Td3K,
    /// SD3 with a plain mean over the K samples in place of the softmax.
    Sd3Averaged,
    /// Single critic, deterministic actor, log-sum-exp target.
    DetSac,
}

pub const ALGORITHMS: [Algorithm; 8] = [
    Algorithm::Ddpg,
    Algorithm::Sd2,
    Algorithm::Td3,
    Algorithm::Sd3,
    Algorithm::ClippedSoftmaxTd3,
    Algorithm::Td3K,
    Algorithm::Sd3Averaged,
    Algorithm::DetSac,
];

/// How one gradient step is organised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateScheme {
    /// One critic, one actor, targets updated every step.
    Single,
    /// Two critics trained on one shared batch; actor and targets on a delay.
    Twin,
    /// One pass per critic, each with its own batch, target and paired actor.
    PerCritic,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Ddpg => "ddpg",
            Algorithm::Sd2 => "sd2",
            Algorithm::Td3 => "td3",
            Algorithm::Sd3 => "sd3",
            Algorithm::ClippedSoftmaxTd3 => "clipped-softmax-td3",
            Algorithm::Td3K => "td3-k",
            Algorithm::Sd3Averaged => "sd3-averaged",
            Algorithm::DetSac => "detsac",
        }
    }

    pub fn num_critics(self) -> usize {
        match self {
            Algorithm::Ddpg | Algorithm::Sd2 | Algorithm::DetSac => 1,
            _ => 2,
        }
    }

    pub fn num_actors(self, double_actor_td3: bool) -> usize {
        match self {
            Algorithm::Sd3 | Algorithm::Sd3Averaged => 2,
            Algorithm::Td3 if double_actor_td3 => 2,
            _ => 1,
        }
    }

    pub fn scheme(self, double_actor_td3: bool) -> UpdateScheme {
        match self {
            Algorithm::Ddpg | Algorithm::Sd2 | Algorithm::DetSac => UpdateScheme::Single,
            Algorithm::Sd3 | Algorithm::Sd3Averaged => UpdateScheme::PerCritic,
            Algorithm::Td3 if double_actor_td3 => UpdateScheme::PerCritic,
            _ => UpdateScheme::Twin,
        }
    }

    /// Whether actor and target updates wait `target_update_interval` critic steps.
    pub fn delayed(self) -> bool {
        matches!(
            self,
            Algorithm::Td3 | Algorithm::Td3K | Algorithm::ClippedSoftmaxTd3
        )
    }

    /// Whether the target draws K actions around the target policy.
    pub fn samples_actions(self) -> bool {
        !matches!(self, Algorithm::Ddpg | Algorithm::Td3)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALGORITHMS
            .iter()
            .copied()
            .find(|a| a.tag() == s)
            .ok_or_else(|| {
                let tags: Vec<_> = ALGORITHMS.iter().map(|a| a.tag()).collect();
                Error::Config(format!("unknown algorithm `{s}` (expected one of {})", tags.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    pub exploration_sigma: f64,
    pub noise_clip: f64,
    pub target_noise: f64,
    pub target_update_interval: usize,
    pub k_samples: usize,
    pub sigma_bar: f64,
    pub beta: f64,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub double_actor_td3: bool,
    /// Treat step-limit endings as non-terminal when bootstrapping.
    pub bootstrap_timeouts: bool,
}

impl AgentConfig {
    /// Shared hyperparameters for all environments except Humanoid.
    pub fn table2_default(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            gamma: 0.99,
            tau: 5e-3,
            batch_size: 100,
            learning_rate: 1e-3,
            buffer_capacity: 1_000_000,
            warmup_steps: 10_000,
            exploration_sigma: 0.1,
            noise_clip: 0.5,
            target_noise: 0.2,
            target_update_interval: 2,
            k_samples: 50,
            sigma_bar: 0.2,
            beta: 5e-2,
            critic_hidden: vec![400, 300],
            actor_hidden: vec![400, 300],
            double_actor_td3: false,
            bootstrap_timeouts: true,
        }
    }

    pub fn table2_humanoid(algorithm: Algorithm) -> Self {
        Self {
            batch_size: 256,
            learning_rate: 3e-4,
            critic_hidden: vec![256, 256],
            actor_hidden: vec![256, 256],
            beta: beta_preset("humanoid").unwrap_or(5e-2),
            ..Self::table2_default(algorithm)
        }
    }

    /// MoveCar setup: Table-2 values with wide exploration noise.
    pub fn table1_movecar(algorithm: Algorithm) -> Self {
        Self {
            exploration_sigma: 0.5,
            ..Self::table2_default(algorithm)
        }
    }

    pub fn num_critics(&self) -> usize {
        self.algorithm.num_critics()
    }

    pub fn num_actors(&self) -> usize {
        self.algorithm.num_actors(self.double_actor_td3)
    }

    pub fn scheme(&self) -> UpdateScheme {
        self.algorithm.scheme(self.double_actor_td3)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("learning_rate", self.learning_rate),
            ("noise_clip", self.noise_clip),
            ("sigma_bar", self.sigma_bar),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma >= 1.0 || self.tau > 1.0 {
            return Err(Error::Config("need gamma < 1 and tau <= 1".into()));
        }
        for (name, v) in [
            ("exploration_sigma", self.exploration_sigma),
            ("target_noise", self.target_noise),
            ("beta", self.beta),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.algorithm == Algorithm::DetSac && self.beta == 0.0 {
            return Err(Error::Config("detsac needs beta > 0".into()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("target_update_interval", self.target_update_interval),
            ("k_samples", self.k_samples),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.critic_hidden.contains(&0) || self.actor_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Softmax temperature used for each benchmark task.
pub fn beta_preset(env: &str) -> Option<f64> {
    let key = env.to_ascii_lowercase();
    let key = key.split('-').next().unwrap_or("");
    Some(match key {
        "ant" => 1e-3,
        "halfcheetah" => 5e-3,
        "bipedalwalker" | "hopper" | "humanoid" => 5e-2,
        "walker2d" => 1e-1,
        "lunarlandercontinuous" | "lunarlander" => 5e-1,
        "swimmer" => 5e2,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for a in ALGORITHMS {
            assert_eq!(a.tag().parse::<Algorithm>().unwrap(), a);
        }
        assert!("td4".parse::<Algorithm>().is_err());
    }

    #[test]
    fn table2_values() {
        let c = AgentConfig::table2_default(Algorithm::Sd3);
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.tau, 5e-3);
        assert_eq!(c.batch_size, 100);
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.buffer_capacity, 1_000_000);
        assert_eq!(c.warmup_steps, 10_000);
        assert_eq!(c.exploration_sigma, 0.1);
        assert_eq!(c.noise_clip, 0.5);
        assert_eq!(c.target_noise, 0.2);
        assert_eq!(c.target_update_interval, 2);
        assert_eq!(c.k_samples, 50);
        assert_eq!(c.sigma_bar, 0.2);
        assert_eq!(c.critic_hidden, vec![400, 300]);
        c.validate().unwrap();

        let h = AgentConfig::table2_humanoid(Algorithm::Sd3);
        assert_eq!((h.batch_size, h.learning_rate), (256, 3e-4));
        assert_eq!(h.actor_hidden, vec![256, 256]);

        let m = AgentConfig::table1_movecar(Algorithm::Sd2);
        assert_eq!((m.exploration_sigma, m.noise_clip), (0.5, 0.5));
        assert_eq!(m.critic_hidden, vec![400, 300]);
    }

    #[test]
    fn beta_presets() {
        assert_eq!(beta_preset("Ant-v2"), Some(1e-3));
        assert_eq!(beta_preset("HalfCheetah-v2"), Some(5e-3));
        assert_eq!(beta_preset("Hopper-v2"), Some(5e-2));
        assert_eq!(beta_preset("Walker2d-v2"), Some(1e-1));
        assert_eq!(beta_preset("LunarLanderContinuous-v2"), Some(5e-1));
        assert_eq!(beta_preset("Swimmer-v2"), Some(5e2));
        assert_eq!(beta_preset("movecar"), None);
    }

    #[test]
    fn structure_per_algorithm() {
        assert_eq!(Algorithm::Sd3.scheme(false), UpdateScheme::PerCritic);
        assert_eq!(Algorithm::Td3.scheme(false), UpdateScheme::Twin);
        assert_eq!(Algorithm::Td3.scheme(true), UpdateScheme::PerCritic);
        assert_eq!(Algorithm::Td3.num_actors(true), 2);
        assert_eq!(Algorithm::Sd2.num_critics(), 1);
        assert!(Algorithm::Td3.delayed() && !Algorithm::Sd3.delayed());
    }

    #[test]
    fn validation() {
        let mut c = AgentConfig::table2_default(Algorithm::DetSac);
        c.beta = 0.0;
        assert!(c.validate().is_err());
        let mut c = AgentConfig::table2_default(Algorithm::Ddpg);
        c.k_samples = 0;
        assert!(c.validate().is_err());
        let mut c = AgentConfig::table2_default(Algorithm::Ddpg);
        c.gamma = 1.0;
        assert!(c.validate().is_err());
    }
}
