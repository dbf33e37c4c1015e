//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Agent settings live
//! under the `agent.` prefix and diagnostics toggles under `diagnostics.`.
//! A `preset` line fills every agent field with a named hyperparameter table;
//! explicit keys override it regardless of line order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::agents::{beta_preset, AgentConfig, Algorithm};
use crate::diagnostics::horizon_for;
use crate::env::ENV_NAMES;
use crate::error::{Error, Result};

pub const PRESETS: [&str; 3] = ["table1-movecar", "table2-default", "table2-humanoid"];

pub fn preset(name: &str, algorithm: Algorithm) -> Result<AgentConfig> {
    match name {
        "table1-movecar" => Ok(AgentConfig::table1_movecar(algorithm)),
        "table2-default" => Ok(AgentConfig::table2_default(algorithm)),
        "table2-humanoid" => Ok(AgentConfig::table2_humanoid(algorithm)),
        other => Err(Error::Config(format!(
            "unknown preset `{other}` (expected one of {})",
            PRESETS.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub bias: bool,
    pub bias_states: usize,
    pub bias_horizon: usize,
    pub landscape: bool,
    pub landscape_directions: usize,
    pub interpolation: bool,
    pub interpolation_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub preset: Option<String>,
    pub agent: AgentConfig,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub n_seeds: u64,
    pub seed_base: u64,
    pub output_dir: PathBuf,
    pub diagnostics: Diagnostics,
}

const AGENT_KEYS: [&str; 17] = [
    "agent.gamma",
    "agent.tau",
    "agent.batch_size",
    "agent.learning_rate",
    "agent.buffer_capacity",
    "agent.warmup_steps",
    "agent.exploration_sigma",
    "agent.noise_clip",
    "agent.target_noise",
    "agent.target_update_interval",
    "agent.k_samples",
    "agent.sigma_bar",
    "agent.beta",
    "agent.critic_hidden",
    "agent.actor_hidden",
    "agent.double_actor_td3",
    "agent.bootstrap_timeouts",
];

const TOP_KEYS: [&str; 8] = [
    "env",
    "algorithm",
    "preset",
    "total_steps",
    "eval_interval",
    "eval_episodes",
    "n_seeds",
    "seed_base",
];

const DIAG_KEYS: [&str; 7] = [
    "diagnostics.bias",
    "diagnostics.bias_states",
    "diagnostics.bias_horizon",
    "diagnostics.landscape",
    "diagnostics.landscape_directions",
    "diagnostics.interpolation",
    "diagnostics.interpolation_points",
];

fn known(key: &str) -> bool {
    key == "output_dir"
        || key == "agent.hidden"
        || TOP_KEYS.contains(&key)
        || AGENT_KEYS.contains(&key)
        || DIAG_KEYS.contains(&key)
}

/// Parses `key = value` lines into a map, rejecting unknown and repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !known(k) {
            return Err(Error::UnknownKey(k.to_string()));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true/false, got `{v}`"))),
    }
}

fn widths(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|w| num::<usize>(key, w.trim()))
        .collect()
}

fn uses_beta(a: Algorithm) -> bool {
    matches!(
        a,
        Algorithm::Sd2 | Algorithm::Sd3 | Algorithm::ClippedSoftmaxTd3 | Algorithm::DetSac
    )
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        for k in map.keys() {
            if !known(k) {
                return Err(Error::UnknownKey(k.clone()));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let mut missing = Vec::new();
        for k in ["env", "algorithm", "total_steps", "output_dir"] {
            if get(k).is_none() {
                missing.push(k.to_string());
            }
        }
        let algorithm = match get("algorithm") {
            Some(a) => Some(a.parse::<Algorithm>()?),
            None => None,
        };
        let env = get("env").unwrap_or_default().to_string();
        if !env.is_empty() && !ENV_NAMES.contains(&env.as_str()) {
            return Err(Error::Config(format!(
                "unknown environment `{env}` (expected one of {})",
                ENV_NAMES.join(", ")
            )));
        }
        let preset_name = get("preset").map(str::to_string);
        let mut agent = match (&preset_name, algorithm) {
            (Some(p), Some(a)) => Some(preset(p, a)?),
            (Some(p), None) => {
                preset(p, Algorithm::Ddpg)?;
                None
            }
            _ => None,
        };
        if preset_name.is_none() {
            let hidden_given = get("agent.hidden").is_some();
            for k in AGENT_KEYS {
                let optional = matches!(k, "agent.double_actor_td3" | "agent.bootstrap_timeouts" | "agent.beta")
                    || (hidden_given && k.ends_with("_hidden"));
                if !optional && get(k).is_none() {
                    missing.push(k.to_string());
                }
            }
        }
        if let Some(a) = algorithm {
            let has_beta = get("agent.beta").is_some()
                || (preset_name.is_some() && beta_preset(&env).is_some());
            if uses_beta(a) && !has_beta {
                missing.push("agent.beta".to_string());
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingFields(missing));
        }
        let algorithm = algorithm.expect("checked above");
        let mut agent = agent.take().unwrap_or_else(|| AgentConfig {
            beta: 0.0,
            ..AgentConfig::table2_default(algorithm)
        });
        if preset_name.is_some() {
            if let Some(b) = beta_preset(&env) {
                agent.beta = b;
            }
        }
        if let Some(v) = get("agent.hidden") {
            let w = widths("agent.hidden", v)?;
            agent.critic_hidden = w.clone();
            agent.actor_hidden = w;
        }
        for (k, v) in map.iter().filter(|(k, _)| k.starts_with("agent.") && *k != "agent.hidden") {
            let v = v.as_str();
            match k.as_str() {
                "agent.gamma" => agent.gamma = num(k, v)?,
                "agent.tau" => agent.tau = num(k, v)?,
                "agent.batch_size" => agent.batch_size = num(k, v)?,
                "agent.learning_rate" => agent.learning_rate = num(k, v)?,
                "agent.buffer_capacity" => agent.buffer_capacity = num(k, v)?,
                "agent.warmup_steps" => agent.warmup_steps = num(k, v)?,
                "agent.exploration_sigma" => agent.exploration_sigma = num(k, v)?,
                "agent.noise_clip" => agent.noise_clip = num(k, v)?,
                "agent.target_noise" => agent.target_noise = num(k, v)?,
                "agent.target_update_interval" => agent.target_update_interval = num(k, v)?,
                "agent.k_samples" => agent.k_samples = num(k, v)?,
                "agent.sigma_bar" => agent.sigma_bar = num(k, v)?,
                "agent.beta" => agent.beta = num(k, v)?,
                "agent.critic_hidden" => agent.critic_hidden = widths(k, v)?,
                "agent.actor_hidden" => agent.actor_hidden = widths(k, v)?,
                "agent.double_actor_td3" => agent.double_actor_td3 = flag(k, v)?,
                "agent.bootstrap_timeouts" => agent.bootstrap_timeouts = flag(k, v)?,
                _ => return Err(Error::UnknownKey(k.clone())),
            }
        }
        agent.validate()?;

        let opt_num = |k: &str, default: u64| -> Result<u64> {
            get(k).map(|v| num(k, v)).unwrap_or(Ok(default))
        };
        let opt_flag = |k: &str| -> Result<bool> { get(k).map(|v| flag(k, v)).unwrap_or(Ok(false)) };
        let diagnostics = Diagnostics {
            bias: opt_flag("diagnostics.bias")?,
            bias_states: opt_num("diagnostics.bias_states", 1000)? as usize,
            bias_horizon: opt_num("diagnostics.bias_horizon", horizon_for(agent.gamma, 1e-4) as u64)? as usize,
            landscape: opt_flag("diagnostics.landscape")?,
            landscape_directions: opt_num("diagnostics.landscape_directions", 200)? as usize,
            interpolation: opt_flag("diagnostics.interpolation")?,
            interpolation_points: opt_num("diagnostics.interpolation_points", 21)? as usize,
        };
        let cfg = ExperimentConfig {
            env,
            preset: preset_name,
            agent,
            total_steps: num("total_steps", get("total_steps").unwrap_or_default())?,
            eval_interval: opt_num("eval_interval", 5000)?,
            eval_episodes: opt_num("eval_episodes", 10)? as usize,
            n_seeds: opt_num("n_seeds", 1)?,
            seed_base: opt_num("seed_base", 0)?,
            output_dir: PathBuf::from(get("output_dir").unwrap_or_default()),
            diagnostics,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.total_steps <= self.agent.warmup_steps as u64 {
            return Err(Error::Config(format!(
                "total_steps ({}) must exceed agent.warmup_steps ({})",
                self.total_steps, self.agent.warmup_steps
            )));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 || self.n_seeds == 0 {
            return Err(Error::Config("eval_interval, eval_episodes and n_seeds must be positive".into()));
        }
        if self.diagnostics.bias && self.diagnostics.bias_states == 0 {
            return Err(Error::Config("diagnostics.bias_states must be positive".into()));
        }
        if self.diagnostics.interpolation && self.diagnostics.interpolation_points < 2 {
            return Err(Error::Config("diagnostics.interpolation_points must be >= 2".into()));
        }
        Ok(())
    }

    /// Fully resolved config as parseable text, without a preset line.
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let join = |w: &[usize]| w.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let d = &self.diagnostics;
        let lines = [
            format!("env = {}", self.env),
            format!("algorithm = {}", a.algorithm),
            format!("total_steps = {}", self.total_steps),
            format!("eval_interval = {}", self.eval_interval),
            format!("eval_episodes = {}", self.eval_episodes),
            format!("n_seeds = {}", self.n_seeds),
            format!("seed_base = {}", self.seed_base),
            format!("output_dir = {}", self.output_dir.display()),
            format!("agent.gamma = {:?}", a.gamma),
            format!("agent.tau = {:?}", a.tau),
            format!("agent.batch_size = {}", a.batch_size),
            format!("agent.learning_rate = {:?}", a.learning_rate),
            format!("agent.buffer_capacity = {}", a.buffer_capacity),
            format!("agent.warmup_steps = {}", a.warmup_steps),
            format!("agent.exploration_sigma = {:?}", a.exploration_sigma),
            format!("agent.noise_clip = {:?}", a.noise_clip),
            format!("agent.target_noise = {:?}", a.target_noise),
            format!("agent.target_update_interval = {}", a.target_update_interval),
            format!("agent.k_samples = {}", a.k_samples),
            format!("agent.sigma_bar = {:?}", a.sigma_bar),
            format!("agent.beta = {:?}", a.beta),
            format!("agent.critic_hidden = {}", join(&a.critic_hidden)),
            format!("agent.actor_hidden = {}", join(&a.actor_hidden)),
            format!("agent.double_actor_td3 = {}", a.double_actor_td3),
            format!("agent.bootstrap_timeouts = {}", a.bootstrap_timeouts),
            format!("diagnostics.bias = {}", d.bias),
            format!("diagnostics.bias_states = {}", d.bias_states),
            format!("diagnostics.bias_horizon = {}", d.bias_horizon),
            format!("diagnostics.landscape = {}", d.landscape),
            format!("diagnostics.landscape_directions = {}", d.landscape_directions),
            format!("diagnostics.interpolation = {}", d.interpolation),
            format!("diagnostics.interpolation_points = {}", d.interpolation_points),
        ];
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}
