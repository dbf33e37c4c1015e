use std::time::Instant;

use crate::agents::config::{AgentConfig, UpdateScheme};
use crate::agents::replay::{ReplayBuffer, Transition};
use crate::agents::state::ActorCriticState;
use crate::agents::targets::compute_target;
use crate::agents::update::{actor_update, critic_update, soft_update};
use crate::diagnostics::{bias_probe, evaluate_policy, BiasSample};
use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::rng::RngStream;

const STREAM_INIT: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_ACT: u64 = 3;
const STREAM_REPLAY: u64 = 4;
const STREAM_TARGET: u64 = 5;
const STREAM_EVAL: u64 = 6;
const STREAM_PROBE: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSettings {
    pub n_states: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub bias: Option<BiasSettings>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub timestep: u64,
    pub eval_mean_return: f64,
    pub eval_std: f64,
    pub bias: Option<BiasSample>,
    pub wallclock_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub index: u64,
    /// Actor that chose the actions for this episode.
    pub actor: usize,
    pub steps: u64,
    pub total_return: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// First actor's parameters before any update.
    pub initial_actor: crate::numeric::ParamVector,
    pub metrics: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeRecord>,
    pub state: ActorCriticState,
    pub buffer: ReplayBuffer,
    pub updates: u64,
}

/// Behaviour action at environment step `step` (0-based).
///
/// Uniform over the action box during warmup; afterwards the chosen actor's
/// output plus `N(0, sigma)` noise, clipped to the box.
#[allow(clippy::too_many_arguments)]
pub fn select_action(
    state: &ActorCriticState,
    observation: &[f64],
    spec: &EnvSpec,
    sigma: f64,
    step: u64,
    warmup: u64,
    actor_index: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if step < warmup {
        return Ok(spec
            .action_low
            .iter()
            .zip(&spec.action_high)
            .map(|(&lo, &hi)| rng.uniform_range(lo, hi))
            .collect());
    }
    let mut a = state.actors[actor_index].online.forward(observation)?;
    if sigma > 0.0 {
        for v in &mut a {
            *v += rng.normal(sigma);
        }
    }
    Ok(spec.clip_action(&a))
}

/// One round of gradient updates. `update_index` counts prior rounds and
/// drives the delayed actor/target schedule.
pub fn update_step(
    config: &AgentConfig,
    state: &mut ActorCriticState,
    buffer: &ReplayBuffer,
    spec: &EnvSpec,
    update_index: u64,
    replay_rng: &mut RngStream,
    target_rng: &mut RngStream,
) -> Result<()> {
    let (low, high) = (&spec.action_low, &spec.action_high);
    let tick = !config.algorithm.delayed()
        || (update_index + 1) % config.target_update_interval as u64 == 0;
    let n = config.batch_size;
    match config.scheme() {
        UpdateScheme::Single => {
            let batch = buffer.sample(n, replay_rng)?;
            let y = compute_target(config, state, &batch, low, high, 0, target_rng)?;
            critic_update(&mut state.critics[0], &batch, &y)?;
            actor_update(&mut state.actors[0], &state.critics[0].online, &batch.states, n)?;
            soft_update_net(&mut state.critics[0], config.tau)?;
            soft_update_net(&mut state.actors[0], config.tau)?;
        }
        UpdateScheme::Twin => {
            let batch = buffer.sample(n, replay_rng)?;
            let y0 = compute_target(config, state, &batch, low, high, 0, target_rng)?;
            let y1 = if config.algorithm == crate::agents::config::Algorithm::ClippedSoftmaxTd3 {
                compute_target(config, state, &batch, low, high, 1, target_rng)?
            } else {
                y0.clone()
            };
            critic_update(&mut state.critics[0], &batch, &y0)?;
            critic_update(&mut state.critics[1], &batch, &y1)?;
            if tick {
                actor_update(&mut state.actors[0], &state.critics[0].online, &batch.states, n)?;
                soft_update_net(&mut state.critics[0], config.tau)?;
                soft_update_net(&mut state.critics[1], config.tau)?;
                soft_update_net(&mut state.actors[0], config.tau)?;
            }
        }
        UpdateScheme::PerCritic => {
            for i in 0..2 {
                let batch = buffer.sample(n, replay_rng)?;
                let y = compute_target(config, state, &batch, low, high, i, target_rng)?;
                critic_update(&mut state.critics[i], &batch, &y)?;
                if tick {
                    actor_update(&mut state.actors[i], &state.critics[i].online, &batch.states, n)?;
                    soft_update_net(&mut state.critics[i], config.tau)?;
                    soft_update_net(&mut state.actors[i], config.tau)?;
                }
            }
        }
    }
    Ok(())
}

fn soft_update_net(net: &mut crate::agents::state::Network, tau: f64) -> Result<()> {
    soft_update(&mut net.target, &net.online, tau)
}

/// Runs the act/store/update loop for `schedule.total_steps` environment steps.
///
/// Every random stream is forked from `rng` by a fixed label, so a run is a
/// pure function of the config, environment and seed.
pub fn train(
    config: &AgentConfig,
    env: &mut dyn Environment,
    schedule: &TrainSchedule,
    rng: &RngStream,
) -> Result<TrainOutput> {
    config.validate()?;
    if schedule.eval_interval == 0 {
        return Err(Error::Config("eval_interval must be positive".into()));
    }
    let spec = env.spec().clone();
    let started = Instant::now();
    let mut init_rng = rng.fork(STREAM_INIT);
    let mut env_rng = rng.fork(STREAM_ENV);
    let mut act_rng = rng.fork(STREAM_ACT);
    let mut replay_rng = rng.fork(STREAM_REPLAY);
    let mut target_rng = rng.fork(STREAM_TARGET);
    let eval_root = rng.fork(STREAM_EVAL);
    let probe_root = rng.fork(STREAM_PROBE);

    let mut state = ActorCriticState::init(config, &spec, &mut init_rng)?;
    let initial_actor = state.actors[0].online.clone();
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut metrics = Vec::new();
    let mut episodes = Vec::new();
    let mut updates = 0u64;
    let n_actors = state.actors.len();
    let pick_actor = |rng: &mut RngStream| if n_actors > 1 { rng.index(n_actors) } else { 0 };

    let mut obs = env.reset(&mut env_rng).observation;
    let mut actor = pick_actor(&mut act_rng);
    let mut ep_return = 0.0;
    let mut ep_steps = 0u64;
    let warmup = config.warmup_steps as u64;

    for t in 0..schedule.total_steps {
        let wrap = |e: Error| Error::Training { step: t, source: Box::new(e) };
        let a = select_action(&state, &obs, &spec, config.exploration_sigma, t, warmup, actor, &mut act_rng)
            .map_err(wrap)?;
        let r = env.step(&a);
        let terminal = r.done && !(r.timeout && config.bootstrap_timeouts);
        buffer.push(Transition {
            state: std::mem::take(&mut obs),
            action: a,
            reward: r.reward,
            next_state: r.next_observation.clone(),
            done: if terminal { 1.0 } else { 0.0 },
        });
        ep_return += r.reward;
        ep_steps += 1;
        if r.done {
            episodes.push(EpisodeRecord {
                index: episodes.len() as u64,
                actor,
                steps: ep_steps,
                total_return: ep_return,
            });
            obs = env.reset(&mut env_rng).observation;
            actor = pick_actor(&mut act_rng);
            ep_return = 0.0;
            ep_steps = 0;
        } else {
            obs = r.next_observation;
        }

        if t >= warmup {
            update_step(config, &mut state, &buffer, &spec, updates, &mut replay_rng, &mut target_rng)
                .map_err(wrap)?;
            updates += 1;
        }

        let done_steps = t + 1;
        if done_steps % schedule.eval_interval == 0 || done_steps == schedule.total_steps {
            let row = evaluate_row(&state, &*env, &buffer, config, schedule, done_steps, &eval_root, &probe_root)
                .map_err(wrap)?;
            metrics.push(MetricsRow {
                wallclock_seconds: started.elapsed().as_secs_f64(),
                ..row
            });
        }
    }
    Ok(TrainOutput {
        initial_actor,
        metrics,
        episodes,
        state,
        buffer,
        updates,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_row(
    state: &ActorCriticState,
    env: &dyn Environment,
    buffer: &ReplayBuffer,
    config: &AgentConfig,
    schedule: &TrainSchedule,
    timestep: u64,
    eval_root: &RngStream,
    probe_root: &RngStream,
) -> Result<MetricsRow> {
    let actor = &state.actors[0].online;
    let mut eval_env = env.clone_box();
    let mut policy = |o: &[f64]| actor.forward(o);
    let (mean, std) = evaluate_policy(
        &mut policy,
        &mut *eval_env,
        schedule.eval_episodes,
        &mut eval_root.fork(timestep),
    )?;
    let bias = match schedule.bias {
        Some(b) if buffer.len() >= b.n_states => Some(bias_probe(
            &state.critics[0].online,
            actor,
            buffer,
            b.n_states,
            env,
            config.gamma,
            b.horizon,
            timestep,
            &mut probe_root.fork(timestep),
        )?),
        _ => None,
    };
    Ok(MetricsRow {
        timestep,
        eval_mean_return: mean,
        eval_std: std,
        bias,
        wallclock_seconds: 0.0,
    })
}
