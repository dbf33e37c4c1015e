//! Bootstrap targets `y = r + gamma (1 - d) T(s')` for every algorithm.
//!
//! Functions that use sampled target actions take the sample sets as input so
//! that callers can evaluate several operators on one frozen draw.

use crate::agents::config::{AgentConfig, Algorithm, UpdateScheme};
use crate::agents::replay::Batch;
use crate::agents::state::{critic_inputs, ActorCriticState};
use crate::error::{check_len, Error, Result};
use crate::numeric::ParamVector;
use crate::rng::RngStream;
use crate::softmax::{
    lse_is_estimate, perturb, sample_target_actions, softmax_log_weighted, ActionSampleSet,
    LseNormalization,
};

/// Proposal used to draw target actions.
#[derive(Debug, Clone, Copy)]
pub struct SampleSpec<'a> {
    pub k: usize,
    pub sigma_bar: f64,
    pub clip_c: f64,
    pub low: &'a [f64],
    pub high: &'a [f64],
}

pub fn policy_actions(actor: &ParamVector, states: &[f64], n: usize) -> Result<Vec<f64>> {
    actor.forward_batch(states, n)
}

/// One sample set per row of `centers` (row-major, `action_dim` wide).
pub fn draw_sample_sets(
    centers: &[f64],
    action_dim: usize,
    spec: &SampleSpec<'_>,
    rng: &mut RngStream,
) -> Result<Vec<ActionSampleSet>> {
    centers
        .chunks_exact(action_dim)
        .map(|c| sample_target_actions(c, spec.sigma_bar, spec.clip_c, spec.k, spec.low, spec.high, rng))
        .collect()
}

/// Critic values at every sampled action, one vector per batch row.
pub fn sampled_q(
    critic: &ParamVector,
    next_states: &[f64],
    state_dim: usize,
    sets: &[ActionSampleSet],
) -> Result<Vec<Vec<f64>>> {
    check_len("sample sets", next_states.len() / state_dim.max(1), sets.len())?;
    let Some(first) = sets.first() else {
        return Ok(Vec::new());
    };
    let ad = first.action_dim();
    let mut inputs = Vec::new();
    let mut rows = 0;
    for (i, set) in sets.iter().enumerate() {
        let s = &next_states[i * state_dim..(i + 1) * state_dim];
        for j in 0..set.len() {
            inputs.extend_from_slice(s);
            inputs.extend_from_slice(&set.actions[j * ad..(j + 1) * ad]);
        }
        rows += set.len();
    }
    let q = critic.forward_batch(&inputs, rows)?;
    let mut out = Vec::with_capacity(sets.len());
    let mut offset = 0;
    for set in sets {
        out.push(q[offset..offset + set.len()].to_vec());
        offset += set.len();
    }
    Ok(out)
}

fn elementwise_min(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.min(*q)).collect())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Self-normalized importance-sampling softmax of `q` over one sample set.
pub fn softmax_over(set: &ActionSampleSet, q: &[f64], beta: f64) -> Result<f64> {
    check_len("sampled q values", set.len(), q.len())?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sampled q values".into()));
    }
    Ok(softmax_log_weighted(q, &set.log_importance(), beta))
}

fn critic_at(critic: &ParamVector, batch: &Batch, states: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
    let x = critic_inputs(states, batch.state_dim, actions, batch.action_dim);
    critic.forward_batch(&x, batch.len)
}

pub fn ddpg_target(batch: &Batch, critic: &ParamVector, actor: &ParamVector, gamma: f64) -> Result<Vec<f64>> {
    let a = policy_actions(actor, &batch.next_states, batch.len)?;
    let v = critic_at(critic, batch, &batch.next_states, &a)?;
    Ok(batch.bootstrap(gamma, &v))
}

pub fn sd2_target(
    batch: &Batch,
    critic: &ParamVector,
    sets: &[ActionSampleSet],
    beta: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    let q = sampled_q(critic, &batch.next_states, batch.state_dim, sets)?;
    let v = sets
        .iter()
        .zip(&q)
        .map(|(s, q)| softmax_over(s, q, beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(batch.bootstrap(gamma, &v))
}

/// Clipped double-Q target at a single smoothed policy action.
#[allow(clippy::too_many_arguments)]
pub fn td3_target(
    batch: &Batch,
    critics: [&ParamVector; 2],
    actor: &ParamVector,
    gamma: f64,
    target_noise: f64,
    clip_c: f64,
    low: &[f64],
    high: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let centers = policy_actions(actor, &batch.next_states, batch.len)?;
    let actions = if target_noise > 0.0 {
        let mut out = Vec::with_capacity(centers.len());
        let mut noise = vec![0.0; batch.action_dim];
        for c in centers.chunks_exact(batch.action_dim) {
            perturb(c, target_noise, clip_c, low, high, rng, &mut out, &mut noise);
        }
        out
    } else {
        centers
    };
    let q1 = critic_at(critics[0], batch, &batch.next_states, &actions)?;
    let q2 = critic_at(critics[1], batch, &batch.next_states, &actions)?;
    let v: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| a.min(*b)).collect();
    Ok(batch.bootstrap(gamma, &v))
}

/// Softmax over the pointwise minimum of both critics at the sampled actions.
pub fn sd3_target(
    batch: &Batch,
    critics: [&ParamVector; 2],
    sets: &[ActionSampleSet],
    beta: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    let q1 = sampled_q(critics[0], &batch.next_states, batch.state_dim, sets)?;
    let q2 = sampled_q(critics[1], &batch.next_states, batch.state_dim, sets)?;
    let qhat = elementwise_min(&q1, &q2);
    let v = sets
        .iter()
        .zip(&qhat)
        .map(|(s, q)| softmax_over(s, q, beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(batch.bootstrap(gamma, &v))
}

/// `r + gamma (1 - d) min(softmax of Q_other, Q_own(s', pi(s')))`.
#[allow(clippy::too_many_arguments)]
pub fn clipped_softmax_td3_target(
    batch: &Batch,
    own: &ParamVector,
    other: &ParamVector,
    actor: &ParamVector,
    sets: &[ActionSampleSet],
    beta: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    let a = policy_actions(actor, &batch.next_states, batch.len)?;
    let q_own = critic_at(own, batch, &batch.next_states, &a)?;
    let q_other = sampled_q(other, &batch.next_states, batch.state_dim, sets)?;
    let v = sets
        .iter()
        .zip(&q_other)
        .zip(&q_own)
        .map(|((s, q), own)| Ok(softmax_over(s, q, beta)?.min(*own)))
        .collect::<Result<Vec<_>>>()?;
    Ok(batch.bootstrap(gamma, &v))
}

/// Minimum over critics of each critic's sample average.
pub fn td3k_target(
    batch: &Batch,
    critics: [&ParamVector; 2],
    sets: &[ActionSampleSet],
    gamma: f64,
) -> Result<Vec<f64>> {
    let q1 = sampled_q(critics[0], &batch.next_states, batch.state_dim, sets)?;
    let q2 = sampled_q(critics[1], &batch.next_states, batch.state_dim, sets)?;
    let v: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| mean(a).min(mean(b))).collect();
    Ok(batch.bootstrap(gamma, &v))
}

/// Sample average of the pointwise minimum of both critics.
pub fn sd3_averaged_target(
    batch: &Batch,
    critics: [&ParamVector; 2],
    sets: &[ActionSampleSet],
    gamma: f64,
) -> Result<Vec<f64>> {
    let q1 = sampled_q(critics[0], &batch.next_states, batch.state_dim, sets)?;
    let q2 = sampled_q(critics[1], &batch.next_states, batch.state_dim, sets)?;
    let v: Vec<f64> = elementwise_min(&q1, &q2).iter().map(|q| mean(q)).collect();
    Ok(batch.bootstrap(gamma, &v))
}

pub fn detsac_target(
    batch: &Batch,
    critic: &ParamVector,
    sets: &[ActionSampleSet],
    beta: f64,
    gamma: f64,
    normalization: LseNormalization,
) -> Result<Vec<f64>> {
    let q = sampled_q(critic, &batch.next_states, batch.state_dim, sets)?;
    let v = sets
        .iter()
        .zip(q)
        .map(|(s, q)| {
            let mut s = s.clone().with_q_values(q)?;
            s.beta = beta;
            lse_is_estimate(&s, normalization)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(batch.bootstrap(gamma, &v))
}

/// Target for critic `i` under `config.algorithm`, from the target networks.
pub fn compute_target(
    config: &AgentConfig,
    state: &ActorCriticState,
    batch: &Batch,
    low: &[f64],
    high: &[f64],
    i: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let actor_index = match config.scheme() {
        UpdateScheme::PerCritic => i,
        _ => 0,
    };
    let actor = &state.actors[actor_index].target;
    let critic = |j: usize| &state.critics[j].target;
    let spec = SampleSpec {
        k: config.k_samples,
        sigma_bar: config.sigma_bar,
        clip_c: config.noise_clip,
        low,
        high,
    };
    let mut sets = || -> Result<Vec<ActionSampleSet>> {
        let centers = policy_actions(actor, &batch.next_states, batch.len)?;
        draw_sample_sets(&centers, batch.action_dim, &spec, rng)
    };
    let g = config.gamma;
    match config.algorithm {
        Algorithm::Ddpg => ddpg_target(batch, critic(0), actor, g),
        Algorithm::Sd2 => sd2_target(batch, critic(0), &sets()?, config.beta, g),
        Algorithm::DetSac => detsac_target(
            batch,
            critic(0),
            &sets()?,
            config.beta,
            g,
            LseNormalization::Measure,
        ),
        Algorithm::Td3 => td3_target(
            batch,
            [critic(0), critic(1)],
            actor,
            g,
            config.target_noise,
            config.noise_clip,
            low,
            high,
            rng,
        ),
        Algorithm::Td3K => td3k_target(batch, [critic(0), critic(1)], &sets()?, g),
        Algorithm::ClippedSoftmaxTd3 => {
            let s = sets()?;
            clipped_softmax_td3_target(batch, critic(i), critic(1 - i), actor, &s, config.beta, g)
        }
        Algorithm::Sd3 => sd3_target(batch, [critic(0), critic(1)], &sets()?, config.beta, g),
        Algorithm::Sd3Averaged => sd3_averaged_target(batch, [critic(0), critic(1)], &sets()?, g),
    }
}
