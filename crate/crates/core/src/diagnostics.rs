//! Value-bias probes, loss-landscape perturbations and policy evaluation.

use serde::Serialize;

use crate::agents::replay::ReplayBuffer;
use crate::agents::state::critic_inputs;
use crate::agents::update::actor_loss_and_grad;
use crate::env::Environment;
use crate::error::{check_len, Error, Result};
use crate::numeric::{sample_unit_direction, MlpSpec, ParamVector};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasSample {
    pub timestep: u64,
    pub estimate_mean: f64,
    pub true_mean: f64,
    pub bias: f64,
}

impl BiasSample {
    pub fn new(timestep: u64, estimate_mean: f64, true_mean: f64) -> Self {
        Self {
            timestep,
            estimate_mean,
            true_mean,
            bias: estimate_mean - true_mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationRecord {
    pub direction: usize,
    /// `+1` or `-1`.
    pub sign: i8,
    pub alpha: f64,
    pub loss_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpolationPoint {
    pub alpha: f64,
    pub losses: Vec<f64>,
}

/// Smallest horizon with `gamma^h < tol`.
pub fn horizon_for(gamma: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    (tol.ln() / gamma.ln()).floor() as usize + 1
}

/// Discounted return of the deterministic `policy` from each probe state.
///
/// All rollouts advance in lockstep so the policy is evaluated as one batch
/// per step. Step limits are not terminal: when an environment times out it
/// is re-placed at its current observation and the rollout continues until
/// `horizon` steps or a true terminal.
pub fn mc_true_values(
    policy: &ParamVector,
    env: &dyn Environment,
    probe_states: &[Vec<f64>],
    gamma: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    let sd = env.spec().state_dim;
    let mut envs = Vec::with_capacity(probe_states.len());
    for s in probe_states {
        let mut e = env.clone_box();
        e.inject(s)?;
        envs.push(e);
    }
    let mut returns = vec![0.0; envs.len()];
    let mut active: Vec<usize> = (0..envs.len()).collect();
    let mut discount = 1.0;
    for _ in 0..horizon {
        if active.is_empty() {
            break;
        }
        let mut obs = Vec::with_capacity(active.len() * sd);
        for &i in &active {
            obs.extend_from_slice(&envs[i].state().observation);
        }
        let actions = policy.forward_batch(&obs, active.len())?;
        let ad = actions.len() / active.len();
        let mut still = Vec::with_capacity(active.len());
        for (row, &i) in active.iter().enumerate() {
            let r = envs[i].step(&actions[row * ad..(row + 1) * ad]);
            returns[i] += discount * r.reward;
            if r.timeout {
                envs[i].inject(&r.next_observation)?;
                still.push(i);
            } else if !r.done {
                still.push(i);
            }
        }
        active = still;
        discount *= gamma;
    }
    Ok(returns)
}

/// Mean critic estimate `Q(s, pi(s))` against the Monte-Carlo value of `pi`
/// over `n_states` states drawn from the replay buffer.
#[allow(clippy::too_many_arguments)]
pub fn bias_probe(
    critic: &ParamVector,
    actor: &ParamVector,
    buffer: &ReplayBuffer,
    n_states: usize,
    env: &dyn Environment,
    gamma: f64,
    horizon: usize,
    timestep: u64,
    rng: &mut RngStream,
) -> Result<BiasSample> {
    if buffer.len() < n_states || n_states == 0 {
        return Err(Error::InsufficientData {
            need: n_states.max(1),
            have: buffer.len(),
        });
    }
    let states: Vec<Vec<f64>> = (0..n_states)
        .map(|_| buffer.get(rng.index(buffer.len())).map(|t| t.state.clone()))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Invariant("replay index out of range".into()))?;
    let sd = env.spec().state_dim;
    let flat: Vec<f64> = states.iter().flatten().copied().collect();
    let actions = actor.forward_batch(&flat, n_states)?;
    let x = critic_inputs(&flat, sd, &actions, env.spec().action_dim);
    let estimates = critic.forward_batch(&x, n_states)?;
    let truth = mc_true_values(actor, env, &states, gamma, horizon)?;
    let n = n_states as f64;
    Ok(BiasSample::new(
        timestep,
        estimates.iter().sum::<f64>() / n,
        truth.iter().sum::<f64>() / n,
    ))
}

/// Default perturbation size `0.05 |phi| / sqrt(dim)`.
pub fn default_alpha(phi: &[f64]) -> f64 {
    let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
    0.05 * norm / (phi.len() as f64).sqrt()
}

/// `L(phi + alpha d) - L(phi)` and `L(phi - alpha d) - L(phi)` for random unit
/// directions `d`.
pub fn landscape_scatter(
    phi: &[f64],
    loss: &dyn Fn(&[f64]) -> Result<f64>,
    alpha: f64,
    n_directions: usize,
    rng: &mut RngStream,
) -> Result<Vec<PerturbationRecord>> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    let base = loss(phi)?;
    let mut out = Vec::with_capacity(2 * n_directions);
    let mut point = vec![0.0; phi.len()];
    for k in 0..n_directions {
        let d = sample_unit_direction(phi.len(), rng);
        for sign in [1i8, -1] {
            let s = f64::from(sign) * alpha;
            for ((p, x), di) in point.iter_mut().zip(phi).zip(&d) {
                *p = x + s * di;
            }
            out.push(PerturbationRecord {
                direction: k,
                sign,
                alpha,
                loss_delta: loss(&point)? - base,
            });
        }
    }
    Ok(out)
}

/// Losses along `alpha phi0 + (1 - alpha) phi1` at `n_points` evenly spaced
/// `alpha` in `[0, 1]`.
pub fn interpolate_losses(
    phi0: &[f64],
    phi1: &[f64],
    losses: &[&dyn Fn(&[f64]) -> Result<f64>],
    n_points: usize,
) -> Result<Vec<InterpolationPoint>> {
    check_len("interpolation endpoints", phi0.len(), phi1.len())?;
    if n_points < 2 {
        return Err(Error::InvalidArgument("need at least two interpolation points".into()));
    }
    let mut point = vec![0.0; phi0.len()];
    (0..n_points)
        .map(|i| {
            let alpha = i as f64 / (n_points - 1) as f64;
            for ((p, a), b) in point.iter_mut().zip(phi0).zip(phi1) {
                *p = alpha * a + (1.0 - alpha) * b;
            }
            let values = losses.iter().map(|l| l(&point)).collect::<Result<Vec<_>>>()?;
            Ok(InterpolationPoint { alpha, losses: values })
        })
        .collect()
}

/// Actor loss `-(1/N) sum Q(s, pi(s; phi))` over frozen probe states, as a
/// function of the flat actor parameters.
pub fn actor_loss_closure(
    critic: ParamVector,
    actor_spec: MlpSpec,
    probe_states: Vec<f64>,
) -> impl Fn(&[f64]) -> Result<f64> {
    let n = probe_states.len() / actor_spec.input_dim();
    move |phi: &[f64]| {
        let actor = ParamVector::from_values(actor_spec.clone(), phi.to_vec())?;
        Ok(actor_loss_and_grad(&actor, &critic, &probe_states, n)?.0)
    }
}

/// Mean and population standard deviation of undiscounted episode returns
/// under a noise-free policy.
pub fn evaluate_policy(
    policy: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    env: &mut dyn Environment,
    n_episodes: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("need at least one evaluation episode".into()));
    }
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut obs = env.reset(rng).observation;
        let mut total = 0.0;
        loop {
            let a = policy(&obs)?;
            let r = env.step(&a);
            total += r.reward;
            obs = r.next_observation;
            if r.done {
                break;
            }
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
