use crate::agents::replay::Batch;
use crate::agents::state::{critic_inputs, Network};
use crate::error::{check_len, Error, Result};
use crate::numeric::ParamVector;

/// Mean squared Bellman error and its parameter gradient, with `y` held fixed.
pub fn critic_loss_and_grad(critic: &ParamVector, batch: &Batch, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("critic targets", batch.len, y.len())?;
    let x = critic_inputs(&batch.states, batch.state_dim, &batch.actions, batch.action_dim);
    let trace = critic.forward_trace(&x, batch.len)?;
    let n = batch.len as f64;
    let resid: Vec<f64> = trace.output().iter().zip(y).map(|(q, t)| q - t).collect();
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    let cot: Vec<f64> = resid.iter().map(|r| 2.0 * r / n).collect();
    let (grad, _) = critic.backward(&trace, &cot)?;
    Ok((loss, grad))
}

/// One Adam step on the Bellman loss. Returns the loss before the step.
pub fn critic_update(critic: &mut Network, batch: &Batch, y: &[f64]) -> Result<f64> {
    let (loss, grad) = critic_loss_and_grad(&critic.online, batch, y)?;
    critic.adam.step(critic.online.values_mut(), &grad)?;
    Ok(loss)
}

/// Actor loss `-(1/N) sum Q(s, pi(s))` and its gradient in the actor parameters.
pub fn actor_loss_and_grad(
    actor: &ParamVector,
    critic: &ParamVector,
    states: &[f64],
    n: usize,
) -> Result<(f64, Vec<f64>)> {
    let sd = actor.spec().input_dim();
    let ad = actor.spec().output_dim();
    let a_trace = actor.forward_trace(states, n)?;
    let x = critic_inputs(states, sd, a_trace.output(), ad);
    let c_trace = critic.forward_trace(&x, n)?;
    let loss = -c_trace.output().iter().sum::<f64>() / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("actor loss".into()));
    }
    let (_, dx) = critic.backward(&c_trace, &vec![-1.0 / n as f64; n])?;
    let da: Vec<f64> = dx
        .chunks_exact(sd + ad)
        .flat_map(|row| row[sd..].iter().copied())
        .collect();
    let (grad, _) = actor.backward(&a_trace, &da)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("actor gradient".into()));
    }
    Ok((loss, grad))
}

/// One deterministic policy-gradient step through a frozen critic.
/// Returns the actor loss before the step.
pub fn actor_update(actor: &mut Network, critic: &ParamVector, states: &[f64], n: usize) -> Result<f64> {
    let (loss, grad) = actor_loss_and_grad(&actor.online, critic, states, n)?;
    actor.adam.step(actor.online.values_mut(), &grad)?;
    Ok(loss)
}

/// `target <- tau online + (1 - tau) target`.
pub fn soft_update(target: &mut ParamVector, online: &ParamVector, tau: f64) -> Result<()> {
    if target.spec() != online.spec() {
        return Err(Error::DimensionMismatch {
            context: "soft update",
            expected: online.len(),
            got: target.len(),
        });
    }
    for (t, o) in target.values_mut().iter_mut().zip(online.values()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}
