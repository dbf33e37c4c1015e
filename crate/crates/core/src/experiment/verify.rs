//! Invariant sweeps with machine-readable reports.
//!
//! Each check tracks the worst slack seen, where a negative slack beyond the
//! tolerance is a violation; the first violating instance is kept for replay.

use serde::Serialize;
use serde_json::{json, Value};

use crate::agents::replay::{Batch, Transition};
use crate::agents::targets::{
    clipped_softmax_td3_target, draw_sample_sets, policy_actions, sampled_q, sd2_target, sd3_target,
    softmax_over, SampleSpec,
};
use crate::error::{Error, Result};
use crate::numeric::{gaussian_log_pdf, MlpSpec, OutputActivation, ParamVector};
use crate::rng::RngStream;
use crate::softmax::{lse_grid, max_gap_bound, softmax_grid, ActionGrid, ActionSampleSet};
use crate::tabular::{
    evaluate_policy_exact, greedy_policy, max_value_iteration, one_hot_policy, softmax_value_iteration,
    sup_distance, vi_error_bound, TabularMdp,
};

pub const SUITES: [&str; 4] = ["operator", "vi", "targets", "gradients"];

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub parameters: String,
    pub instances: u64,
    pub tolerance: f64,
    pub worst_slack: f64,
    pub passed: bool,
    pub violation: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

struct Check {
    report: CheckReport,
}

impl Check {
    fn new(name: &str, parameters: impl Into<String>, tolerance: f64) -> Self {
        Self {
            report: CheckReport {
                name: name.to_string(),
                parameters: parameters.into(),
                instances: 0,
                tolerance,
                worst_slack: f64::INFINITY,
                passed: true,
                violation: None,
            },
        }
    }

    fn record(&mut self, slack: f64, instance: impl FnOnce() -> Value) {
        let r = &mut self.report;
        r.instances += 1;
        if slack < r.worst_slack || slack.is_nan() {
            r.worst_slack = slack;
        }
        if !(slack >= -r.tolerance) && r.violation.is_none() {
            r.passed = false;
            r.violation = Some(instance());
        }
    }

    fn finish(self) -> CheckReport {
        self.report
    }
}

fn suite(name: &str, seed: u64, checks: Vec<CheckReport>) -> SuiteReport {
    SuiteReport {
        suite: name.to_string(),
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

pub fn verify(name: &str, seed: u64) -> Result<Vec<SuiteReport>> {
    match name {
        "operator" => Ok(vec![operator_suite(seed)?]),
        "vi" => Ok(vec![vi_suite(seed)?]),
        "targets" => Ok(vec![targets_suite(seed)?]),
        "gradients" => Ok(vec![gradients_suite(seed)?]),
        "all" => SUITES.iter().map(|s| verify(s, seed).map(|mut v| v.remove(0))).collect(),
        other => Err(Error::Config(format!(
            "unknown suite `{other}` (expected one of {}, all)",
            SUITES.join(", ")
        ))),
    }
}

/// Random Q-values on a random grid; counting or Lebesgue cell measures.
pub fn random_q_grid(rng: &mut RngStream, counting: bool) -> Result<(ActionGrid, Vec<f64>)> {
    let n = 2 + rng.index(63);
    let grid = if counting {
        ActionGrid::counting((0..n).map(|i| vec![i as f64]).collect())?
    } else {
        let low = rng.uniform_range(-2.0, 2.0);
        ActionGrid::linspace(low, low + rng.uniform_range(0.1, 5.0), n)?
    };
    let scale = 10f64.powf(rng.uniform_range(-1.0, 1.0));
    let coarse = rng.uniform() < 0.2;
    let q = (0..n)
        .map(|_| {
            let v = scale * rng.uniform_range(-1.0, 1.0);
            if coarse {
                (v * 2.0 / scale).round() * scale / 2.0
            } else {
                v
            }
        })
        .collect();
    Ok((grid, q))
}

pub const OPERATOR_BETAS: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const OPERATOR_EPSILONS: [f64; 3] = [0.01, 0.1, 1.0];
pub const BETA_LADDER: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];

fn operator_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = RngStream::new(seed);
    let mut gap = Check::new("max_gap_bound", "1000 grids x beta {0.1,1,10,100} x eps {0.01,0.1,1}", 1e-9);
    let mut mono = Check::new("beta_monotone", "1000 grids, pairwise on beta {0,0.01,0.1,1,10,100}", 1e-10);
    let mut lse = Check::new("lse_above_softmax", "500 counting-measure grids x beta {0.1,1,10,100}", 1e-9);
    let mut constant = Check::new("constant_q_zero_gap", "200 constant grids x beta x eps", 0.0);
    for i in 0..1000 {
        let counting = i % 2 == 0;
        let (grid, q) = random_q_grid(&mut rng, counting)?;
        let dump = || json!({ "q": q, "cell_measures": grid.cell_measures() });
        for beta in OPERATOR_BETAS {
            for eps in OPERATOR_EPSILONS {
                let r = max_gap_bound(&q, &grid, beta, eps)?;
                gap.record(r.gap.min(r.slack()), || json!({ "beta": beta, "epsilon": eps, "grid": dump() }));
            }
            if counting {
                let d = lse_grid(&q, &grid, beta)? - softmax_grid(&q, &grid, beta)?;
                lse.record(d, || json!({ "beta": beta, "grid": dump() }));
            }
        }
        let values = BETA_LADDER
            .iter()
            .map(|&b| softmax_grid(&q, &grid, b))
            .collect::<Result<Vec<_>>>()?;
        for a in 0..values.len() {
            for b in a + 1..values.len() {
                mono.record(values[b] - values[a], || {
                    json!({ "beta_low": BETA_LADDER[a], "beta_high": BETA_LADDER[b], "grid": dump() })
                });
            }
        }
    }
    for _ in 0..200 {
        let counting = rng.coin();
        let (grid, q) = random_q_grid(&mut rng, counting)?;
        let q = vec![q[0]; q.len()];
        for beta in OPERATOR_BETAS {
            for eps in OPERATOR_EPSILONS {
                let r = max_gap_bound(&q, &grid, beta, eps)?;
                constant.record(-r.gap.abs(), || json!({ "q": q[0], "beta": beta, "gap": r.gap }));
            }
        }
    }
    Ok(suite(
        "operator",
        seed,
        vec![gap.finish(), mono.finish(), lse.finish(), constant.finish()],
    ))
}

pub const VI_BETAS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// The tabular instances swept by the value-iteration suite: 20 random MDPs
/// followed by discretized MoveCar, with their iteration counts.
pub fn vi_instances(seed: u64) -> Result<Vec<(String, TabularMdp, usize)>> {
    let mut rng = RngStream::new(seed);
    let mut out = Vec::new();
    for k in 0..20 {
        let ns = 5 + rng.index(46);
        let na = 4 + rng.index(29);
        let range = rng.uniform_range(1.0, 3.0);
        out.push((format!("random-{k}"), TabularMdp::random(&mut rng, ns, na, range, 0.9)?, 300));
    }
    out.push(("movecar".to_string(), TabularMdp::movecar(101, 21, 0.99)?, 2500));
    Ok(out)
}

fn vi_suite(seed: u64) -> Result<SuiteReport> {
    let mut bound = Check::new("vi_error_bound", "20 random MDPs + MoveCar, beta {1,10,100,1000}, eps {0.01,0.1,1}, every iterate", 1e-9);
    let mut oracle = Check::new("v_star_oracles_agree", "value iteration vs exact greedy-policy evaluation", 1e-8);
    let mut mono = Check::new("final_error_non_increasing_in_beta", "beta {1,10,100,1000}", 1e-9);
    for (name, mdp, iterations) in vi_instances(seed)? {
        let v_star = max_value_iteration(&mdp, 1e-12);
        let exact = evaluate_policy_exact(&mdp, &one_hot_policy(&mdp, &greedy_policy(&mdp, &v_star)))?;
        oracle.record(-sup_distance(&v_star, &exact), || json!({ "mdp": name }));
        let v0 = vec![0.0; mdp.n_states()];
        let mut finals = Vec::new();
        for beta in VI_BETAS {
            let trace = softmax_value_iteration(&mdp, beta, iterations, &v0)?;
            for eps in [0.01, 0.1, 1.0] {
                for p in vi_error_bound(&mdp, &trace, &v_star, beta, eps)? {
                    bound.record(p.rhs - p.lhs, || {
                        json!({ "mdp": name, "beta": beta, "epsilon": eps, "iteration": p.iteration, "lhs": p.lhs, "rhs": p.rhs })
                    });
                }
            }
            finals.push(sup_distance(trace.final_values(), &v_star));
        }
        for w in 0..finals.len() - 1 {
            mono.record(finals[w] - finals[w + 1], || {
                json!({ "mdp": name, "betas": VI_BETAS, "final_errors": finals })
            });
        }
    }
    Ok(suite("vi", seed, vec![bound.finish(), oracle.finish(), mono.finish()]))
}

/// A random frozen-network target instance.
pub struct TargetInstance {
    pub batch: Batch,
    pub critics: [ParamVector; 2],
    pub actor: ParamVector,
    /// Sample sets whose first action is the policy action itself.
    pub sets: Vec<ActionSampleSet>,
    pub gamma: f64,
}

pub fn random_target_instance(rng: &mut RngStream) -> Result<TargetInstance> {
    let sd = 1 + rng.index(3);
    let ad = 1 + rng.index(2);
    let n = 1 + rng.index(6);
    let k = 1 + rng.index(32);
    let width = 4 + rng.index(13);
    let low = vec![-1.0; ad];
    let high = vec![1.0; ad];
    let critic_spec = MlpSpec::critic(sd + ad, &[width, width])?;
    let critics = [
        ParamVector::init(critic_spec.clone(), rng),
        ParamVector::init(critic_spec, rng),
    ];
    let actor = ParamVector::init(MlpSpec::actor(sd, &[width], &low, &high)?, rng);
    let rows: Vec<Transition> = (0..n)
        .map(|_| Transition {
            state: (0..sd).map(|_| rng.uniform_range(-2.0, 2.0)).collect(),
            action: (0..ad).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            reward: rng.uniform_range(-1.0, 1.0),
            next_state: (0..sd).map(|_| rng.uniform_range(-2.0, 2.0)).collect(),
            done: if rng.uniform() < 0.2 { 1.0 } else { 0.0 },
        })
        .collect();
    let batch = Batch::from_transitions(&rows.iter().collect::<Vec<_>>())?;
    let sigma_bar = rng.uniform_range(0.05, 0.5);
    let spec = SampleSpec { k, sigma_bar, clip_c: 0.5, low: &low, high: &high };
    let centers = policy_actions(&actor, &batch.next_states, n)?;
    let mut sets = draw_sample_sets(&centers, ad, &spec, rng)?;
    let zero = vec![0.0; ad];
    for (set, c) in sets.iter_mut().zip(centers.chunks_exact(ad)) {
        let mut actions = c.to_vec();
        actions.extend_from_slice(&set.actions);
        set.actions = actions;
        set.log_densities.insert(0, gaussian_log_pdf(&zero, sigma_bar));
    }
    Ok(TargetInstance {
        batch,
        critics,
        actor,
        sets,
        gamma: rng.uniform_range(0.5, 0.999),
    })
}

fn targets_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = RngStream::new(seed);
    let tol = 1e-10;
    let mut below_max = Check::new("sd2_estimate_below_sample_max", "10^4 instances, beta log-uniform in [1e-2, 1e2]", tol);
    let mut mono = Check::new("sd3_non_decreasing_in_beta", "10^4 instances, beta {0,0.01,0.1,1,10,100}", tol);
    let mut mean0 = Check::new("sd3_beta0_is_weighted_mean", "10^4 instances", tol);
    let mut clipped = Check::new(
        "clipped_softmax_below_policy_min",
        "10^4 instances; bound min(Q_i(pi), max_j Q_-i) which equals min_i Q_i(pi) when pi attains the sampled max",
        tol,
    );
    for _ in 0..10_000 {
        let inst = random_target_instance(&mut rng)?;
        let b = &inst.batch;
        let [c1, c2] = &inst.critics;
        let beta = 10f64.powf(rng.uniform_range(-2.0, 2.0));
        let q1 = sampled_q(c1, &b.next_states, b.state_dim, &inst.sets)?;
        let q2 = sampled_q(c2, &b.next_states, b.state_dim, &inst.sets)?;
        for (set, q) in inst.sets.iter().zip(&q1) {
            let est = softmax_over(set, q, beta)?;
            let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            below_max.record(max - est, || json!({ "q": q, "log_densities": set.log_densities, "beta": beta }));
        }
        let ys = BETA_LADDER
            .iter()
            .map(|&bt| sd3_target(b, [c1, c2], &inst.sets, bt, inst.gamma))
            .collect::<Result<Vec<_>>>()?;
        for w in 0..ys.len() - 1 {
            for i in 0..b.len {
                mono.record(ys[w + 1][i] - ys[w][i], || json!({ "row": i, "beta_low": BETA_LADDER[w] }));
            }
        }
        for (i, set) in inst.sets.iter().enumerate() {
            let qhat: Vec<f64> = q1[i].iter().zip(&q2[i]).map(|(a, c)| a.min(*c)).collect();
            let inv: Vec<f64> = set.log_densities.iter().map(|l| (-l).exp()).collect();
            let wmean = qhat.iter().zip(&inv).map(|(q, w)| q * w).sum::<f64>() / inv.iter().sum::<f64>();
            let expected = b.rewards[i] + inst.gamma * (1.0 - b.done[i]) * wmean;
            let scale = 1.0f64.max(expected.abs());
            mean0.record(-(ys[0][i] - expected).abs() / scale, || json!({ "row": i, "got": ys[0][i], "expected": expected }));
        }
        let pi = policy_actions(&inst.actor, &b.next_states, b.len)?;
        for own in 0..2 {
            let other = 1 - own;
            let y = clipped_softmax_td3_target(b, &inst.critics[own], &inst.critics[other], &inst.actor, &inst.sets, beta, inst.gamma)?;
            let q_other = if other == 0 { &q1 } else { &q2 };
            for i in 0..b.len {
                let x: Vec<f64> = b.next_state(i).iter().chain(&pi[i * b.action_dim..(i + 1) * b.action_dim]).copied().collect();
                let own_pi = inst.critics[own].forward(&x)?[0];
                let max_other = q_other[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let bound = b.rewards[i] + inst.gamma * (1.0 - b.done[i]) * own_pi.min(max_other);
                clipped.record(bound - y[i], || json!({ "row": i, "own": own, "y": y[i], "bound": bound }));
            }
        }
        let _ = sd2_target(b, c1, &inst.sets, beta, inst.gamma)?;
    }
    Ok(suite(
        "targets",
        seed,
        vec![below_max.finish(), mono.finish(), mean0.finish(), clipped.finish()],
    ))
}

/// A random network with an input point and output cotangent.
pub fn random_gradient_instance(rng: &mut RngStream) -> Result<(ParamVector, Vec<f64>, Vec<f64>)> {
    let input = 1 + rng.index(4);
    let depth = 1 + rng.index(3);
    let output = 1 + rng.index(3);
    let mut sizes = vec![input];
    for _ in 0..depth {
        sizes.push(2 + rng.index(15));
    }
    sizes.push(output);
    let activation = if rng.coin() {
        OutputActivation::Identity
    } else {
        let low: Vec<f64> = (0..output).map(|_| rng.uniform_range(-2.0, 0.0)).collect();
        let high = low.iter().map(|l| l + rng.uniform_range(0.5, 3.0)).collect();
        OutputActivation::ScaledTanh { low, high }
    };
    let mut net = ParamVector::init(MlpSpec::new(sizes, activation)?, rng);
    for b in net.values_mut() {
        if *b == 0.0 {
            *b = rng.uniform_range(-0.1, 0.1);
        }
    }
    let x = (0..input).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
    let u = (0..output).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    Ok((net, x, u))
}

/// Largest relative error between reverse-mode gradients and central
/// differences of `<f(x), u>`, over parameters and inputs.
pub fn gradient_max_rel_error(net: &ParamVector, x: &[f64], u: &[f64], h: f64) -> Result<f64> {
    let (gp, gx) = net.gradients(x, u)?;
    let dot = |n: &ParamVector, x: &[f64]| -> Result<f64> {
        Ok(n.forward(x)?.iter().zip(u).map(|(a, b)| a * b).sum())
    };
    let rel = |fd: f64, g: f64| (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    let mut p = net.values().to_vec();
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + h;
        let plus = dot(&net.with_values(p.clone())?, x)?;
        p[k] = orig - h;
        let minus = dot(&net.with_values(p.clone())?, x)?;
        p[k] = orig;
        worst = worst.max(rel((plus - minus) / (2.0 * h), gp[k]));
    }
    let mut xv = x.to_vec();
    for k in 0..xv.len() {
        let orig = xv[k];
        xv[k] = orig + h;
        let plus = dot(net, &xv)?;
        xv[k] = orig - h;
        let minus = dot(net, &xv)?;
        xv[k] = orig;
        worst = worst.max(rel((plus - minus) / (2.0 * h), gx[k]));
    }
    Ok(worst)
}

fn gradients_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = RngStream::new(seed);
    let mut check = Check::new("mlp_gradients_match_central_differences", "100 random networks, h = 1e-6, rel. err < 1e-4", 0.0);
    for _ in 0..100 {
        let (net, x, u) = random_gradient_instance(&mut rng)?;
        let err = gradient_max_rel_error(&net, &x, &u, 1e-6)?;
        check.record(1e-4 - err, || json!({ "layer_sizes": net.spec().layer_sizes(), "x": x, "u": u, "max_rel_error": err }));
    }
    Ok(suite("gradients", seed, vec![check.finish()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_an_error() {
        assert!(verify("nope", 0).is_err());
    }

    #[test]
    fn gradient_suite_passes() {
        let r = verify("gradients", 3).unwrap();
        assert!(r[0].passed, "{:?}", r[0].checks);
    }

    #[test]
    fn instance_sets_start_at_policy_action() {
        let mut rng = RngStream::new(1);
        let inst = random_target_instance(&mut rng).unwrap();
        let pi = policy_actions(&inst.actor, &inst.batch.next_states, inst.batch.len).unwrap();
        let ad = inst.batch.action_dim;
        for (i, s) in inst.sets.iter().enumerate() {
            assert_eq!(s.action(0), &pi[i * ad..(i + 1) * ad]);
            assert_eq!(s.len(), s.actions.len() / ad);
        }
    }
}
