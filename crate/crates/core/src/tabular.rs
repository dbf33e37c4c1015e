//! Discretized MDPs for checking softmax value iteration against its error
//! bound.
//!
//! The action set is an [`ActionGrid`], so every operator here sees the same
//! cell measures the continuous bound is stated in.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::env::movecar;
use crate::error::{check_len, Error, Result};
use crate::rng::RngStream;
use crate::softmax::{near_optimal_measure, softmax_grid, ActionGrid};

#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    action_grid: ActionGrid,
    /// Dense `(state, action, next_state)` probabilities.
    transition: Vec<f64>,
    /// `(state, action)` rewards.
    reward: Vec<f64>,
    gamma: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        action_grid: ActionGrid,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let n_actions = action_grid.len();
        if n_states == 0 {
            return Err(Error::InvalidArgument("MDP needs at least one state".into()));
        }
        check_len("transition table", n_states * n_actions * n_states, transition.len())?;
        check_len("reward table", n_states * n_actions, reward.len())?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("rewards".into()));
        }
        for (row_idx, row) in transition.chunks_exact(n_states).enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "transition row {row_idx} is not a distribution (sum {total})"
                )));
            }
        }
        Ok(Self {
            n_states,
            action_grid,
            transition,
            reward,
            gamma,
        })
    }

    /// MoveCar on a uniform grid of positions over `[0, 10]` and actions over
    /// `[-1, 1]`. Next positions are rounded to the nearest grid state; with the
    /// default 101 x 21 grid the rounding is exact.
    pub fn movecar(n_states: usize, n_actions: usize, gamma: f64) -> Result<Self> {
        if n_states < 2 || n_actions < 2 {
            return Err(Error::InvalidArgument("MoveCar grid needs >= 2 states and actions".into()));
        }
        let grid = ActionGrid::linspace(movecar::ACTION_LOW, movecar::ACTION_HIGH, n_actions)?;
        let ds = (movecar::POS_HIGH - movecar::POS_LOW) / (n_states - 1) as f64;
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        let mut reward = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            let x = movecar::POS_LOW + ds * s as f64;
            for (a, point) in grid.points().iter().enumerate() {
                let target = movecar::next_position(x, point[0]);
                let next = (((target - movecar::POS_LOW) / ds).round() as usize).min(n_states - 1);
                let x_next = movecar::POS_LOW + ds * next as f64;
                transition[(s * n_actions + a) * n_states + next] = 1.0;
                reward[s * n_actions + a] = movecar::reward_at(x_next);
            }
        }
        Self::new(n_states, grid, transition, reward, gamma)
    }

    /// Random MDP with dense random transitions, rewards in `[-1, 1]`, and an
    /// action interval of length `action_range`.
    pub fn random(
        rng: &mut RngStream,
        n_states: usize,
        n_actions: usize,
        action_range: f64,
        gamma: f64,
    ) -> Result<Self> {
        let grid = ActionGrid::linspace(0.0, action_range, n_actions)?;
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            // sparse-ish rows: most mass on a few successors
            let row: Vec<f64> = (0..n_states)
                .map(|_| {
                    let u = rng.uniform();
                    u * u * u * u
                })
                .collect();
            let total: f64 = row.iter().sum();
            transition.extend(row.into_iter().map(|p| p / total));
        }
        // correct the last entry of each row so rows sum to one within rounding
        for row in transition.chunks_exact_mut(n_states) {
            let head: f64 = row[..n_states - 1].iter().sum();
            row[n_states - 1] = (1.0 - head).max(0.0);
        }
        let reward = (0..n_states * n_actions)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect();
        Self::new(n_states, grid, transition, reward, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.action_grid.len()
    }

    pub fn action_grid(&self) -> &ActionGrid {
        &self.action_grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions() + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions() + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// `Q(s, a) = r(s, a) + gamma * sum_s' p(s'|s, a) V(s')`, row-major by state.
    pub fn q_from_values(&self, values: &[f64]) -> Vec<f64> {
        let na = self.n_actions();
        let mut q = Vec::with_capacity(self.n_states * na);
        for s in 0..self.n_states {
            for a in 0..na {
                let ev: f64 = self
                    .transition_row(s, a)
                    .iter()
                    .zip(values)
                    .map(|(p, v)| p * v)
                    .sum();
                q.push(self.reward(s, a) + self.gamma * ev);
            }
        }
        q
    }
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Optimal values by max-operator value iteration, stopping once the sup-norm
/// change drops below `tolerance * (1 - gamma) / gamma`.
pub fn max_value_iteration(mdp: &TabularMdp, tolerance: f64) -> Vec<f64> {
    let na = mdp.n_actions();
    let threshold = if mdp.gamma > 0.0 {
        tolerance * (1.0 - mdp.gamma) / mdp.gamma
    } else {
        f64::INFINITY
    };
    let mut v = vec![0.0; mdp.n_states];
    loop {
        let q = mdp.q_from_values(&v);
        let next: Vec<f64> = q
            .chunks_exact(na)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let change = sup_distance(&next, &v);
        v = next;
        if change < threshold {
            return v;
        }
    }
}

/// Greedy action per state (lowest index on ties).
pub fn greedy_policy(mdp: &TabularMdp, values: &[f64]) -> Vec<usize> {
    let na = mdp.n_actions();
    mdp.q_from_values(values)
        .chunks_exact(na)
        .map(|row| {
            let mut best = 0;
            for (a, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Exact values of a stochastic policy by solving `(I - gamma P_pi) v = r_pi`.
///
/// `policy` is row-major `(state, action)` probabilities.
pub fn evaluate_policy_exact(mdp: &TabularMdp, policy: &[f64]) -> Result<Vec<f64>> {
    let (ns, na) = (mdp.n_states, mdp.n_actions());
    check_len("policy table", ns * na, policy.len())?;
    let mut m = DMatrix::<f64>::identity(ns, ns);
    let mut r = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let pa = policy[s * na + a];
            if pa == 0.0 {
                continue;
            }
            r[s] += pa * mdp.reward(s, a);
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                m[(s, s2)] -= mdp.gamma * pa * p;
            }
        }
    }
    m.lu()
        .solve(&r)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Invariant("policy evaluation system is singular".into()))
}

/// Deterministic policy as a one-hot probability table.
pub fn one_hot_policy(mdp: &TabularMdp, actions: &[usize]) -> Vec<f64> {
    let na = mdp.n_actions();
    let mut p = vec![0.0; mdp.n_states * na];
    for (s, &a) in actions.iter().enumerate() {
        p[s * na + a] = 1.0;
    }
    p
}

/// Policy choosing each action cell with probability proportional to its measure.
pub fn measure_policy(mdp: &TabularMdp) -> Vec<f64> {
    let grid = mdp.action_grid();
    let row: Vec<f64> = grid
        .cell_measures()
        .iter()
        .map(|w| w / grid.total_measure())
        .collect();
    (0..mdp.n_states).flat_map(|_| row.iter().copied()).collect()
}

/// Iterates of softmax value iteration.
#[derive(Debug, Clone)]
pub struct ViTrace {
    /// `V_0 .. V_T`.
    pub values_per_iteration: Vec<Vec<f64>>,
    /// `Q_1 .. Q_T`, row-major `(state, action)`.
    pub q_per_iteration: Vec<Vec<f64>>,
}

impl ViTrace {
    pub fn final_values(&self) -> &[f64] {
        self.values_per_iteration.last().unwrap()
    }
}

pub fn softmax_value_iteration(
    mdp: &TabularMdp,
    beta: f64,
    iterations: usize,
    v0: &[f64],
) -> Result<ViTrace> {
    check_len("initial values", mdp.n_states, v0.len())?;
    let na = mdp.n_actions();
    let mut values = vec![v0.to_vec()];
    let mut qs = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let q = mdp.q_from_values(values.last().unwrap());
        let v = q
            .chunks_exact(na)
            .map(|row| softmax_grid(row, &mdp.action_grid, beta))
            .collect::<Result<Vec<_>>>()?;
        qs.push(q);
        values.push(v);
    }
    Ok(ViTrace {
        values_per_iteration: values,
        q_per_iteration: qs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPoint {
    pub iteration: usize,
    /// `||V_t - V*||_inf`.
    pub lhs: f64,
    /// The value-iteration error bound at `t`.
    pub rhs: f64,
}

impl BoundPoint {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

/// Evaluates the softmax value-iteration error bound at every iterate:
///
/// `gamma^t ||V_0 - V*|| + (beta eps + W - 1) / (beta (1 - gamma))
///   - sum_{k=1..t} gamma^{t-k} min_s ln F(Q_k, s, eps) / beta`.
pub fn vi_error_bound(
    mdp: &TabularMdp,
    trace: &ViTrace,
    v_star: &[f64],
    beta: f64,
    epsilon: f64,
) -> Result<Vec<BoundPoint>> {
    if trace.values_per_iteration.is_empty() {
        return Err(Error::InvalidArgument("empty value-iteration trace".into()));
    }
    if trace.q_per_iteration.len() + 1 != trace.values_per_iteration.len() {
        return Err(Error::InvalidArgument("trace is missing Q tables".into()));
    }
    if !(epsilon > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidArgument("beta and epsilon must be > 0".into()));
    }
    check_len("optimal values", mdp.n_states, v_star.len())?;
    let gamma = mdp.gamma;
    let w = mdp.action_grid.total_measure();
    let na = mdp.n_actions();
    let v0_err = sup_distance(&trace.values_per_iteration[0], v_star);
    let constant = (beta * epsilon + w - 1.0) / (beta * (1.0 - gamma));
    let mut log_f_sum = 0.0;
    let mut out = Vec::with_capacity(trace.values_per_iteration.len());
    for (t, v) in trace.values_per_iteration.iter().enumerate() {
        if t > 0 {
            let q = &trace.q_per_iteration[t - 1];
            let min_log_f = q
                .chunks_exact(na)
                .map(|row| near_optimal_measure(row, mdp.action_grid.cell_measures(), epsilon).ln())
                .fold(f64::INFINITY, f64::min);
            log_f_sum = gamma * log_f_sum + min_log_f / beta;
        }
        out.push(BoundPoint {
            iteration: t,
            lhs: sup_distance(v, v_star),
            rhs: gamma.powi(t as i32) * v0_err + constant - log_f_sum,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_chain(r: f64, gamma: f64) -> TabularMdp {
        let grid = ActionGrid::linspace(-1.0, 1.0, 2).unwrap();
        // every action moves to the other state and pays r
        let transition = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        TabularMdp::new(2, grid, transition, vec![r; 4], gamma).unwrap()
    }

    #[test]
    fn myopic_values_are_max_reward() {
        let mut rng = RngStream::new(1);
        let mdp = TabularMdp::random(&mut rng, 6, 5, 2.0, 0.0).unwrap();
        let v = max_value_iteration(&mdp, 1e-10);
        for (s, &vs) in v.iter().enumerate() {
            let best = (0..5).map(|a| mdp.reward(s, a)).fold(f64::MIN, f64::max);
            assert_eq!(vs, best);
        }
    }

    #[test]
    fn constant_reward_fixed_point() {
        let mdp = two_state_chain(1.5, 0.9);
        let v = max_value_iteration(&mdp, 1e-12);
        for vs in v {
            assert!((vs - 15.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_reward_softmax_is_beta_free() {
        let mdp = two_state_chain(0.7, 0.8);
        let a = softmax_value_iteration(&mdp, 0.0, 30, &[0.0, 0.0]).unwrap();
        let b = softmax_value_iteration(&mdp, 123.0, 30, &[0.0, 0.0]).unwrap();
        for (x, y) in a.values_per_iteration.iter().zip(&b.values_per_iteration) {
            for (p, q) in x.iter().zip(y) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_rows_and_gamma() {
        let grid = ActionGrid::linspace(0.0, 1.0, 1).unwrap();
        assert!(TabularMdp::new(1, grid.clone(), vec![0.5], vec![0.0], 0.5).is_err());
        assert!(TabularMdp::new(1, grid, vec![1.0], vec![0.0], 1.0).is_err());
    }

    #[test]
    fn movecar_grid_matches_dynamics() {
        let mdp = TabularMdp::movecar(101, 21, 0.99).unwrap();
        assert_eq!(mdp.n_actions(), 21);
        assert!((mdp.action_grid().total_measure() - 2.0).abs() < 1e-12);
        // from x = 2.0 (index 20), action -1 (index 0) lands on x = 1.0
        let row = mdp.transition_row(20, 0);
        assert_eq!(row[10], 1.0);
        assert_eq!(mdp.reward(20, 0), 2.0);
        // from 9.4, +1 clips at 10
        assert_eq!(mdp.transition_row(94, 20)[100], 1.0);
        assert_eq!(mdp.reward(94, 20), 0.0);
    }

    #[test]
    fn trace_shapes_and_missing_tables() {
        let mdp = two_state_chain(1.0, 0.5);
        let mut tr = softmax_value_iteration(&mdp, 1.0, 3, &[0.0, 0.0]).unwrap();
        assert_eq!(tr.values_per_iteration.len(), 4);
        assert_eq!(tr.q_per_iteration.len(), 3);
        tr.q_per_iteration.pop();
        assert!(vi_error_bound(&mdp, &tr, &[2.0, 2.0], 1.0, 0.1).is_err());
    }
}
