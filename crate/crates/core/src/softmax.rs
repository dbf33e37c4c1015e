//! The Boltzmann softmax operator over a continuous action set.
//!
//! Two evaluation routes are provided:
//!
//! * exact Riemann sums over an [`ActionGrid`] whose cells carry their measure,
//!   so that `total_measure` plays the role of the volume of the action set;
//! * the self-normalized importance-sampling estimator over a finite set of
//!   sampled target actions ([`ActionSampleSet`]).
//!
//! All exponentials are max-shifted; `beta * range(q)` may be arbitrarily large.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::numeric::gaussian_log_pdf;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    points: Vec<Vec<f64>>,
    cell_measures: Vec<f64>,
    total_measure: f64,
}

impl ActionGrid {
    pub fn new(points: Vec<Vec<f64>>, cell_measures: Vec<f64>) -> Result<Self> {
        check_len("grid cell measures", points.len(), cell_measures.len())?;
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty action grid".into()));
        }
        if cell_measures.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "cell measures must be positive and finite".into(),
            ));
        }
        let total_measure = cell_measures.iter().sum();
        Ok(Self {
            points,
            cell_measures,
            total_measure,
        })
    }

    /// `cells` evenly spaced points from `low` to `high` inclusive, each carrying
    /// measure `(high - low) / cells`, so the grid's total measure equals the
    /// interval length.
    pub fn linspace(low: f64, high: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(low < high) {
            return Err(Error::InvalidArgument(format!(
                "bad grid [{low}, {high}] with {cells} cells"
            )));
        }
        let points = (0..cells)
            .map(|i| {
                if cells == 1 {
                    vec![0.5 * (low + high)]
                } else {
                    vec![low + (high - low) * i as f64 / (cells - 1) as f64]
                }
            })
            .collect();
        let w = (high - low) / cells as f64;
        Self::new(points, vec![w; cells])
    }

    /// Grid with unit measure per point (counting measure).
    pub fn counting(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn cell_measures(&self) -> &[f64] {
        &self.cell_measures
    }

    pub fn total_measure(&self) -> f64 {
        self.total_measure
    }
}

fn max_of(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Softmax of `q` under positive weights given in log space.
///
/// Computes `sum_i exp(beta q_i + lw_i) q_i / sum_i exp(beta q_i + lw_i)` with
/// the largest exponent shifted to zero. The result is clamped to
/// `[min q, max q]`, which it can only leave through rounding.
pub fn softmax_log_weighted(q: &[f64], log_weights: &[f64], beta: f64) -> f64 {
    debug_assert_eq!(q.len(), log_weights.len());
    let shift = q
        .iter()
        .zip(log_weights)
        .map(|(&v, &lw)| beta * v + lw)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&v, &lw) in q.iter().zip(log_weights) {
        let e = (beta * v + lw - shift).exp();
        num += e * v;
        den += e;
    }
    (num / den).clamp(min_of(q), max_of(q))
}

/// `(1/beta) ln sum_i exp(beta q_i + lw_i)`, max-shifted.
pub fn lse_log_weighted(q: &[f64], log_weights: &[f64], beta: f64) -> f64 {
    let shift = q
        .iter()
        .zip(log_weights)
        .map(|(&v, &lw)| beta * v + lw)
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = q
        .iter()
        .zip(log_weights)
        .map(|(&v, &lw)| (beta * v + lw - shift).exp())
        .sum();
    (shift + s.ln()) / beta
}

fn grid_log_measures(q: &[f64], grid: &ActionGrid) -> Result<Vec<f64>> {
    check_len("q values on grid", grid.len(), q.len())?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("q values".into()));
    }
    Ok(grid.cell_measures.iter().map(|w| w.ln()).collect())
}

/// Riemann-sum softmax `sum w e^{beta q} q / sum w e^{beta q}`.
pub fn softmax_grid(q: &[f64], grid: &ActionGrid, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
    }
    let lw = grid_log_measures(q, grid)?;
    Ok(softmax_log_weighted(q, &lw, beta))
}

/// Riemann-sum log-sum-exp `(1/beta) ln sum w e^{beta q}`.
pub fn lse_grid(q: &[f64], grid: &ActionGrid, beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be finite and > 0, got {beta}")));
    }
    let lw = grid_log_measures(q, grid)?;
    Ok(lse_log_weighted(q, &lw, beta))
}

/// Measure of the epsilon-near-optimal cells `{i : q_i >= max q - epsilon}`.
pub fn near_optimal_measure(q: &[f64], measures: &[f64], epsilon: f64) -> f64 {
    let top = max_of(q);
    q.iter()
        .zip(measures)
        .filter(|(&v, _)| v >= top - epsilon)
        .map(|(_, &w)| w)
        .sum()
}

/// Gap between the max and softmax operators against its `O(1/beta)` bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// `max q - softmax_beta(q)`.
    pub gap: f64,
    /// `(W - 1 - ln F) / beta + epsilon`.
    pub bound: f64,
    pub epsilon: f64,
    /// Measure `F` of the epsilon-near-optimal cells.
    pub f_measure: f64,
    /// Total measure `W` of the grid.
    pub total_measure: f64,
}

impl BoundReport {
    pub fn slack(&self) -> f64 {
        self.bound - self.gap
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.gap >= -tol && self.gap <= self.bound + tol
    }
}

pub fn max_gap_bound(q: &[f64], grid: &ActionGrid, beta: f64, epsilon: f64) -> Result<BoundReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be > 0, got {beta}")));
    }
    let soft = softmax_grid(q, grid, beta)?;
    let f_measure = near_optimal_measure(q, &grid.cell_measures, epsilon);
    if !(f_measure > 0.0) {
        return Err(Error::Invariant("near-optimal set has zero measure".into()));
    }
    let w = grid.total_measure;
    Ok(BoundReport {
        gap: max_of(q) - soft,
        bound: (w - 1.0 - f_measure.ln()) / beta + epsilon,
        epsilon,
        f_measure,
        total_measure: w,
    })
}

/// Target actions sampled around a policy action, with their proposal
/// densities and (once filled in) Q-values.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSampleSet {
    pub center: Vec<f64>,
    /// Row-major `(K, action_dim)`.
    pub actions: Vec<f64>,
    pub q_values: Vec<f64>,
    /// Log of the Gaussian proposal density at each sampled noise.
    pub log_densities: Vec<f64>,
    pub beta: f64,
    pub sigma_bar: f64,
    pub clip_c: f64,
}

impl ActionSampleSet {
    pub fn len(&self) -> usize {
        self.log_densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_densities.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        self.center.len()
    }

    pub fn action(&self, j: usize) -> &[f64] {
        let d = self.action_dim();
        &self.actions[j * d..(j + 1) * d]
    }

    pub fn densities(&self) -> Vec<f64> {
        self.log_densities.iter().map(|l| l.exp()).collect()
    }

    pub fn with_q_values(mut self, q_values: Vec<f64>) -> Result<Self> {
        check_len("sampled q values", self.len(), q_values.len())?;
        self.q_values = q_values;
        Ok(self)
    }

    /// Importance weights in log space: `-ln p_j`.
    pub fn log_importance(&self) -> Vec<f64> {
        self.log_densities.iter().map(|l| -l).collect()
    }
}

/// Draws one clipped Gaussian perturbation of `center` and returns its log
/// density. The density is evaluated at the clipped noise actually applied.
pub(crate) fn perturb(
    center: &[f64],
    sigma_bar: f64,
    clip_c: f64,
    low: &[f64],
    high: &[f64],
    rng: &mut RngStream,
    out: &mut Vec<f64>,
    noise: &mut [f64],
) -> f64 {
    for (i, &c) in center.iter().enumerate() {
        let eps = rng.normal(sigma_bar).clamp(-clip_c, clip_c);
        noise[i] = eps;
        out.push((c + eps).clamp(low[i], high[i]));
    }
    gaussian_log_pdf(noise, sigma_bar)
}

/// Samples `k` actions `center + clip(eps, -c, c)`, `eps ~ N(0, sigma_bar)` per
/// coordinate, then clips each action to `[low, high]`.
pub fn sample_target_actions(
    center: &[f64],
    sigma_bar: f64,
    clip_c: f64,
    k: usize,
    low: &[f64],
    high: &[f64],
    rng: &mut RngStream,
) -> Result<ActionSampleSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if !(sigma_bar > 0.0) || !(clip_c > 0.0) {
        return Err(Error::InvalidArgument("sigma_bar and clip_c must be > 0".into()));
    }
    check_len("action lower bound", center.len(), low.len())?;
    check_len("action upper bound", center.len(), high.len())?;
    let d = center.len();
    let mut actions = Vec::with_capacity(k * d);
    let mut log_densities = Vec::with_capacity(k);
    let mut noise = vec![0.0; d];
    for _ in 0..k {
        log_densities.push(perturb(
            center,
            sigma_bar,
            clip_c,
            low,
            high,
            rng,
            &mut actions,
            &mut noise,
        ));
    }
    Ok(ActionSampleSet {
        center: center.to_vec(),
        actions,
        q_values: Vec::new(),
        log_densities,
        beta: 0.0,
        sigma_bar,
        clip_c,
    })
}

/// Self-normalized importance-sampling estimate of the softmax value,
/// `sum (e^{beta q_j}/p_j) q_j / sum e^{beta q_j}/p_j`.
pub fn softmax_is_estimate(samples: &ActionSampleSet) -> Result<f64> {
    check_len("sampled q values", samples.len(), samples.q_values.len())?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    if samples.q_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sampled q values".into()));
    }
    Ok(softmax_log_weighted(
        &samples.q_values,
        &samples.log_importance(),
        samples.beta,
    ))
}

/// How the importance weights enter the log-sum-exp estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LseNormalization {
    /// `(1/beta) ln (1/K) sum e^{beta q_j}/p_j`: estimates the integral of
    /// `e^{beta Q}` over the sampled region, so it carries the region's volume.
    Measure,
    /// `(1/beta) ln sum w_j e^{beta q_j}` with `w_j` the importance weights
    /// normalized to one.
    Normalized,
}

pub fn lse_is_estimate(samples: &ActionSampleSet, normalization: LseNormalization) -> Result<f64> {
    check_len("sampled q values", samples.len(), samples.q_values.len())?;
    if !(samples.beta > 0.0) {
        return Err(Error::InvalidArgument("log-sum-exp needs beta > 0".into()));
    }
    let mut lw = samples.log_importance();
    let offset = match normalization {
        LseNormalization::Measure => (samples.len() as f64).ln(),
        LseNormalization::Normalized => {
            let zero = vec![0.0; lw.len()];
            lse_log_weighted(&zero, &lw, 1.0)
        }
    };
    for l in &mut lw {
        *l -= offset;
    }
    Ok(lse_log_weighted(&samples.q_values, &lw, samples.beta))
}
