use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::agents::checkpoint;
use crate::agents::{train, BiasSettings, EpisodeRecord, MetricsRow, TrainOutput, TrainSchedule};
use crate::diagnostics::{
    actor_loss_closure, default_alpha, interpolate_losses, landscape_scatter, PerturbationRecord,
};
use crate::env::make_env;
use crate::error::{Error, Result};
use crate::experiment::config::ExperimentConfig;
use crate::rng::RngStream;

pub const METRICS_HEADER: &str = "timestep,eval_mean_return,eval_std,estimate_mean,true_mean,bias";

const STREAM_LANDSCAPE: u64 = 101;
const LANDSCAPE_PROBES: usize = 256;

/// 17 significant digits: parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let (e, t, b) = match r.bias {
            Some(b) => (fmt_f64(b.estimate_mean), fmt_f64(b.true_mean), fmt_f64(b.bias)),
            None => Default::default(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{e},{t},{b}",
            r.timestep,
            fmt_f64(r.eval_mean_return),
            fmt_f64(r.eval_std)
        );
    }
    s
}

fn timing_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("timestep,wallclock_seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.3}", r.timestep, r.wallclock_seconds);
    }
    s
}

fn episodes_csv(rows: &[EpisodeRecord]) -> String {
    let mut s = String::from("episode,actor,steps,return\n");
    for e in rows {
        let _ = writeln!(s, "{},{},{},{}", e.index, e.actor, e.steps, fmt_f64(e.total_return));
    }
    s
}

pub fn landscape_csv(records: &[PerturbationRecord]) -> String {
    let mut s = String::from("direction,sign,alpha,loss_delta\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.direction, r.sign, fmt_f64(r.alpha), fmt_f64(r.loss_delta));
    }
    s
}

pub fn schedule_for(cfg: &ExperimentConfig) -> TrainSchedule {
    TrainSchedule {
        total_steps: cfg.total_steps,
        eval_interval: cfg.eval_interval,
        eval_episodes: cfg.eval_episodes,
        bias: cfg.diagnostics.bias.then_some(BiasSettings {
            n_states: cfg.diagnostics.bias_states,
            horizon: cfg.diagnostics.bias_horizon,
        }),
    }
}

/// Trains one seed in memory.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutput> {
    let mut env = make_env(&cfg.env)?;
    train(&cfg.agent, &mut *env, &schedule_for(cfg), &RngStream::new(seed))
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub final_return: Option<f64>,
    pub mean_bias: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub env: String,
    pub algorithm: String,
    pub n_seeds: u64,
    pub n_failed: u64,
    pub mean_final_return: Option<f64>,
    pub std_final_return: Option<f64>,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    code_version: &'a str,
    seed: u64,
    env: &'a str,
    algorithm: &'a str,
    bias_estimate: &'a str,
    evaluation_policy: &'a str,
    updates: u64,
}

fn write_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path, out: &TrainOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&out.metrics))?;
    fs::write(dir.join("timing.csv"), timing_csv(&out.metrics))?;
    fs::write(dir.join("episodes.csv"), episodes_csv(&out.episodes))?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    checkpoint::save(&out.state, &dir.join("checkpoint.bin"))?;
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION"),
        seed,
        env: &cfg.env,
        algorithm: cfg.agent.algorithm.tag(),
        bias_estimate: "critic 1 evaluated at actor 1",
        evaluation_policy: "actor 1 without exploration noise",
        updates: out.updates,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json + "\n")?;

    if cfg.diagnostics.landscape || cfg.diagnostics.interpolation {
        let mut rng = RngStream::new(seed).fork(STREAM_LANDSCAPE);
        let n = LANDSCAPE_PROBES.min(out.buffer.len());
        let probes: Vec<f64> = (0..n)
            .flat_map(|_| out.buffer.get(rng.index(out.buffer.len())).map(|t| t.state.clone()).unwrap_or_default())
            .collect();
        let actor = &out.state.actors[0].online;
        let loss = actor_loss_closure(out.state.critics[0].online.clone(), actor.spec().clone(), probes);
        if cfg.diagnostics.landscape {
            let alpha = default_alpha(actor.values());
            let recs = landscape_scatter(actor.values(), &loss, alpha, cfg.diagnostics.landscape_directions, &mut rng)?;
            fs::write(dir.join("landscape.csv"), landscape_csv(&recs))?;
        }
        if cfg.diagnostics.interpolation {
            let curve = interpolate_losses(
                actor.values(),
                out.initial_actor.values(),
                &[&loss],
                cfg.diagnostics.interpolation_points,
            )?;
            let mut s = String::from("alpha,loss\n");
            for p in curve {
                let _ = writeln!(s, "{},{}", fmt_f64(p.alpha), fmt_f64(p.losses[0]));
            }
            fs::write(dir.join("interpolation.csv"), s)?;
        }
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    Some((m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()))
}

/// Trains every seed, writes per-seed artifacts and `summary.json`.
///
/// Seeds run concurrently; a failing seed is recorded in the summary and only
/// an all-seed failure is returned as an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let started = Instant::now();
    let seeds: Vec<SeedSummary> = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed_base + k;
            let dir = cfg.output_dir.join(format!("seed_{seed}"));
            let result = run_seed(cfg, seed).and_then(|out| {
                write_seed(cfg, seed, &dir, &out)?;
                Ok(out)
            });
            match result {
                Ok(out) => {
                    let biases: Vec<f64> = out.metrics.iter().filter_map(|r| r.bias.map(|b| b.bias)).collect();
                    SeedSummary {
                        seed,
                        dir,
                        final_return: out.metrics.last().map(|r| r.eval_mean_return),
                        mean_bias: mean_std(&biases).map(|(m, _)| m),
                        error: None,
                    }
                }
                Err(e) => {
                    let _ = fs::create_dir_all(&dir);
                    let _ = fs::write(dir.join("error.txt"), format!("{e}\n"));
                    SeedSummary {
                        seed,
                        dir,
                        final_return: None,
                        mean_bias: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let finals: Vec<f64> = seeds.iter().filter_map(|s| s.final_return).collect();
    let stats = mean_std(&finals);
    let summary = ExperimentSummary {
        env: cfg.env.clone(),
        algorithm: cfg.agent.algorithm.tag().to_string(),
        n_seeds: cfg.n_seeds,
        n_failed: seeds.iter().filter(|s| s.error.is_some()).count() as u64,
        mean_final_return: stats.map(|s| s.0),
        std_final_return: stats.map(|s| s.1),
        seeds,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(cfg.output_dir.join("summary.json"), json + "\n")?;
    fs::write(
        cfg.output_dir.join("timing.txt"),
        format!("total_seconds {:.3}\n", started.elapsed().as_secs_f64()),
    )?;
    if summary.n_failed == cfg.n_seeds {
        let first = summary.seeds.iter().find_map(|s| s.error.clone()).unwrap_or_default();
        return Err(Error::Config(format!("all seeds failed; first error: {first}")));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::BiasSample;

    #[test]
    fn csv_numbers_round_trip() {
        for v in [0.1 + 0.2, -1.0 / 3.0, 188.0, 1e-300, f64::MAX] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        let rows = vec![
            MetricsRow { timestep: 5, eval_mean_return: 1.5, eval_std: 0.0, bias: None, wallclock_seconds: 9.0 },
            MetricsRow {
                timestep: 10,
                eval_mean_return: 2.0,
                eval_std: 0.5,
                bias: Some(BiasSample::new(10, 3.0, 1.0)),
                wallclock_seconds: 12.0,
            },
        ];
        let csv = metrics_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert!(lines[1].ends_with(",,,"));
        assert_eq!(lines[2].split(',').count(), 6);
        assert!(!csv.contains("9.0"));
    }
}
