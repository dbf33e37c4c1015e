use std::fs;

use sdlab::agents::{train, AgentConfig, Algorithm, BiasSettings, TrainSchedule};
use sdlab::env::{Environment, MoveCar, PointMass};
use sdlab::experiment::{run_experiment, ExperimentConfig};
use sdlab::experiment::run::METRICS_HEADER;
use sdlab::RngStream;

fn small(alg: Algorithm) -> AgentConfig {
    AgentConfig {
        critic_hidden: vec![16, 16],
        actor_hidden: vec![16, 16],
        warmup_steps: 200,
        batch_size: 32,
        k_samples: 8,
        beta: 1.0,
        ..AgentConfig::table1_movecar(alg)
    }
}

#[test]
fn every_algorithm_trains_on_both_environments() {
    let sched = TrainSchedule {
        total_steps: 400,
        eval_interval: 200,
        eval_episodes: 1,
        bias: Some(BiasSettings { n_states: 50, horizon: 50 }),
    };
    let envs: [Box<dyn Environment>; 2] = [Box::new(MoveCar::new()), Box::new(PointMass::new())];
    for env in envs {
        for alg in sdlab::agents::ALGORITHMS {
            let mut e = env.clone();
            let out = train(&small(alg), &mut *e, &sched, &RngStream::new(3)).unwrap();
            assert_eq!(out.updates, 200, "{alg} on {}", env.name());
            assert_eq!(out.metrics.len(), 2);
            assert!(out.metrics.iter().all(|m| m.eval_mean_return.is_finite()));
            assert!(out.metrics[1].bias.is_some());
        }
    }
}

#[test]
fn experiment_writes_schema_valid_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "env = movecar\nalgorithm = ddpg\npreset = table1-movecar\nagent.hidden = 8, 8\nagent.warmup_steps = 100\n\
         total_steps = 300\neval_interval = 100\neval_episodes = 1\nn_seeds = 2\noutput_dir = {}\n\
         diagnostics.landscape = true\ndiagnostics.landscape_directions = 5\ndiagnostics.interpolation = true\n",
        dir.path().display()
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.n_failed, 0);
    for seed in [0, 1] {
        let d = dir.path().join(format!("seed_{seed}"));
        let metrics = fs::read_to_string(d.join("metrics.csv")).unwrap();
        let mut lines = metrics.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3);
        for row in rows {
            let cols: Vec<&str> = row.split(',').collect();
            assert_eq!(cols.len(), 6);
            assert!(cols[3..].iter().all(|c| c.is_empty()));
        }
        assert_eq!(fs::read_to_string(d.join("landscape.csv")).unwrap().lines().count(), 11);
        assert_eq!(fs::read_to_string(d.join("interpolation.csv")).unwrap().lines().count(), 22);
        let echoed = ExperimentConfig::parse(&fs::read_to_string(d.join("config.txt")).unwrap()).unwrap();
        assert_eq!(echoed, ExperimentConfig { preset: None, ..cfg.clone() });
        assert!(d.join("checkpoint.bin").exists() && d.join("manifest.json").exists());
    }
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn missing_fields_are_listed() {
    let err = ExperimentConfig::parse("").unwrap_err().to_string();
    for key in ["env", "algorithm", "total_steps", "output_dir"] {
        assert!(err.contains(key), "{err}");
    }
}
