use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdlab::agents::checkpoint;
use sdlab::agents::{select_action, ActorCriticState, ReplayBuffer, Transition};
use sdlab::diagnostics::{
    actor_loss_closure, bias_probe, default_alpha, horizon_for, interpolate_losses, landscape_scatter,
};
use sdlab::env::{make_env, Environment};
use sdlab::experiment::config::parse_pairs;
use sdlab::experiment::run::{fmt_f64, landscape_csv};
use sdlab::experiment::{run_experiment, verify, ExperimentConfig};
use sdlab::tabular::{max_value_iteration, softmax_value_iteration, vi_error_bound, TabularMdp};
use sdlab::{Error, RngStream};

#[derive(Parser)]
#[command(name = "sdlab", version, about = "Softmax actor-critic experiments and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment config.
    Train {
        config: PathBuf,
        /// Override a config key, e.g. `--set agent.beta=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run an invariant suite and write a JSON report.
    Verify {
        /// operator, vi, targets, gradients or all.
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Measure value-estimation bias of a checkpoint.
    Bias {
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long, default_value_t = 1000)]
        states: usize,
        /// Monte-Carlo horizon; defaults to the smallest with gamma^h < 1e-4.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
    },
    /// Random-direction perturbation scatter of the actor loss.
    Landscape {
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long, default_value_t = 200)]
        directions: usize,
        /// Perturbation size; defaults to 0.05 |phi| / sqrt(dim).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 256)]
        states: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Actor losses along the segment between two checkpoints' first actors.
    Interpolate {
        #[command(flatten)]
        probe: ProbeArgs,
        /// Checkpoint whose actor sits at alpha = 0.
        #[arg(long)]
        other: PathBuf,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long, default_value_t = 256)]
        states: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Softmax value iteration against its error bound.
    ViCheck {
        /// `movecar` or `random`.
        #[arg(long, default_value = "movecar")]
        mdp: String,
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ProbeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "movecar")]
    env: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exploration noise of the rollouts that supply probe states.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Environment steps collected for probe states.
    #[arg(long, default_value_t = 10_000)]
    rollout_steps: u64,
}

enum Failure {
    Invariant(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::MissingFields(_)
            | Error::UnknownKey(_)
            | Error::Config(_)
            | Error::Invariant(_)
            | Error::InvalidArgument(_)
            | Error::InvalidSpec(_) => Failure::Invariant(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train { config, overrides } => train(&config, &overrides),
        Command::Verify { suite, seed, out } => {
            let reports = verify(&suite, seed)?;
            let json = serde_json::to_string_pretty(&reports).map_err(|e| Failure::Runtime(e.to_string()))?;
            fs::write(&out, json + "\n")?;
            let mut failed = Vec::new();
            for r in &reports {
                for c in &r.checks {
                    let status = if c.passed { "pass" } else { "FAIL" };
                    println!("{status} {}/{} worst slack {:e} over {} instances", r.suite, c.name, c.worst_slack, c.instances);
                    if !c.passed {
                        failed.push(format!("{}/{}", r.suite, c.name));
                    }
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Invariant(format!("violated: {}", failed.join(", "))))
            }
        }
        Command::Bias { probe, states, horizon, gamma } => {
            let (state, env, buffer, mut rng) = probe_setup(&probe)?;
            let horizon = horizon.unwrap_or_else(|| horizon_for(gamma, 1e-4));
            let s = bias_probe(
                &state.critics[0].online,
                &state.actors[0].online,
                &buffer,
                states,
                &*env,
                gamma,
                horizon,
                0,
                &mut rng,
            )?;
            println!("estimate_mean,true_mean,bias");
            println!("{},{},{}", fmt_f64(s.estimate_mean), fmt_f64(s.true_mean), fmt_f64(s.bias));
            Ok(())
        }
        Command::Landscape { probe, directions, alpha, states, out } => {
            let (state, _, buffer, mut rng) = probe_setup(&probe)?;
            let probes = probe_states(&buffer, states, &mut rng)?;
            let actor = &state.actors[0].online;
            let loss = actor_loss_closure(state.critics[0].online.clone(), actor.spec().clone(), probes);
            let alpha = alpha.unwrap_or_else(|| default_alpha(actor.values()));
            let records = landscape_scatter(actor.values(), &loss, alpha, directions, &mut rng)?;
            emit(out.as_deref(), &landscape_csv(&records))
        }
        Command::Interpolate { probe, other, points, states, out } => {
            let (state, _, buffer, mut rng) = probe_setup(&probe)?;
            let start = checkpoint::load(&other)?;
            let probes = probe_states(&buffer, states, &mut rng)?;
            let end = &state.actors[0].online;
            let begin = &start.actors[0].online;
            if begin.spec() != end.spec() {
                return Err(Failure::Invariant("checkpoints have different actor shapes".into()));
            }
            let own = actor_loss_closure(state.critics[0].online.clone(), end.spec().clone(), probes.clone());
            let theirs = actor_loss_closure(start.critics[0].online.clone(), end.spec().clone(), probes);
            let curve = interpolate_losses(end.values(), begin.values(), &[&own, &theirs], points)?;
            let mut text = String::from("alpha,loss_checkpoint_critic,loss_other_critic\n");
            for p in curve {
                let _ = writeln!(text, "{},{},{}", fmt_f64(p.alpha), fmt_f64(p.losses[0]), fmt_f64(p.losses[1]));
            }
            emit(out.as_deref(), &text)
        }
        Command::ViCheck { mdp, beta, epsilon, iterations, gamma, seed, out } => {
            let mdp = match mdp.as_str() {
                "movecar" => TabularMdp::movecar(101, 21, gamma)?,
                "random" => {
                    let mut rng = RngStream::new(seed);
                    let ns = 5 + rng.index(46);
                    let na = 4 + rng.index(29);
                    let range = rng.uniform_range(1.0, 3.0);
                    TabularMdp::random(&mut rng, ns, na, range, gamma)?
                }
                other => return Err(Failure::Invariant(format!("unknown mdp `{other}` (expected movecar, random)"))),
            };
            let v_star = max_value_iteration(&mdp, 1e-12);
            let trace = softmax_value_iteration(&mdp, beta, iterations, &vec![0.0; mdp.n_states()])?;
            let points = vi_error_bound(&mdp, &trace, &v_star, beta, epsilon)?;
            let mut text = String::from("iteration,lhs,rhs,beta\n");
            for p in &points {
                let _ = writeln!(text, "{},{},{},{}", p.iteration, fmt_f64(p.lhs), fmt_f64(p.rhs), fmt_f64(beta));
            }
            emit(out.as_deref(), &text)?;
            match points.iter().find(|p| !p.holds(1e-9)) {
                Some(p) => Err(Failure::Invariant(format!(
                    "bound violated at iteration {}: {} > {}",
                    p.iteration, p.lhs, p.rhs
                ))),
                None => Ok(()),
            }
        }
    }
}

fn train(config: &Path, overrides: &[String]) -> Result<(), Failure> {
    let mut pairs: BTreeMap<String, String> = parse_pairs(&fs::read_to_string(config)?)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::Invariant(format!("override `{o}` is not KEY=VALUE")))?;
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    let cfg = ExperimentConfig::from_pairs(&pairs)?;
    let summary = run_experiment(&cfg)?;
    for s in &summary.seeds {
        match (&s.error, s.final_return) {
            (Some(e), _) => println!("seed {} failed: {e}", s.seed),
            (None, Some(r)) => println!("seed {} final return {r}", s.seed),
            (None, None) => println!("seed {} finished without evaluations", s.seed),
        }
    }
    if let (Some(m), Some(sd)) = (summary.mean_final_return, summary.std_final_return) {
        println!("{} on {}: mean final return {m} (std {sd}) over {} seeds", summary.algorithm, summary.env, summary.n_seeds - summary.n_failed);
    }
    Ok(())
}

/// Loads a checkpoint and fills a buffer by acting with its first actor plus
/// Gaussian noise.
fn probe_setup(args: &ProbeArgs) -> Result<(ActorCriticState, Box<dyn Environment>, ReplayBuffer, RngStream), Failure> {
    let state = checkpoint::load(&args.checkpoint)?;
    let mut env = make_env(&args.env)?;
    let spec = env.spec().clone();
    if state.actors[0].online.spec().input_dim() != spec.state_dim {
        return Err(Failure::Invariant(format!(
            "checkpoint does not match environment `{}`",
            args.env
        )));
    }
    let root = RngStream::new(args.seed);
    let mut rng = root.fork(1);
    let mut buffer = ReplayBuffer::new(args.rollout_steps.max(1) as usize);
    let mut obs = env.reset(&mut rng).observation;
    for t in 0..args.rollout_steps {
        let action = select_action(&state, &obs, &spec, args.sigma, t, 0, 0, &mut rng)?;
        let r = env.step(&action);
        buffer.push(Transition {
            state: obs,
            action,
            reward: r.reward,
            next_state: r.next_observation.clone(),
            done: if r.done && !r.timeout { 1.0 } else { 0.0 },
        });
        obs = if r.done { env.reset(&mut rng).observation } else { r.next_observation };
    }
    Ok((state, env, buffer, root.fork(2)))
}

fn probe_states(buffer: &ReplayBuffer, n: usize, rng: &mut RngStream) -> Result<Vec<f64>, Failure> {
    if buffer.len() == 0 {
        return Err(Failure::Invariant("no probe states collected".into()));
    }
    Ok((0..n)
        .flat_map(|_| buffer.get(rng.index(buffer.len())).map(|t| t.state.clone()).unwrap_or_default())
        .collect())
}
