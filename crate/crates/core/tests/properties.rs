use proptest::prelude::*;

use sdlab::agents::checkpoint;
use sdlab::agents::update::soft_update;
use sdlab::agents::{ActorCriticState, AgentConfig, Algorithm, ReplayBuffer, Transition, ALGORITHMS};
use sdlab::diagnostics::{landscape_scatter, BiasSample};
use sdlab::env::{Environment, MoveCar};
use sdlab::numeric::{MlpSpec, ParamVector};
use sdlab::softmax::{max_gap_bound, softmax_log_weighted, ActionGrid};
use sdlab::{Result, RngStream};

fn transition(tag: f64) -> Transition {
    Transition {
        state: vec![tag],
        action: vec![0.0],
        reward: tag,
        next_state: vec![tag + 1.0],
        done: 0.0,
    }
}

fn q_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-50.0..50.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn replay_keeps_the_newest_in_order(capacity in 1usize..50, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(transition(i as f64));
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        let kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        let expected: Vec<f64> = (pushes.saturating_sub(capacity)..pushes).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn softmax_lies_between_min_and_max((q, lw) in q_and_weights(), beta in 0.0..100.0f64) {
        let v = softmax_log_weighted(&q, &lw, beta);
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "{} not in [{}, {}]", v, lo, hi);
    }

    #[test]
    fn softmax_is_non_decreasing_in_beta((q, lw) in q_and_weights(), b0 in 0.0..50.0f64, db in 0.0..50.0f64) {
        let low = softmax_log_weighted(&q, &lw, b0);
        let high = softmax_log_weighted(&q, &lw, b0 + db);
        prop_assert!(high >= low - 1e-9 * (1.0 + low.abs()));
    }

    #[test]
    fn max_gap_never_exceeds_its_bound(q in prop::collection::vec(-5.0..5.0f64, 2..64), beta in 0.1..100.0f64, eps in 0.01..1.0f64) {
        let n = q.len();
        let points = (0..n).map(|i| vec![i as f64]).collect();
        let grid = ActionGrid::new(points, vec![2.0 / n as f64; n]).unwrap();
        let r = max_gap_bound(&q, &grid, beta, eps).unwrap();
        prop_assert!(r.gap >= -1e-9);
        prop_assert!(r.slack() >= -1e-9);
    }

    #[test]
    fn soft_update_is_a_convex_step(seed in any::<u64>(), tau in 0.0..=1.0f64) {
        let mut rng = RngStream::new(seed);
        let spec = MlpSpec::critic(3, &[5]).unwrap();
        let online = ParamVector::init(spec.clone(), &mut rng);
        let start = ParamVector::init(spec, &mut rng);
        let mut target = start.clone();
        soft_update(&mut target, &online, tau).unwrap();
        for ((t, s), o) in target.values().iter().zip(start.values()).zip(online.values()) {
            prop_assert!((t - (tau * o + (1.0 - tau) * s)).abs() <= 1e-12);
            prop_assert!(*t >= s.min(*o) - 1e-12 && *t <= s.max(*o) + 1e-12);
        }
    }

    #[test]
    fn bias_is_estimate_minus_truth(t in any::<u64>(), est in -1e6..1e6f64, truth in -1e6..1e6f64) {
        let b = BiasSample::new(t, est, truth);
        prop_assert_eq!(b.bias, est - truth);
        prop_assert_eq!(b.timestep, t);
    }

    #[test]
    fn perturbations_come_in_signed_pairs(seed in any::<u64>(), dim in 1usize..20, n in 1usize..20, alpha in 0.0..2.0f64) {
        let mut rng = RngStream::new(seed);
        let phi: Vec<f64> = (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let slope: Vec<f64> = (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let linear = move |p: &[f64]| -> Result<f64> { Ok(p.iter().zip(&slope).map(|(a, b)| a * b).sum()) };
        let recs = landscape_scatter(&phi, &linear, alpha, n, &mut rng).unwrap();
        prop_assert_eq!(recs.len(), 2 * n);
        for pair in recs.chunks_exact(2) {
            prop_assert_eq!(pair[0].direction, pair[1].direction);
            prop_assert_eq!((pair[0].sign, pair[1].sign), (1, -1));
            prop_assert!((pair[0].loss_delta + pair[1].loss_delta).abs() <= 1e-12);
        }
    }

    #[test]
    fn movecar_stays_in_bounds(actions in prop::collection::vec(-3.0..3.0f64, 1..100)) {
        let mut env = MoveCar::new();
        env.reset(&mut RngStream::new(0));
        for a in actions {
            let r = env.step(&[a]);
            let x = r.next_observation[0];
            prop_assert!((0.0..=10.0).contains(&x));
            prop_assert!(r.reward == 0.0 || r.reward == 1.0 || r.reward == 2.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>(), which in 0usize..ALGORITHMS.len()) {
        let alg: Algorithm = ALGORITHMS[which];
        let cfg = AgentConfig {
            critic_hidden: vec![6, 5],
            actor_hidden: vec![4],
            beta: 1.0,
            ..AgentConfig::table2_default(alg)
        };
        let state = ActorCriticState::init(&cfg, MoveCar::new().spec(), &mut RngStream::new(seed)).unwrap();
        let bytes = checkpoint::to_bytes(&state);
        let back = checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(checkpoint::to_bytes(&back), bytes);
    }
}
