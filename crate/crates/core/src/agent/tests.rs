use super::*;
use crate::numerics::{LayerParams, MlpSpec};
use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

fn random_q(seed: u64) -> QNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QNetwork::new(MlpSpec::relu(&[OBS_DIM, 16, Action::COUNT]).unwrap(), &mut rng).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng) -> [f64; OBS_DIM] {
    std::array::from_fn(|_| rng.random_range(-1.0..1.0))
}

/// Linear 25 → 5 network with one nonzero weight W[1][0] = w.
fn linear_q(w: f64) -> QNetwork {
    let mut weights = Matrix::zeros(Action::COUNT, OBS_DIM);
    weights[(1, 0)] = w;
    let params = MlpParams::from_layers(
        MlpSpec::relu(&[OBS_DIM, Action::COUNT]).unwrap(),
        vec![LayerParams {
            weights,
            bias: vec![0.0; Action::COUNT],
        }],
    )
    .unwrap();
    QNetwork::from_params(params).unwrap()
}

fn transition(reward: f64, done: bool) -> Transition {
    let mut state = [0.0; OBS_DIM];
    state[0] = 1.0;
    Transition {
        state,
        action: Action::Idle,
        reward,
        next_state: [0.3; OBS_DIM],
        done,
    }
}

#[test]
fn greedy_tie_breaks_low() {
    assert_eq!(greedy_from_q(&[0.5; 5]), Action::LaneLeft);
    assert_eq!(greedy_from_q(&[0.0, 0.0, 0.0, 1.0, 0.0]), Action::Faster);
    assert_eq!(greedy_from_q(&[1.0, 2.0, 2.0, 0.0, 2.0]), Action::Idle);
}

#[test]
fn greedy_matches_exhaustive_argmax() {
    let q = random_q(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let s = random_state(&mut rng);
        let values = q.q_values(&s).unwrap();
        let best = (0..5)
            .find(|&i| (0..5).all(|j| values[i] >= values[j]))
            .unwrap();
        assert_eq!(q.greedy_action(&s).unwrap().index(), best);
    }
}

#[test]
fn rejects_wrong_network_shape() {
    let params = MlpParams::zeros(MlpSpec::relu(&[24, 5]).unwrap());
    assert!(QNetwork::from_params(params).is_err());
}

#[test]
fn epsilon_zero_is_greedy() {
    let q = random_q(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut srng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let s = random_state(&mut srng);
        assert_eq!(
            epsilon_greedy_action(&q, &s, 0.0, &mut rng).unwrap(),
            q.greedy_action(&s).unwrap()
        );
    }
}

#[test]
fn epsilon_one_is_uniform() {
    let q = random_q(6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = [0.1; OBS_DIM];
    let mut counts = [0usize; 5];
    for _ in 0..10_000 {
        counts[epsilon_greedy_action(&q, &s, 1.0, &mut rng).unwrap().index()] += 1;
    }
    for c in counts {
        let f = c as f64 / 10_000.0;
        assert!((f - 0.2).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn epsilon_greedy_reproducible() {
    let q = random_q(8);
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..50)
            .map(|i| epsilon_greedy_action(&q, &[i as f64 / 50.0; OBS_DIM], 0.5, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(), draw());
}

#[test]
fn terminal_and_zero_gamma_targets_equal_rewards() {
    let q = random_q(10);
    let batch_terminal = [transition(0.7, true), transition(-1.0, true)];
    let refs: Vec<&Transition> = batch_terminal.iter().collect();
    let next = Matrix::from_rows(&[[0.3; OBS_DIM], [0.3; OBS_DIM]], OBS_DIM).unwrap();
    assert_eq!(td_targets(&q, &refs, &next, 0.9).unwrap(), vec![0.7, -1.0]);

    let live = [transition(0.25, false)];
    let refs: Vec<&Transition> = live.iter().collect();
    let next = Matrix::from_rows(&[[0.3; OBS_DIM]], OBS_DIM).unwrap();
    let t = td_targets(&q, &refs, &next, 1e-300).unwrap();
    assert!((t[0] - 0.25).abs() < 1e-12);
}

#[test]
fn bootstrapped_target_uses_target_max() {
    let q = random_q(11);
    let live = [transition(0.5, false)];
    let refs: Vec<&Transition> = live.iter().collect();
    let next = Matrix::from_rows(&[[0.3; OBS_DIM]], OBS_DIM).unwrap();
    let best = q
        .q_values(&[0.3; OBS_DIM])
        .unwrap()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let t = td_targets(&q, &refs, &next, 0.9).unwrap();
    assert!((t[0] - (0.5 + 0.9 * best)).abs() < 1e-12);
}

#[test]
fn td_update_hand_computed_step() {
    // Q(s, Idle) = w·s₀ = 0.5, target = r = 1 (terminal).
    // L = (0.5 − 1)², ∂L/∂w = 2(0.5 − 1)·1 = −1, ∂L/∂b = −1.
    // SGD lr 0.1 → w = 0.6, b = 0.1.
    let mut q = linear_q(0.5);
    let target = q.clone();
    let t = transition(1.0, true);
    let mut opt = OptimizerState::sgd(0.1);
    let loss = td_update(&mut q, &target, &[&t], 0.9, &mut opt).unwrap();
    assert!((loss - 0.25).abs() < 1e-15);
    let layer = &q.params().layers()[0];
    assert!((layer.weights[(1, 0)] - 0.6).abs() < 1e-15);
    assert!((layer.bias[1] - 0.1).abs() < 1e-15);
    assert_eq!(layer.bias[0], 0.0);
    assert_eq!(layer.weights[(0, 0)], 0.0);
}

#[test]
fn divergence_guard_trips() {
    let mut q = linear_q(1e7);
    let target = q.clone();
    let t = transition(1.0, true);
    let mut opt = OptimizerState::sgd(0.1);
    assert!(matches!(
        td_update(&mut q, &target, &[&t], 0.9, &mut opt),
        Err(Error::Divergence(_))
    ));
}

#[test]
fn zero_episodes_returns_initial_network() {
    let cfg = DqnConfig {
        episodes: 0,
        seed: 12,
        ..DqnConfig::default()
    };
    let (q, log) = train(&ScenarioConfig::highway(), &cfg).unwrap();
    assert!(log.episodes.is_empty());
    assert_eq!(&q, DqnTrainer::new(&cfg).unwrap().q());
}

#[test]
fn invalid_gamma_rejected() {
    let cfg = DqnConfig {
        gamma: 1.0,
        ..DqnConfig::default()
    };
    assert!(matches!(DqnTrainer::new(&cfg), Err(Error::Config(_))));
}

#[test]
fn epsilon_schedule_is_linear() {
    let cfg = DqnConfig::default();
    assert_eq!(cfg.epsilon_at(0), 1.0);
    assert!((cfg.epsilon_at(750) - 0.525).abs() < 1e-12);
    assert!((cfg.epsilon_at(1500) - 0.05).abs() < 1e-12);
    assert_eq!(cfg.epsilon_at(6000), cfg.epsilon_at(1500));
}

fn small_config(seed: u64) -> DqnConfig {
    DqnConfig {
        episodes: 6,
        learning_starts: 32,
        batch_size: 16,
        target_sync_steps: 20,
        hidden_sizes: vec![16],
        seed,
        ..DqnConfig::default()
    }
}

#[test]
fn target_network_syncs_and_freezes() {
    let cfg = small_config(13);
    let mut trainer = DqnTrainer::new(&cfg).unwrap();
    let mut env = DrivingEnv::new(ScenarioConfig::highway()).unwrap();
    let mut state = env.reset(1).unwrap();
    let mut last_target = trainer.q_target().clone();
    for _ in 0..120 {
        let action = trainer.act(state.as_slice(), 0.5).unwrap();
        let r = env.step(action).unwrap();
        trainer
            .record(Transition {
                state: state.0,
                action,
                reward: r.reward,
                next_state: r.observation.0,
                done: r.crashed,
            })
            .unwrap();
        if trainer.total_steps() % cfg.target_sync_steps == 0 {
            assert_eq!(trainer.q_target(), trainer.q());
        } else {
            assert_eq!(trainer.q_target(), &last_target);
        }
        last_target = trainer.q_target().clone();
        state = if r.done { env.reset(trainer.total_steps() as u64).unwrap() } else { r.observation };
    }
}

#[test]
fn training_is_bit_reproducible() {
    let cfg = small_config(14);
    let (qa, la) = train(&ScenarioConfig::merge(), &cfg).unwrap();
    let (qb, lb) = train(&ScenarioConfig::merge(), &cfg).unwrap();
    assert_eq!(la, lb);
    assert_eq!(
        qa.params().flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        qb.params().flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(la.episodes.len(), 6);
}

#[test]
fn collected_observations_are_clean_and_reproducible() {
    let q = random_q(15);
    let empty = collect_clean_observations(&q, &ScenarioConfig::highway(), 0, 1).unwrap();
    assert_eq!((empty.rows(), empty.cols()), (0, OBS_DIM));

    let a = collect_clean_observations(&q, &ScenarioConfig::highway(), 300, 2).unwrap();
    let b = collect_clean_observations(&q, &ScenarioConfig::highway(), 300, 2).unwrap();
    assert_eq!(a.rows(), 300);
    assert_eq!(a, b);
    for row in a.iter_rows() {
        let obs = Observation(row.try_into().unwrap());
        assert!(obs.is_clean());
    }
}

proptest! {
    #[test]
    fn replay_never_exceeds_capacity(capacity in 1usize..50, extra in 0usize..60) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..capacity + extra {
            buf.push(transition(i as f64, false));
            prop_assert!(buf.len() <= capacity);
        }
        let mut kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        kept.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (extra..capacity + extra).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }
}
