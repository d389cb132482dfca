use marl_comm::autodiff::Tensor;
use marl_comm::envs::{make_env, EnvOverrides, EnvSpec};
use marl_comm::nn::{max_abs_diff, Module};
use marl_comm::replay::{Episode, EpisodeBatch, ReplayBuffer};
use marl_comm::rng::seeded;
use marl_comm::trainer::{EpsilonSchedule, Mode, TrainStats, Trainer, TrainerConfig, Wiring};
use rand::Rng;

fn spec(n_agents: usize, obs_dim: usize, n_actions: usize) -> EnvSpec {
    EnvSpec {
        n_agents,
        obs_dim,
        n_actions,
        max_steps: 10,
        reward_notes: "test",
    }
}

fn small_cfg() -> TrainerConfig {
    TrainerConfig {
        hidden_dim: 8,
        msg_dim: 4,
        batch_size: 4,
        buffer_capacity: 16,
        ..TrainerConfig::default()
    }
}

fn random_batch(rng: &mut impl Rng, n: usize, d: usize, a: usize, batch: usize) -> EpisodeBatch {
    let obs = |rng: &mut dyn rand::RngCore| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let episodes: Vec<Episode> = (0..batch)
        .map(|_| {
            let len = rng.gen_range(1..5);
            let mut e = Episode::new(obs(rng));
            for t in 0..len {
                let actions = (0..n).map(|_| rng.gen_range(0..a)).collect();
                e.record(actions, rng.gen_range(-1.0..1.0), t + 1 == len && rng.gen_bool(0.5), obs(rng));
            }
            e
        })
        .collect();
    EpisodeBatch::from_episodes(&episodes.iter().collect::<Vec<_>>()).unwrap()
}

fn zero_all(params: Vec<&mut Tensor>) {
    for p in params {
        p.values_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

#[test]
fn input_widths_follow_the_configuration() {
    let s = spec(4, 10, 6);
    let w = |mode, wiring| Trainer::input_width_for(mode, wiring, &s, 64);
    assert_eq!(w(Mode::NPS_IQL, Wiring::PROPOSED), 10);
    assert_eq!(w(Mode::PS_IQL, Wiring::SHARED), 14);
    assert_eq!(w(Mode::NPS_IQL_COMM, Wiring::PROPOSED), 10 + 256);
    assert_eq!(w(Mode::NPS_IQL_COMM, Wiring::INCOMING_ONLY), 10 + 192);
    assert_eq!(w(Mode::PS_IQL_COMM, Wiring::SHARED), 14 + 192);
}

#[test]
fn bundles_per_mode() {
    let s = spec(4, 5, 3);
    let nps = Trainer::new(Mode::NPS_IQL_COMM, s.clone(), small_cfg(), &mut seeded(0)).unwrap();
    assert_eq!(nps.bundles().len(), 4);
    // disjoint storage: no two agents share a parameter buffer
    let mut ptrs: Vec<*const f64> = nps
        .bundles()
        .iter()
        .flat_map(|b| {
            let mut p: Vec<*const f64> = b.policy.params().iter().map(|t| t.values().as_ptr()).collect();
            p.extend(b.comm.as_ref().unwrap().params().iter().map(|t| t.values().as_ptr()));
            p
        })
        .collect();
    let total = ptrs.len();
    ptrs.sort_unstable();
    ptrs.dedup();
    assert_eq!(ptrs.len(), total);

    let ps = Trainer::new(Mode::PS_IQL, s, small_cfg(), &mut seeded(0)).unwrap();
    assert_eq!(ps.bundles().len(), 1);
    assert_eq!(ps.input_width(), 5 + 4);
}

#[test]
fn exploration_and_greedy_actions() {
    let t = Trainer::new(Mode::NPS_IQL, spec(2, 3, 4), small_cfg(), &mut seeded(1)).unwrap();
    let obs = vec![vec![0.1, 0.2, 0.3]; 2];
    let hidden = t.initial_hidden();
    let mut rng = seeded(2);
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        let out = t.act(&obs, &hidden, 1.0, &mut rng).unwrap();
        counts[out.actions[0]] += 1;
        assert!(out.messages.is_empty());
    }
    assert!(counts.iter().all(|&c| (c as f64 / 10_000.0 - 0.25).abs() < 0.02), "{counts:?}");

    let a = t.act(&obs, &hidden, 0.0, &mut seeded(3)).unwrap();
    let b = t.act(&obs, &hidden, 0.0, &mut seeded(4)).unwrap();
    assert_eq!(a, b);
    assert!(t.act(&[vec![0.0; 2], vec![0.0; 3]], &hidden, 0.0, &mut rng).is_err());
}

#[test]
fn messages_are_broadcast_while_acting() {
    let t = Trainer::new(Mode::NPS_IQL_COMM, spec(3, 4, 2), small_cfg(), &mut seeded(5)).unwrap();
    let out = t
        .act(&[vec![0.5; 4], vec![-0.5; 4], vec![0.0; 4]], &t.initial_hidden(), 0.0, &mut seeded(0))
        .unwrap();
    assert_eq!(out.messages.len(), 3);
    assert!(out.messages.iter().all(|m| m.len() == 4));
}

#[test]
fn stored_episodes_are_seeded() {
    let mut env = make_env("signal_game", &EnvOverrides::default(), 0).unwrap();
    let t = Trainer::new(Mode::NPS_IQL_COMM, env.spec(), small_cfg(), &mut seeded(0)).unwrap();
    let mut buf = ReplayBuffer::new(4).unwrap();
    t.run_episode(env.as_mut(), &mut buf, 0.5, &mut seeded(9)).unwrap();
    assert_eq!(buf.get(0).unwrap().len(), 1);

    let rollout = |seed| {
        let mut env = make_env("pp_small", &EnvOverrides::default(), seed).unwrap();
        let t = Trainer::new(Mode::PS_IQL_COMM, env.spec(), small_cfg(), &mut seeded(1)).unwrap();
        t.rollout(env.as_mut(), 0.3, &mut seeded(seed)).unwrap()
    };
    assert_eq!(rollout(3), rollout(3));
}

#[test]
fn loss_is_one_for_zero_q_and_unit_reward() {
    for mode in Mode::ALL {
        let cfg = TrainerConfig {
            gamma: 0.0,
            ..small_cfg()
        };
        let mut t = Trainer::new(mode, spec(2, 3, 2), cfg, &mut seeded(2)).unwrap();
        for b in t.bundles_mut() {
            zero_all(b.policy.head.params_mut());
            zero_all(b.policy_target.head.params_mut());
        }
        let mut e = Episode::new(vec![vec![0.3; 3]; 2]);
        for k in 0..3 {
            e.record(vec![k % 2, 1], 1.0, false, vec![vec![0.1 * k as f64; 3]; 2]);
        }
        let batch = EpisodeBatch::from_episodes(&[&e, &e]).unwrap();
        let stats = t.train_batch(&batch).unwrap();
        assert_eq!(stats.td_loss, vec![1.0, 1.0], "{}", mode.label());
    }
}

#[test]
fn terminal_targets_ignore_the_target_network() {
    let mut t = Trainer::new(Mode::NPS_IQL, spec(1, 2, 2), small_cfg(), &mut seeded(3)).unwrap();
    zero_all(t.bundles_mut()[0].policy.head.params_mut());
    // the target network keeps random weights and would give a nonzero bootstrap
    let mut e = Episode::new(vec![vec![1.0, 0.0]]);
    e.record(vec![0], 0.7, true, vec![vec![0.0, 1.0]]);
    let batch = EpisodeBatch::from_episodes(&[&e]).unwrap();
    let stats = t.train_batch(&batch).unwrap();
    assert!((stats.td_loss[0] - 0.49).abs() < 1e-15);

    // the same step truncated instead of terminated does bootstrap
    let mut t = Trainer::new(Mode::NPS_IQL, spec(1, 2, 2), small_cfg(), &mut seeded(3)).unwrap();
    zero_all(t.bundles_mut()[0].policy.head.params_mut());
    let mut e = Episode::new(vec![vec![1.0, 0.0]]);
    e.record(vec![0], 0.7, false, vec![vec![0.0, 1.0]]);
    let stats = t.train_batch(&EpisodeBatch::from_episodes(&[&e]).unwrap()).unwrap();
    assert!((stats.td_loss[0] - 0.49).abs() > 1e-6);
}

#[test]
fn incoming_only_wiring_never_moves_the_encoders() {
    let cfg = TrainerConfig {
        wiring: Some(Wiring::INCOMING_ONLY),
        ..small_cfg()
    };
    let mut t = Trainer::new(Mode::NPS_IQL_COMM, spec(3, 4, 3), cfg, &mut seeded(4)).unwrap();
    let before: Vec<_> = t.bundles().iter().map(|b| b.comm.clone().unwrap()).collect();
    let mut rng = seeded(5);
    for _ in 0..10 {
        let stats = t.train_batch(&random_batch(&mut rng, 3, 4, 3, 4)).unwrap();
        assert!(stats.comm_grad_norm.iter().all(|&g| g == 0.0));
        assert!(stats.comm_updates.iter().all(|&u| u == 0));
    }
    for (b, old) in t.bundles().iter().zip(&before) {
        assert_eq!(max_abs_diff(b.comm.as_ref().unwrap(), old), 0.0);
    }
}

#[test]
fn attached_wiring_steps_each_encoder_once_per_loss() {
    let cfg = TrainerConfig {
        wiring: Some(Wiring::ATTACHED),
        ..small_cfg()
    };
    let mut t = Trainer::new(Mode::NPS_IQL_COMM, spec(3, 4, 3), cfg, &mut seeded(4)).unwrap();
    let stats = t.train_batch(&random_batch(&mut seeded(6), 3, 4, 3, 4)).unwrap();
    assert_eq!(stats.comm_updates, vec![3, 3, 3]);
    for b in t.bundles() {
        assert!(b.comm_opt.as_ref().unwrap().update_counts().iter().all(|&c| c == 3));
    }
}

#[test]
fn parameter_sharing_takes_one_joint_step() {
    let mut t = Trainer::new(Mode::PS_IQL_COMM, spec(3, 4, 3), small_cfg(), &mut seeded(4)).unwrap();
    for _ in 0..2 {
        t.train_batch(&random_batch(&mut seeded(7), 3, 4, 3, 4)).unwrap();
    }
    let b = &t.bundles()[0];
    assert!(b.policy_opt.update_counts().iter().all(|&c| c == 2));
    assert!(b.comm_opt.as_ref().unwrap().update_counts().iter().all(|&c| c == 2));
}

#[test]
fn targets_sync_on_the_interval_only() {
    let mut t = Trainer::new(Mode::NPS_IQL_COMM, spec(2, 3, 2), small_cfg(), &mut seeded(8)).unwrap();
    let mut rng = seeded(9);
    t.train_batch(&random_batch(&mut rng, 2, 3, 2, 4)).unwrap();
    let drift = |t: &Trainer| {
        t.bundles()
            .iter()
            .map(|b| {
                max_abs_diff(&b.policy, &b.policy_target)
                    .max(max_abs_diff(b.comm.as_ref().unwrap(), b.comm_target.as_ref().unwrap()))
            })
            .fold(0.0, f64::max)
    };
    assert!(drift(&t) > 0.0);
    assert!(!t.maybe_sync_targets(199).unwrap());
    assert!(drift(&t) > 0.0);
    assert!(t.maybe_sync_targets(200).unwrap());
    assert_eq!(drift(&t), 0.0);
    t.train_batch(&random_batch(&mut rng, 2, 3, 2, 4)).unwrap();
    assert!(drift(&t) > 0.0);
    assert!(!t.maybe_sync_targets(0).unwrap());
    assert!(t.maybe_sync_targets(400).unwrap());
    assert_eq!(drift(&t), 0.0);
    assert!(t.bundles()[0].policy_target.params().iter().all(|p| !p.requires_grad()));
}

#[test]
fn other_agents_reach_q_only_through_message_values() {
    let s = spec(2, 3, 2);
    let obs = vec![vec![0.2, -0.1, 0.4], vec![0.3, 0.3, -0.2]];
    let q0 = |t: &Trainer| t.act(&obs, &t.initial_hidden(), 0.0, &mut seeded(0)).unwrap().q_values[0].clone();

    let mut t = Trainer::new(Mode::NPS_IQL, s.clone(), small_cfg(), &mut seeded(1)).unwrap();
    let before = q0(&t);
    t.bundles_mut()[1].policy.head.bias.values_mut()[0] += 1.0;
    t.bundles_mut()[1].policy.encoder.weight.values_mut()[0] += 1.0;
    assert_eq!(q0(&t), before);

    let mut t = Trainer::new(Mode::NPS_IQL_COMM, s, small_cfg(), &mut seeded(1)).unwrap();
    let before = q0(&t);
    t.bundles_mut()[1].policy.head.bias.values_mut()[0] += 1.0;
    assert_eq!(q0(&t), before);
    t.bundles_mut()[1].comm.as_mut().unwrap().enc2.bias.values_mut()[0] += 1.0;
    assert_ne!(q0(&t), before);
}

#[test]
fn training_streams_are_bit_identical() {
    let run = || -> Vec<TrainStats> {
        let mut env = make_env("pp_small", &EnvOverrides::default(), 1).unwrap();
        let cfg = TrainerConfig {
            epsilon: EpsilonSchedule {
                horizon: 20,
                ..EpsilonSchedule::default()
            },
            ..small_cfg()
        };
        let mut t = Trainer::new(Mode::NPS_IQL_COMM, env.spec(), cfg, &mut seeded(2)).unwrap();
        let mut buf = ReplayBuffer::new(16).unwrap();
        let (mut ex, mut rp) = (seeded(3), seeded(4));
        (0..12)
            .map(|e| t.train_episode(env.as_mut(), &mut buf, e, &mut ex, &mut rp).unwrap())
            .collect()
    };
    let (a, b) = (run(), run());
    let bits = |s: &[TrainStats]| -> Vec<u64> {
        s.iter()
            .flat_map(|s| s.td_loss.iter().chain(&s.policy_grad_norm).chain(&s.comm_grad_norm))
            .map(|v| v.to_bits())
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a, b);
    assert!(a.iter().skip(4).all(|s| !s.td_loss.is_empty()));
}

#[test]
fn invalid_configurations_are_rejected() {
    let bad = [
        TrainerConfig { gamma: 1.0, ..small_cfg() },
        TrainerConfig { hidden_dim: 0, ..small_cfg() },
        TrainerConfig { batch_size: 64, ..small_cfg() },
        TrainerConfig { target_interval: 0, ..small_cfg() },
    ];
    for cfg in bad {
        assert!(Trainer::new(Mode::NPS_IQL, spec(2, 3, 2), cfg, &mut seeded(0)).is_err());
    }
    let mut t = Trainer::new(Mode::NPS_IQL, spec(2, 3, 2), small_cfg(), &mut seeded(0)).unwrap();
    assert!(t.train_batch(&random_batch(&mut seeded(1), 3, 3, 2, 2)).is_err());
}
