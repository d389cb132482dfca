use marl_comm::replay::{Episode, EpisodeBatch, ReplayBuffer};
use marl_comm::rng::seeded;

fn episode(len: usize, tag: f64) -> Episode {
    let mut e = Episode::new(vec![vec![tag], vec![-tag]]);
    for t in 0..len {
        e.record(vec![t % 3, 1], t as f64, t + 1 == len, vec![vec![tag + t as f64 + 1.0], vec![0.0]]);
    }
    e
}

#[test]
fn fifo_at_default_capacity() {
    let mut buf = ReplayBuffer::new(ReplayBuffer::DEFAULT_CAPACITY).unwrap();
    for i in 0..5003 {
        buf.push(episode(1, i as f64)).unwrap();
    }
    assert_eq!(buf.len(), 5000);
    let ids: Vec<u64> = buf.ids().collect();
    assert_eq!(ids.first(), Some(&3));
    assert_eq!(ids.last(), Some(&5002));
    assert!(ids.windows(2).all(|w| w[1] == w[0] + 1));
}

#[test]
fn sampling_is_uniform() {
    // chi-square goodness of fit over which stored episodes get drawn
    let slots = 40;
    let mut buf = ReplayBuffer::new(slots).unwrap();
    for i in 0..slots {
        buf.push(episode(1, i as f64)).unwrap();
    }
    let mut counts = vec![0usize; slots];
    let mut rng = seeded(17);
    let draws = 20_000;
    for _ in 0..draws {
        for i in buf.sample_indices(8, &mut rng).unwrap() {
            counts[i] += 1;
        }
    }
    let expected = (draws * 8) as f64 / slots as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 39 degrees of freedom: the 0.999 quantile is about 72.1
    assert!(chi2 < 72.1, "chi-square {chi2}");
}

#[test]
fn batch_layout_is_time_major() {
    let (a, b) = (episode(2, 10.0), episode(3, 20.0));
    let batch = EpisodeBatch::from_episodes(&[&a, &b]).unwrap();
    assert_eq!((batch.batch, batch.max_len, batch.n_agents, batch.obs_dim), (2, 3, 2, 1));
    // row t·B + b holds step t of episode b
    assert_eq!(batch.obs[0], vec![10.0, 20.0, 11.0, 21.0, 12.0, 22.0, 0.0, 23.0]);
    assert_eq!(batch.actions[0], vec![0, 0, 1, 1, 0, 2]);
    assert_eq!(batch.rewards, vec![0.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
    assert_eq!(batch.mask, vec![1.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
    assert_eq!(batch.terminated, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn mismatched_shapes_are_rejected() {
    let mut buf = ReplayBuffer::new(4).unwrap();
    buf.push(episode(2, 0.0)).unwrap();
    let mut other = Episode::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
    other.record(vec![0, 0], 0.0, true, vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
    assert!(buf.push(other).is_err());
    assert!(ReplayBuffer::new(0).is_err());
    assert!(EpisodeBatch::from_episodes(&[]).is_err());
}
