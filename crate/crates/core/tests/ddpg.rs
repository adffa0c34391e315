use proptest::prelude::*;
use xdrive_core::ddpg::*;
use xdrive_core::neural::{Activation, Mlp, Parameterized, Rng};
use xdrive_core::sim::*;

fn scalar_net(value: f64) -> Mlp<f64> {
    let mut rng = Rng::seed(0);
    let mut m = Mlp::<f64>::new(&[1, 1], Activation::Identity, Activation::Identity, &mut rng);
    m.layers[0].weight.value.fill(value);
    m.layers[0].bias.value.fill(value);
    m
}

#[test]
fn soft_update_follows_geometric_decay() {
    let tau = 0.001;
    let online = scalar_net(1.0);
    let mut target = scalar_net(-3.0);
    for n in 1..=5000 {
        soft_update(&mut target, &online, tau).unwrap();
        if n % 500 == 0 {
            let gap = (target.layers[0].weight.value.data()[0] - 1.0).abs();
            let closed = (1.0 - tau).powi(n) * 4.0;
            assert!((gap - closed).abs() < 1e-6, "n={n}: {gap} vs {closed}");
        }
    }
}

#[test]
fn soft_update_fixed_point() {
    let online = scalar_net(0.7);
    let mut target = online.clone();
    soft_update(&mut target, &online, 0.3).unwrap();
    assert_eq!(target, online);
}

#[test]
fn soft_update_shape_mismatch() {
    let mut rng = Rng::seed(1);
    let a = Mlp::<f64>::new(&[2, 3], Activation::Identity, Activation::Identity, &mut rng);
    let mut b = Mlp::<f64>::new(&[3, 2], Activation::Identity, Activation::Identity, &mut rng);
    assert!(soft_update(&mut b, &a, 0.5).is_err());
}

proptest! {
    #[test]
    fn soft_update_stays_between(a in -5.0..5.0f64, b in -5.0..5.0f64, tau in 1e-4..0.9999f64) {
        let online = scalar_net(a);
        let mut target = scalar_net(b);
        soft_update(&mut target, &online, tau).unwrap();
        let v = target.layers[0].weight.value.data()[0];
        prop_assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
    }
}

fn transition(tag: f32, done: bool, r: f64) -> Transition {
    Transition {
        s: vec![tag; 5],
        a: Action::new(0.0, 0.0),
        r,
        s_next: vec![tag; 5],
        done,
    }
}

#[test]
fn buffer_evicts_oldest_first() {
    let mut buf = ReplayBuffer::new(10, Rng::seed(0));
    for i in 0..13 {
        buf.push(transition(i as f32, false, 0.0));
        assert!(buf.len() <= 10);
    }
    let tags: Vec<f32> = buf.iter().map(|t| t.s[0]).collect();
    assert_eq!(tags, (3..13).map(|i| i as f32).collect::<Vec<_>>());
}

#[test]
fn buffer_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(100, Rng::seed(5));
    for i in 0..100 {
        buf.push(transition(i as f32, false, 0.0));
    }
    let mut counts = [0usize; 100];
    let draws = 100_000;
    for _ in 0..draws / 10 {
        let idx = buf.sample_indices(10);
        let mut sorted = idx.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 10, "sampled with replacement");
        for i in idx {
            counts[i] += 1;
        }
    }
    let p = 0.01;
    let expect = draws as f64 * p;
    let bound = 10.0 * (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - expect).abs() <= bound, "item {i}: {c}");
    }
}

#[test]
fn zero_sigma_is_deterministic_policy() {
    let mut rng = Rng::seed(2);
    let actor = new_actor(33, 64, &mut rng);
    let obs: Vec<f32> = (0..33).map(|i| (i as f32 * 0.37).sin()).collect();
    let greedy = select_action(&actor, &obs, None).unwrap();
    let mut noise = Noise::new(NoiseKind::Gaussian, 0.0, Rng::seed(9));
    assert_eq!(select_action(&actor, &obs, Some(&mut noise)).unwrap(), greedy);
    assert!(select_action(&actor, &obs[..10], None).is_err());
}

#[test]
fn actions_are_clamped_after_noise() {
    assert_eq!(perturb([2.0, -2.0], [0.0, 0.0]), Action::new(1.0, -1.0));
    assert_eq!(perturb([0.9, -0.9], [0.5, -0.5]), Action::new(1.0, -1.0));
    assert_eq!(perturb([0.1, 0.2], [0.1, -0.1]), Action::new(0.2, 0.1));
}

#[test]
fn gaussian_noise_is_reproducible_and_centered() {
    let mut a = Noise::new(NoiseKind::Gaussian, 0.3, Rng::seed(42));
    let mut b = Noise::new(NoiseKind::Gaussian, 0.3, Rng::seed(42));
    let n = 100_000;
    let mut sum = [0.0; 2];
    let mut sq = 0.0;
    for _ in 0..n {
        let x = a.sample();
        assert_eq!(x, b.sample());
        sum[0] += x[0];
        sum[1] += x[1];
        sq += x[0] * x[0];
    }
    for s in sum {
        assert!((s / n as f64).abs() < 0.005);
    }
    assert!(((sq / n as f64).sqrt() - 0.3).abs() < 0.01);
}

#[test]
fn sigma_decays_linearly() {
    assert_eq!(sigma_schedule(0.3, 0.05, 0, 500), 0.3);
    assert!((sigma_schedule(0.3, 0.05, 499, 500) - 0.05).abs() < 1e-15);
    assert!((sigma_schedule(0.3, 0.05, 249, 499) - 0.175).abs() < 1e-12);
}

fn tiny_hp() -> Hyperparams {
    Hyperparams {
        batch_size: 8,
        buffer_capacity: 64,
        hidden: 16,
        lookahead: 1,
        reward_scale: 1.0,
        ..Default::default()
    }
}

#[test]
fn train_step_needs_a_full_batch() {
    let mut agent = Agent::new(tiny_hp(), &mut Rng::seed(0)).unwrap();
    let mut buf = ReplayBuffer::new(64, Rng::seed(0));
    for _ in 0..7 {
        buf.push(transition(0.1, true, 1.0));
    }
    assert!(matches!(
        agent.train_step(&mut buf),
        Err(DdpgError::BufferTooSmall { have: 7, need: 8 })
    ));
}

fn q_of(agent: &Agent, s: &[f32], a: Action) -> f64 {
    let mut x = s.to_vec();
    x.push(a.steer as f32);
    x.push(a.throttle as f32);
    let t = xdrive_core::neural::Tensor::from_vec(&[1, x.len()], x).unwrap();
    agent.critic.predict(&t).unwrap().data()[0] as f64
}

#[test]
fn terminal_transitions_regress_to_reward() {
    // every transition terminal, so the target is r regardless of gamma
    let mut agent = Agent::new(Hyperparams { critic_lr: 1e-2, ..tiny_hp() }, &mut Rng::seed(3)).unwrap();
    let mut buf = ReplayBuffer::new(64, Rng::seed(3));
    for _ in 0..16 {
        buf.push(transition(0.5, true, 2.5));
    }
    for _ in 0..1500 {
        agent.train_step(&mut buf).unwrap();
    }
    let q = q_of(&agent, &[0.5; 5], Action::default());
    assert!((q - 2.5).abs() < 0.05, "{q}");
}

#[test]
fn zero_discount_regresses_to_reward() {
    let hp = Hyperparams { gamma: 1e-300, critic_lr: 1e-2, ..tiny_hp() };
    let mut agent = Agent::new(hp, &mut Rng::seed(4)).unwrap();
    let mut buf = ReplayBuffer::new(64, Rng::seed(4));
    for _ in 0..16 {
        buf.push(transition(0.5, false, -1.5));
    }
    for _ in 0..1500 {
        agent.train_step(&mut buf).unwrap();
    }
    let q = q_of(&agent, &[0.5; 5], Action::default());
    assert!((q + 1.5).abs() < 0.05, "{q}");
}

#[test]
fn self_loop_value_converges_to_geometric_sum() {
    // single non-terminal transition s -> s with r = 1, taken with the
    // policy's own action: Q*(s, mu(s)) = 1 / (1 - gamma)
    let gamma = 0.9;
    let hp = Hyperparams { gamma, tau: 0.05, critic_lr: 1e-3, actor_lr: 1e-12, ..tiny_hp() };
    let mut agent = Agent::new(hp, &mut Rng::seed(6)).unwrap();
    let s = [0.2f32; 5];
    let a = select_action(&agent.actor, &s, None).unwrap();
    let mut buf = ReplayBuffer::new(64, Rng::seed(6));
    for _ in 0..8 {
        buf.push(Transition { s: s.to_vec(), a, r: 1.0, s_next: s.to_vec(), done: false });
    }
    for _ in 0..5000 {
        agent.train_step(&mut buf).unwrap();
    }
    let q = q_of(&agent, &s, a);
    let want = 1.0 / (1.0 - gamma);
    assert!((q - want).abs() / want < 0.05, "{q} vs {want}");
}

#[test]
fn observation_layout() {
    let env = Env::builtin("straight", 15, EnvConfig::default()).unwrap();
    let mut s = env.reset();
    s.v = 4.0;
    let obs = observe(&env, &s, 15);
    assert_eq!(obs.len(), 33);
    assert_eq!(&obs[..3], &[0.4, 0.0, 0.0]);

    // near the end fewer than 15 waypoints remain: pad with the goal
    let far = env.route.length - 5.0;
    let s = env.state_at(env.route.pose_at(far), 0.0, far, 0.0);
    let obs = observe_f64(&env, &s, 15);
    let goal = to_ego(&s.pose, env.route.goal.0, env.route.goal.1);
    for k in 0..15 {
        assert!((obs[3 + 2 * k] - goal.0 / WAYPOINT_SCALE).abs() < 1e-12);
        assert!((obs[4 + 2 * k] - goal.1 / WAYPOINT_SCALE).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn observation_matches_transform(s in 0.0..400.0f64, dx in -2.0..2.0f64, dyaw in -0.5..0.5f64) {
        let env = Env::builtin("track-a", 15, EnvConfig::default()).unwrap();
        let base = env.route.pose_at(s);
        let pose = Pose::new(base.x + dx, base.y - dx, base.yaw + dyaw);
        let st = env.state_at(pose, 3.0, s, 0.0);
        let obs = observe_f64(&env, &st, 15);
        let ego = transform_waypoints(&pose, &env.route);
        for k in 0..15 {
            let (x, y) = ego[(st.route_progress + k).min(ego.len() - 1)];
            prop_assert!((obs[3 + 2 * k] * WAYPOINT_SCALE - x).abs() < 1e-9);
            prop_assert!((obs[4 + 2 * k] * WAYPOINT_SCALE - y).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_episodes_returns_initial_actor() {
    let env = Env::builtin("straight", 15, EnvConfig::default()).unwrap();
    let hp = Hyperparams { episodes: 0, ..Default::default() };
    let out = train(&env, hp, &TrainOptions { seed: 11, ..Default::default() }).unwrap();
    assert!(out.log.is_empty());
    let fresh = Agent::new(hp, &mut Rng::stream(11, 0)).unwrap();
    assert_eq!(out.agent.actor, fresh.actor);
}

#[test]
fn short_training_is_reproducible() {
    let env = Env::builtin("straight", 15, EnvConfig::default()).unwrap();
    let hp = Hyperparams { episodes: 6, warmup_steps: 200, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let opts = TrainOptions {
            seed: 5,
            log_path: Some(dir.path().join(name)),
            checkpoint_dir: Some(dir.path().join(format!("{name}.ckpt"))),
            checkpoint_every: 2,
        };
        let out = train(&env, hp, &opts).unwrap();
        (std::fs::read(dir.path().join(name)).unwrap(), out)
    };
    let (a, out_a) = run("a.jsonl");
    let (b, out_b) = run("b.jsonl");
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 6);
    assert_eq!(out_a.agent.actor, out_b.agent.actor);
    assert!(dir.path().join("a.jsonl.ckpt/actor.ckpt").exists());

    let mut loaded = out_a.agent.actor.clone();
    loaded.zero_grad();
    xdrive_core::neural::checkpoint::load(&mut loaded, &dir.path().join("a.jsonl.ckpt/actor.ckpt")).unwrap();
    assert_eq!(loaded.layers[0].weight.value, out_a.agent.actor.layers[0].weight.value);

    let r1 = rollout(&env, &out_a.agent.actor, 15).unwrap();
    let r2 = rollout(&env, &out_a.agent.actor, 15).unwrap();
    assert_eq!(r1.states, r2.states);
}
