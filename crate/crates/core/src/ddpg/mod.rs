//! Deep deterministic policy gradient agent for the track world.

mod buffer;
mod noise;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{Activation, Adam, Mlp, NeuralError, Param, Parameterized, Rng, Scalar, Tensor};
use crate::sim::{transform_waypoints, Action, EgoState, Env, SimError};

pub use buffer::{ReplayBuffer, Transition};
pub use noise::{sigma_schedule, Noise, NoiseKind};
pub use train::{rollout, rollout_with, train, EpisodeLog, Rollout, TrainOptions, TrainOutput};

/// Ego-frame waypoints are divided by this many meters.
pub const WAYPOINT_SCALE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum DdpgError {
    #[error("replay buffer holds {have} transitions, a batch needs {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub episodes: usize,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub noise: NoiseKind,
    /// Environment steps of uniformly random actions before learning starts.
    pub warmup_steps: usize,
    /// Multiplies rewards inside the Bellman target only; logs stay unscaled.
    pub reward_scale: f64,
    pub hidden: usize,
    /// Number of upcoming waypoints in the observation.
    pub lookahead: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.001,
            buffer_capacity: 100_000,
            batch_size: 32,
            gamma: 0.99,
            episodes: 500,
            sigma_start: 0.3,
            sigma_end: 0.05,
            noise: NoiseKind::Gaussian,
            warmup_steps: 1000,
            reward_scale: 0.1,
            hidden: 64,
            lookahead: 15,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), DdpgError> {
        let bad = |m: &str| Err(DdpgError::InvalidHyperparams(m.to_string()));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must be in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer capacity must be at least the batch size");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.hidden == 0 || self.lookahead == 0 {
            return bad("hidden and lookahead must be positive");
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        3 + 2 * self.lookahead
    }
}

/// Observation: `[v/v_max, d/(w/2), φ/π]` followed by the next `lookahead`
/// route waypoints in the ego frame (divided by [`WAYPOINT_SCALE`]), padded
/// with the goal once the route runs out.
pub fn observe(env: &Env, state: &EgoState, lookahead: usize) -> Vec<f32> {
    observe_f64(env, state, lookahead).into_iter().map(|v| v as f32).collect()
}

/// [`observe`] before rounding to `f32`.
pub fn observe_f64(env: &Env, state: &EgoState, lookahead: usize) -> Vec<f64> {
    let mut obs = Vec::with_capacity(3 + 2 * lookahead);
    obs.push(state.v / env.config.vehicle.max_speed);
    obs.push(state.d / (env.track.lane_width() / 2.0));
    obs.push(state.phi / std::f64::consts::PI);
    let ego = transform_waypoints(&state.pose, &env.route);
    let last = ego.len() - 1;
    for k in 0..lookahead {
        let (x, y) = ego[(state.route_progress + k).min(last)];
        obs.push(x / WAYPOINT_SCALE);
        obs.push(y / WAYPOINT_SCALE);
    }
    obs
}

/// Polyak averaging `θ' ← τθ + (1−τ)θ'`, parameter by parameter.
pub fn soft_update<T: Scalar, M: Parameterized<T>>(
    target: &mut M,
    online: &M,
    tau: f64,
) -> Result<(), NeuralError> {
    let tau_t = T::from_f64_lossy(tau);
    let keep = T::from_f64_lossy(1.0 - tau);
    let online = online.params();
    let mut target = target.params_mut();
    if online.len() != target.len() {
        return Err(NeuralError::ShapeMismatch {
            expected: vec![online.len()],
            found: vec![target.len()],
        });
    }
    for ((_, src), (_, dst)) in online.iter().zip(target.iter_mut()) {
        soft_update_param(dst, src, tau_t, keep)?;
    }
    Ok(())
}

fn soft_update_param<T: Scalar>(dst: &mut Param<T>, src: &Param<T>, tau: T, keep: T) -> Result<(), NeuralError> {
    if dst.shape() != src.shape() {
        return Err(NeuralError::ShapeMismatch {
            expected: src.shape().to_vec(),
            found: dst.shape().to_vec(),
        });
    }
    for (d, &s) in dst.value.data_mut().iter_mut().zip(src.value.data()) {
        *d = tau * s + keep * *d;
    }
    Ok(())
}

/// Actor `μ(s)`: ReLU hidden layers, tanh output in `[-1, 1]²`.
pub fn new_actor(obs_dim: usize, hidden: usize, rng: &mut Rng) -> Mlp<f32> {
    let mut m = Mlp::new(&[obs_dim, hidden, hidden, 2], Activation::Relu, Activation::Tanh, rng);
    shrink_last_layer(&mut m, rng);
    m
}

/// Critic `Q(s, a)` over the concatenation `[s, a]`.
pub fn new_critic(obs_dim: usize, hidden: usize, rng: &mut Rng) -> Mlp<f32> {
    let mut m = Mlp::new(&[obs_dim + 2, hidden, hidden, 1], Activation::Relu, Activation::Identity, rng);
    shrink_last_layer(&mut m, rng);
    m
}

// Start with near-zero outputs so early actions and values stay small.
fn shrink_last_layer(m: &mut Mlp<f32>, rng: &mut Rng) {
    let last = m.layers.last_mut().expect("non-empty");
    last.weight = Param::uniform(last.weight.shape(), 3e-3, rng);
    last.bias = Param::uniform(last.bias.shape(), 3e-3, rng);
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
    pub actor_target: Mlp<f32>,
    pub critic_target: Mlp<f32>,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub hp: Hyperparams,
}

impl Agent {
    pub fn new(hp: Hyperparams, rng: &mut Rng) -> Result<Self, DdpgError> {
        hp.validate()?;
        let actor = new_actor(hp.obs_dim(), hp.hidden, rng);
        let critic = new_critic(hp.obs_dim(), hp.hidden, rng);
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt: Adam::new(hp.actor_lr),
            critic_opt: Adam::new(hp.critic_lr),
            hp,
        })
    }

    /// One critic regression step, one actor ascent step and one soft update
    /// of both targets. Returns `(critic_loss, mean Q(s, μ(s)))`.
    pub fn train_step(&mut self, buffer: &mut ReplayBuffer) -> Result<(f64, f64), DdpgError> {
        let b = self.hp.batch_size;
        if buffer.len() < b {
            return Err(DdpgError::BufferTooSmall {
                have: buffer.len(),
                need: b,
            });
        }
        let obs_dim = self.actor.inputs();
        let idx = buffer.sample_indices(b);
        let mut s = Vec::with_capacity(b * obs_dim);
        let mut s2 = Vec::with_capacity(b * obs_dim);
        let mut sa = Vec::with_capacity(b * (obs_dim + 2));
        let mut r = Vec::with_capacity(b);
        let mut done = Vec::with_capacity(b);
        for &i in &idx {
            let t = buffer.get(i);
            s.extend_from_slice(&t.s);
            s2.extend_from_slice(&t.s_next);
            sa.extend_from_slice(&t.s);
            sa.push(t.a.steer as f32);
            sa.push(t.a.throttle as f32);
            r.push(t.r);
            done.push(t.done);
        }
        let s = Tensor::from_vec(&[b, obs_dim], s)?;
        let s2 = Tensor::from_vec(&[b, obs_dim], s2)?;
        let sa = Tensor::from_vec(&[b, obs_dim + 2], sa)?;

        // Bellman targets from the target networks
        let a2 = self.actor_target.predict(&s2)?;
        let q2 = self.critic_target.predict(&concat_cols(&s2, &a2)?)?;
        let y: Vec<f64> = (0..b)
            .map(|i| bellman_target(r[i] * self.hp.reward_scale, self.hp.gamma, done[i], q2.data()[i] as f64))
            .collect();

        // critic: minimize mean (Q(s,a) − y)²
        self.critic.zero_grad();
        let (q, caches) = self.critic.forward(&sa)?;
        let mut loss = 0.0;
        let grad: Vec<f32> = q
            .data()
            .iter()
            .zip(&y)
            .map(|(&q, &y)| {
                let e = q as f64 - y;
                loss += e * e;
                (2.0 * e / b as f64) as f32
            })
            .collect();
        loss /= b as f64;
        self.critic.backward(&caches, &Tensor::from_vec(&[b, 1], grad)?)?;
        self.critic_opt.step(&mut self.critic);

        // actor: ascend mean Q(s, μ(s))
        self.actor.zero_grad();
        self.critic.zero_grad();
        let (a, actor_caches) = self.actor.forward(&s)?;
        let (q, critic_caches) = self.critic.forward(&concat_cols(&s, &a)?)?;
        let objective = q.data().iter().map(|&v| v as f64).sum::<f64>() / b as f64;
        let dq = Tensor::filled(&[b, 1], -1.0 / b as f32);
        let dsa = self.critic.backward(&critic_caches, &dq)?;
        let da: Vec<f32> = dsa
            .data()
            .chunks(obs_dim + 2)
            .flat_map(|row| row[obs_dim..].iter().copied())
            .collect();
        self.actor.backward(&actor_caches, &Tensor::from_vec(&[b, 2], da)?)?;
        self.actor_opt.step(&mut self.actor);
        self.critic.zero_grad();

        soft_update(&mut self.actor_target, &self.actor, self.hp.tau)?;
        soft_update(&mut self.critic_target, &self.critic, self.hp.tau)?;
        Ok((loss, objective))
    }
}

/// `y = r + γ (1 − done) q'`.
pub fn bellman_target(r: f64, gamma: f64, done: bool, q_next: f64) -> f64 {
    if done {
        r
    } else {
        r + gamma * q_next
    }
}

fn concat_cols(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>, NeuralError> {
    let (rows, ca) = (a.shape()[0], a.shape()[1]);
    let cb = b.len() / rows.max(1);
    let mut out = Vec::with_capacity(rows * (ca + cb));
    for i in 0..rows {
        out.extend_from_slice(a.row(i));
        out.extend_from_slice(&b.data()[i * cb..(i + 1) * cb]);
    }
    Tensor::from_vec(&[rows, ca + cb], out)
}

/// Deterministic policy output, optionally perturbed and clamped to `[-1, 1]`.
pub fn select_action(
    actor: &Mlp<f32>,
    obs: &[f32],
    noise: Option<&mut Noise>,
) -> Result<Action, NeuralError> {
    let x = Tensor::from_vec(&[1, obs.len()], obs.to_vec())?;
    let y = actor.predict(&x)?;
    let mu = [y.data()[0] as f64, y.data()[1] as f64];
    let eps = noise.map_or([0.0; 2], |n| n.sample());
    Ok(perturb(mu, eps))
}

/// `clamp(μ + ε, −1, 1)` on both axes.
pub fn perturb(mu: [f64; 2], eps: [f64; 2]) -> Action {
    Action::new(mu[0] + eps[0], mu[1] + eps[1]).clamped()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_target_is_reward() {
        assert_eq!(bellman_target(3.5, 0.99, true, 1e6), 3.5);
        assert_eq!(bellman_target(3.5, 0.0, false, 1e6), 3.5);
        assert_eq!(bellman_target(1.0, 0.5, false, 4.0), 3.0);
    }

    #[test]
    fn soft_update_single_value() {
        let mut rng = Rng::seed(0);
        let mut online = Mlp::<f64>::new(&[1, 1], Activation::Identity, Activation::Identity, &mut rng);
        let mut target = online.clone();
        online.layers[0].weight.value.fill(1.0);
        target.layers[0].weight.value.fill(0.0);
        soft_update(&mut target, &online, 0.001).unwrap();
        assert_eq!(target.layers[0].weight.value.data()[0], 0.001);
    }

    #[test]
    fn bad_hyperparams() {
        let hp = Hyperparams { tau: 1.0, ..Default::default() };
        assert!(hp.validate().is_err());
        let hp = Hyperparams { buffer_capacity: 8, ..Default::default() };
        assert!(hp.validate().is_err());
    }
}
