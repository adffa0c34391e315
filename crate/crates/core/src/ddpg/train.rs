use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{observe, select_action, sigma_schedule, Agent, DdpgError, Noise, ReplayBuffer, Transition};
use crate::neural::{checkpoint, Mlp, Rng};
use crate::sim::{Action, EgoState, Env, EpisodeEnd, StepOutcome};

/// One line of the learning-curve log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps: usize,
    pub event: EpisodeEnd,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub seed: u64,
    /// Learning curve as line-delimited JSON, flushed after every episode.
    pub log_path: Option<PathBuf>,
    /// Writes `actor.ckpt` / `critic.ckpt` here every `checkpoint_every`
    /// episodes (0: only at the end).
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: usize,
}

pub struct TrainOutput {
    pub agent: Agent,
    pub log: Vec<EpisodeLog>,
    pub total_steps: usize,
}

fn save_checkpoints(agent: &Agent, opts: &TrainOptions) -> Result<(), DdpgError> {
    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir)?;
        checkpoint::save(&agent.actor, &dir.join("actor.ckpt"))?;
        checkpoint::save(&agent.critic, &dir.join("critic.ckpt"))?;
    }
    Ok(())
}

/// Run `hp.episodes` training episodes from the route start. Learning starts
/// after `hp.warmup_steps` random-action steps, then one update per step.
pub fn train(env: &Env, hp: super::Hyperparams, opts: &TrainOptions) -> Result<TrainOutput, DdpgError> {
    hp.validate()?;
    let mut init_rng = Rng::stream(opts.seed, 0);
    let mut agent = Agent::new(hp, &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(hp.buffer_capacity, Rng::stream(opts.seed, 1));
    let mut noise = Noise::new(hp.noise, hp.sigma_start, Rng::stream(opts.seed, 2));
    let mut warm_rng = Rng::stream(opts.seed, 3);
    let mut log_file = match &opts.log_path {
        Some(p) => {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir)?;
            }
            Some(BufWriter::new(File::create(p)?))
        }
        None => None,
    };

    let mut log = Vec::with_capacity(hp.episodes);
    let mut total_steps = 0usize;
    let dt = env.config.dt;
    for episode in 0..hp.episodes {
        noise.sigma = sigma_schedule(hp.sigma_start, hp.sigma_end, episode, hp.episodes);
        noise.reset();
        let mut state = env.reset();
        let mut obs = observe(env, &state, hp.lookahead);
        let mut ret = 0.0;
        let mut end = EpisodeEnd::MaxSteps;
        let mut steps = 0;
        while steps < env.config.max_steps {
            let action = if total_steps < hp.warmup_steps {
                Action::new(warm_rng.uniform(-1.0, 1.0), warm_rng.uniform(-1.0, 1.0))
            } else {
                select_action(&agent.actor, &obs, Some(&mut noise))?
            };
            let out = env.step(&state, action, dt)?;
            let next_obs = observe(env, &out.next_state, hp.lookahead);
            buffer.push(Transition {
                s: obs,
                a: action,
                r: out.reward,
                s_next: next_obs.clone(),
                done: out.done,
            });
            ret += out.reward;
            steps += 1;
            total_steps += 1;
            if total_steps >= hp.warmup_steps && buffer.len() >= hp.batch_size {
                agent.train_step(&mut buffer)?;
            }
            state = out.next_state;
            obs = next_obs;
            if let Some(e) = EpisodeEnd::from_event(out.event) {
                end = e;
                break;
            }
        }
        let entry = EpisodeLog {
            episode,
            ret,
            steps,
            event: end,
        };
        if let Some(f) = log_file.as_mut() {
            serde_json::to_writer(&mut *f, &entry).map_err(std::io::Error::other)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        log.push(entry);
        if opts.checkpoint_every > 0 && (episode + 1) % opts.checkpoint_every == 0 {
            save_checkpoints(&agent, opts)?;
        }
    }
    save_checkpoints(&agent, opts)?;
    Ok(TrainOutput {
        agent,
        log,
        total_steps,
    })
}

/// A noise-free episode of a frozen actor.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// Starts with the reset state; one more entry than `actions`.
    pub states: Vec<EgoState>,
    pub actions: Vec<Action>,
    pub outcomes: Vec<StepOutcome>,
    pub end: EpisodeEnd,
    pub ret: f64,
}

pub fn rollout(env: &Env, actor: &Mlp<f32>, lookahead: usize) -> Result<Rollout, DdpgError> {
    rollout_with(env, env.config.dt, env.config.max_steps, |s| {
        select_action(actor, &observe(env, s, lookahead), None).map_err(DdpgError::from)
    })
}

/// Drive with an arbitrary policy at a given physics step.
pub fn rollout_with(
    env: &Env,
    dt: f64,
    max_steps: usize,
    mut policy: impl FnMut(&EgoState) -> Result<Action, DdpgError>,
) -> Result<Rollout, DdpgError> {
    let mut state = env.reset();
    let mut r = Rollout {
        states: vec![state],
        actions: Vec::new(),
        outcomes: Vec::new(),
        end: EpisodeEnd::MaxSteps,
        ret: 0.0,
    };
    for _ in 0..max_steps {
        let a = policy(&state)?;
        let out = env.step(&state, a, dt)?;
        r.ret += out.reward;
        r.actions.push(a);
        r.outcomes.push(out);
        r.states.push(out.next_state);
        state = out.next_state;
        if let Some(e) = EpisodeEnd::from_event(out.event) {
            r.end = e;
            break;
        }
    }
    Ok(r)
}
