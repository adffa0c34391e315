use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::ddpg::{rollout_with, DdpgError};
use crate::render::{render_frame, Frame, FrameMeta, RenderConfig, RenderError};
use crate::sim::{Action, ActionCategory, EgoState, Env, EpisodeEnd};

/// Frames closer than this many physics steps to a crash are not used.
pub const CRASH_MARGIN_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub frame_id: String,
    pub sim_time: f64,
    pub category: ActionCategory,
    pub state: EgoState,
    /// Physics step that produced this frame.
    pub step: usize,
    /// False when the frame is within the crash margin.
    pub safe: bool,
}

/// A drive sampled at a fixed frame rate. Pixels are rendered on demand,
/// which keeps paper-scale recordings out of memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub track_id: String,
    pub fps: f64,
    pub dt: f64,
    pub frames: Vec<FrameRecord>,
    pub end: EpisodeEnd,
}

impl Recording {
    pub fn categories(&self) -> Vec<ActionCategory> {
        self.frames.iter().map(|f| f.category).collect()
    }

    pub fn render(&self, env: &Env, index: usize, cfg: &RenderConfig) -> Result<Frame, RenderError> {
        let rec = &self.frames[index];
        let mut frame = render_frame(&env.track, &rec.state, cfg)?;
        frame.meta = FrameMeta {
            frame_id: rec.frame_id.clone(),
            sim_time: rec.sim_time,
            action_category: Some(rec.category),
        };
        Ok(frame)
    }

    pub fn render_all(&self, env: &Env, cfg: &RenderConfig) -> Result<Vec<Frame>, RenderError> {
        (0..self.frames.len()).map(|i| self.render(env, i, cfg)).collect()
    }

    pub fn find(&self, frame_id: &str) -> Option<&FrameRecord> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }
}

/// Physics step used when recording at `fps`: the largest step no longer
/// than `max_dt` that divides the frame interval evenly.
pub fn recording_dt(fps: f64, max_dt: f64) -> f64 {
    let interval = 1.0 / fps;
    interval / (interval / max_dt).ceil()
}

pub fn frame_id(track_id: &str, index: usize) -> String {
    format!("{track_id}-f{index:05}")
}

/// Drive `policy` from the route start and capture a frame every `1/fps`
/// simulated seconds (first frame at `t = 1/fps`).
pub fn record_drive(
    env: &Env,
    track_id: &str,
    fps: f64,
    mut policy: impl FnMut(&EgoState) -> Result<Action, DdpgError>,
) -> Result<Recording, DatasetError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(DatasetError::InvalidConfig(format!("fps must be positive, got {fps}")));
    }
    let dt = recording_dt(fps, env.config.dt);
    let per_frame = ((1.0 / fps) / dt).round() as usize;
    // honour the episode cap in simulated time, not in steps
    let max_steps = ((env.config.max_steps as f64 * env.config.dt) / dt).round() as usize;
    let run = rollout_with(env, dt, max_steps, &mut policy)?;

    let crashed = matches!(run.end, EpisodeEnd::LaneDeparture | EpisodeEnd::Collision);
    let last_step = run.outcomes.len();
    let mut frames = Vec::new();
    for step in (per_frame..=last_step).step_by(per_frame) {
        let state = run.states[step];
        let index = frames.len();
        frames.push(FrameRecord {
            index,
            frame_id: frame_id(track_id, index),
            sim_time: index as f64 / fps + 1.0 / fps,
            category: env.category(&state),
            state,
            step,
            safe: !(crashed && step + CRASH_MARGIN_STEPS >= last_step),
        });
    }
    if crashed {
        let saw_junction = frames
            .iter()
            .any(|f| matches!(f.category, ActionCategory::TurnLeftT | ActionCategory::TurnRightT));
        if !saw_junction {
            return Err(DatasetError::RolloutFailed(format!(
                "{track_id}: {:?} after {:.1} s, before reaching any T-junction",
                run.end,
                last_step as f64 * dt
            )));
        }
    }
    Ok(Recording {
        track_id: track_id.to_string(),
        fps,
        dt,
        frames,
        end: run.end,
    })
}

/// A maximal run of frames with the same category; `end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub category: ActionCategory,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Maximal constant-category runs of at least `min_len` frames.
pub fn extract_segments(categories: &[ActionCategory], min_len: usize) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=categories.len() {
        if i == categories.len() || categories[i] != categories[start] {
            if i - start >= min_len && i > start {
                out.push(Segment {
                    category: categories[start],
                    start,
                    end: i,
                });
            }
            start = i;
        }
    }
    out
}
