use serde::{Deserialize, Serialize};

use crate::neural::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseKind {
    Gaussian,
    OrnsteinUhlenbeck { theta: f64, dt: f64 },
}

/// Exploration noise added to both action axes; `sigma` is set per episode.
#[derive(Debug, Clone)]
pub struct Noise {
    pub kind: NoiseKind,
    pub sigma: f64,
    state: [f64; 2],
    rng: Rng,
}

impl Noise {
    pub fn new(kind: NoiseKind, sigma: f64, rng: Rng) -> Self {
        Self {
            kind,
            sigma,
            state: [0.0; 2],
            rng,
        }
    }

    pub fn reset(&mut self) {
        self.state = [0.0; 2];
    }

    pub fn sample(&mut self) -> [f64; 2] {
        match self.kind {
            NoiseKind::Gaussian => [self.rng.normal() * self.sigma, self.rng.normal() * self.sigma],
            NoiseKind::OrnsteinUhlenbeck { theta, dt } => {
                for x in &mut self.state {
                    *x += -theta * *x * dt + self.sigma * dt.sqrt() * self.rng.normal();
                }
                self.state
            }
        }
    }
}

/// Linear decay from `start` at episode 0 to `end` at the last episode.
pub fn sigma_schedule(start: f64, end: f64, episode: usize, episodes: usize) -> f64 {
    if episodes <= 1 {
        return start;
    }
    let t = (episode as f64 / (episodes - 1) as f64).min(1.0);
    start + (end - start) * t
}
