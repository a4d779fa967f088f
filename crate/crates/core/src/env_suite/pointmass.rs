//! Planar double integrator driven toward the origin.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

pub const DT: f64 = 0.05;
pub const EPISODE_LEN: usize = 100;
pub const GOAL: [f64; 2] = [0.0, 0.0];
const START_RANGE: f64 = 1.0;
const KP: f64 = 4.0;
const KD: f64 = 4.0;

/// State layout: `[x, y, vx, vy]`.
#[derive(Clone, Debug)]
pub struct PointMass {
    state: [f64; 4],
}

impl PointMass {
    pub fn new() -> Self {
        Self { state: [0.0; 4] }
    }

    pub fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let x = rng.random_range(-START_RANGE..START_RANGE);
        let y = rng.random_range(-START_RANGE..START_RANGE);
        self.state = [x, y, 0.0, 0.0];
        self.state.to_vec()
    }

    /// Semi-implicit Euler step; actions are clipped to `[-1, 1]`.
    /// Returns `(next_state, reward)` with reward `-|position - goal|`.
    pub fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_dim("point-mass action", 2, action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("point-mass action".into()));
        }
        let ax = action[0].clamp(-1.0, 1.0);
        let ay = action[1].clamp(-1.0, 1.0);
        let [x, y, vx, vy] = self.state;
        let (vx, vy) = (vx + ax * DT, vy + ay * DT);
        let (x, y) = (x + vx * DT, y + vy * DT);
        self.state = [x, y, vx, vy];
        let reward = -((x - GOAL[0]).powi(2) + (y - GOAL[1]).powi(2)).sqrt();
        Ok((self.state.to_vec(), reward))
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

/// Saturated PD controller used as the expert behavior policy.
pub fn pd_controller(state: &[f64]) -> Vec<f64> {
    (0..2)
        .map(|i| (-KP * (state[i] - GOAL[i]) - KD * state[i + 2]).clamp(-1.0, 1.0))
        .collect()
}
