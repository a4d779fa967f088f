use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{env_spec, ActionKind, Environment};
use crate::error::{Error, Result};
use crate::rng;

pub const EXPERT_EPSILON: f64 = 0.05;
pub const MEDIUM_EPSILON: f64 = 0.35;
pub const RANDOM_EPSILON: f64 = 1.0;

/// One `(s, a, r, s', done)` record.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

impl Transition {
    /// Index of a tabular state (first state component).
    pub fn state_index(&self) -> usize {
        self.state[0] as usize
    }

    pub fn next_state_index(&self) -> usize {
        self.next_state[0] as usize
    }

    pub fn action_index(&self) -> usize {
        self.action[0] as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Expert,
    Medium,
    MediumReplay,
    Random,
    /// Expert and medium episodes in equal parts ("medium-expert").
    Mixed,
}

impl Quality {
    pub const ALL: [Quality; 5] = [
        Quality::Expert,
        Quality::Medium,
        Quality::MediumReplay,
        Quality::Random,
        Quality::Mixed,
    ];

    /// Behavior ε of each equally sized mixture component.
    pub fn component_epsilons(self) -> &'static [f64] {
        match self {
            Quality::Expert => &[EXPERT_EPSILON],
            Quality::Medium => &[MEDIUM_EPSILON],
            Quality::Random => &[RANDOM_EPSILON],
            Quality::MediumReplay => &[EXPERT_EPSILON, MEDIUM_EPSILON, RANDOM_EPSILON],
            Quality::Mixed => &[EXPERT_EPSILON, MEDIUM_EPSILON],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quality::Expert => "expert",
            Quality::Medium => "medium",
            Quality::MediumReplay => "medium_replay",
            Quality::Random => "random",
            Quality::Mixed => "mixed",
        }
    }

    pub fn code(self) -> u8 {
        Quality::ALL.iter().position(|q| *q == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Quality::ALL.get(code as usize).copied().ok_or(Error::Format {
            what: "dataset header",
            reason: format!("unknown quality code {code}"),
        })
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quality::ALL
            .iter()
            .copied()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset quality '{s}'")))
    }
}

/// Fixed offline dataset. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    transitions: Vec<Transition>,
    quality: Quality,
    behavior_epsilon: f64,
    env_id: String,
    seed: u64,
    episode_starts: Vec<usize>,
    action_kind: ActionKind,
}

impl OfflineDataset {
    pub fn new(
        transitions: Vec<Transition>,
        quality: Quality,
        behavior_epsilon: f64,
        env_id: &str,
        seed: u64,
        episode_starts: Vec<usize>,
    ) -> Result<Self> {
        let spec = env_spec(env_id)?;
        if transitions.is_empty() {
            return Err(Error::InvalidArgument("dataset must contain at least one transition".into()));
        }
        if !(0.0..=1.0).contains(&behavior_epsilon) {
            return Err(Error::InvalidArgument(format!("behavior epsilon {behavior_epsilon} outside [0, 1]")));
        }
        for (i, t) in transitions.iter().enumerate() {
            if t.state.len() != spec.state_dim
                || t.next_state.len() != spec.state_dim
                || t.action.len() != spec.action_dim
            {
                return Err(Error::Shape(format!("transition {i} does not match {env_id}")));
            }
            let in_bounds = t.action.iter().all(|a| *a >= spec.action_low && *a <= spec.action_high);
            if !in_bounds {
                return Err(Error::InvalidArgument(format!("transition {i} action outside bounds")));
            }
        }
        if episode_starts.first() != Some(&0)
            || episode_starts.windows(2).any(|w| w[0] >= w[1])
            || episode_starts.last().is_some_and(|s| *s >= transitions.len())
        {
            return Err(Error::InvalidArgument("episode starts must be increasing from 0".into()));
        }
        Ok(Self {
            transitions,
            quality,
            behavior_epsilon,
            env_id: spec.env_id.to_string(),
            seed,
            episode_starts,
            action_kind: spec.action_kind,
        })
    }

    /// Concatenation of several datasets from the same environment.
    pub fn pooled(parts: &[&OfflineDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to pool".into()))?;
        let mut transitions = Vec::new();
        let mut starts = Vec::new();
        let mut eps = 0.0;
        for part in parts {
            if part.env_id != first.env_id {
                return Err(Error::InvalidArgument("cannot pool datasets from different environments".into()));
            }
            let offset = transitions.len();
            starts.extend(part.episode_starts.iter().map(|s| s + offset));
            transitions.extend(part.transitions.iter().cloned());
            eps += part.behavior_epsilon * part.len() as f64;
        }
        let eps = eps / transitions.len() as f64;
        Self::new(transitions, Quality::Mixed, eps.min(1.0), &first.env_id, first.seed, starts)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn quality(&self) -> Quality {
        self.quality
    }

    pub fn behavior_epsilon(&self) -> f64 {
        self.behavior_epsilon
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn episode_starts(&self) -> &[usize] {
        &self.episode_starts
    }

    pub fn action_kind(&self) -> ActionKind {
        self.action_kind
    }

    pub fn mean_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum::<f64>() / self.len() as f64
    }

    /// Discounted return of every complete or truncated episode.
    pub fn episode_returns(&self, discount: f64) -> Vec<f64> {
        let mut bounds = self.episode_starts.clone();
        bounds.push(self.len());
        bounds
            .windows(2)
            .map(|w| {
                let mut weight = 1.0;
                let mut total = 0.0;
                for t in &self.transitions[w[0]..w[1]] {
                    total += weight * t.reward;
                    weight *= discount;
                }
                total
            })
            .collect()
    }

    /// Uniform minibatch with replacement.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut dyn RngCore) -> Batch {
        let transitions = (0..batch_size)
            .map(|_| self.transitions[rng.random_range(0..self.len())].clone())
            .collect();
        Batch {
            transitions,
            action_kind: self.action_kind,
        }
    }
}

/// A minibatch of transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub transitions: Vec<Transition>,
    pub action_kind: ActionKind,
}

impl Batch {
    pub fn new(transitions: Vec<Transition>, action_kind: ActionKind) -> Self {
        Self {
            transitions,
            action_kind,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.transitions.iter().map(|t| t.state.clone()).collect()
    }
}

/// Generates a dataset whose behavior policy matches the quality tier.
pub fn generate_dataset(env: &Environment, quality: Quality, n_transitions: usize, seed: u64) -> Result<OfflineDataset> {
    generate_with_behavior(env, quality.component_epsilons(), n_transitions, quality, seed)
}

/// ε-greedy corruptions of the environment's expert, one equally sized
/// block per entry of `epsilons`.
pub fn generate_with_behavior(
    env: &Environment,
    epsilons: &[f64],
    n_transitions: usize,
    quality: Quality,
    seed: u64,
) -> Result<OfflineDataset> {
    if n_transitions == 0 {
        return Err(Error::InvalidArgument("n_transitions must be positive".into()));
    }
    if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::InvalidArgument("behavior epsilons must lie in [0, 1]".into()));
    }
    let k = epsilons.len();
    let mut transitions = Vec::with_capacity(n_transitions);
    let mut starts = Vec::new();
    for (c, &epsilon) in epsilons.iter().enumerate() {
        let quota = n_transitions / k + usize::from(c < n_transitions % k);
        let mut env = env.reseeded(seed, 100 + c as u64);
        let mut behavior_rng = rng::stream(seed, 200 + c as u64);
        let target = transitions.len() + quota;
        while transitions.len() < target {
            starts.push(transitions.len());
            let mut state = env.reset();
            loop {
                let action = if behavior_rng.random::<f64>() < epsilon {
                    env.random_action(&mut behavior_rng)
                } else {
                    env.expert_action(&state)?
                };
                let out = env.step(&action)?;
                let action = clip_action(env.spec(), action);
                transitions.push(Transition {
                    state: std::mem::take(&mut state),
                    action,
                    reward: out.reward,
                    next_state: out.next_state.clone(),
                    terminal: out.terminal,
                });
                state = out.next_state;
                if out.terminal || out.truncated || transitions.len() == target {
                    break;
                }
            }
        }
    }
    let mean_eps = epsilons.iter().sum::<f64>() / k as f64;
    OfflineDataset::new(transitions, quality, mean_eps, env.spec().env_id, seed, starts)
}

fn clip_action(spec: &super::EnvSpec, action: Vec<f64>) -> Vec<f64> {
    match spec.action_kind {
        ActionKind::Discrete => action,
        ActionKind::Continuous => action
            .into_iter()
            .map(|a| a.clamp(spec.action_low, spec.action_high))
            .collect(),
    }
}
