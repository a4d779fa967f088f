//! Toy environments and offline dataset generation.
//!
//! Three environments are available: `chain-3` and `gridworld-5x5` are
//! tabular MDPs with explicit transition tensors, `pointmass-2d` is a
//! continuous double integrator. States and actions are always carried as
//! `f64` vectors; tabular states and actions are single-element vectors
//! holding the index.

mod dataset;
pub mod io;
pub mod pointmass;
pub mod tabular;

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::ApproximatorParams;
use crate::error::{check_dim, Error, Result};
use crate::rng;

pub use dataset::{
    generate_dataset, generate_with_behavior, Batch, OfflineDataset, Quality, Transition, EXPERT_EPSILON,
    MEDIUM_EPSILON, RANDOM_EPSILON,
};
pub use pointmass::PointMass;
pub use tabular::{value_iteration, TabularMdp, ValueIterationResult};

pub const ENV_IDS: [&str; 3] = ["gridworld-5x5", "pointmass-2d", "chain-3"];

const TABULAR_EPISODE_LEN: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Continuous,
    Discrete,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub env_id: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_kind: ActionKind,
    /// Number of discrete states (0 for continuous environments).
    pub n_states: usize,
    /// Number of discrete actions (0 for continuous environments).
    pub n_actions: usize,
    pub action_low: f64,
    pub action_high: f64,
    pub episode_len: usize,
    /// Discount used for training targets.
    pub gamma: f64,
    /// Discount applied to evaluation returns: 1 for the continuous task
    /// (undiscounted score), the MDP discount for tabular tasks.
    pub eval_discount: f64,
}

pub fn env_spec(env_id: &str) -> Result<EnvSpec> {
    match env_id {
        "pointmass-2d" => Ok(EnvSpec {
            env_id: "pointmass-2d",
            state_dim: 4,
            action_dim: 2,
            action_kind: ActionKind::Continuous,
            n_states: 0,
            n_actions: 0,
            action_low: -1.0,
            action_high: 1.0,
            episode_len: pointmass::EPISODE_LEN,
            gamma: 0.99,
            eval_discount: 1.0,
        }),
        "chain-3" | "gridworld-5x5" => {
            let mdp = tabular_for(env_id);
            Ok(EnvSpec {
                env_id: if env_id == "chain-3" { "chain-3" } else { "gridworld-5x5" },
                state_dim: 1,
                action_dim: 1,
                action_kind: ActionKind::Discrete,
                n_states: mdp.n_states(),
                n_actions: mdp.n_actions(),
                action_low: 0.0,
                action_high: (mdp.n_actions() - 1) as f64,
                episode_len: TABULAR_EPISODE_LEN,
                gamma: mdp.gamma(),
                eval_discount: mdp.gamma(),
            })
        }
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

fn tabular_for(env_id: &str) -> TabularMdp {
    if env_id == "chain-3" {
        TabularMdp::chain3()
    } else {
        TabularMdp::gridworld5x5()
    }
}

#[derive(Clone, Debug)]
enum Dynamics {
    Tabular {
        mdp: Arc<TabularMdp>,
        expert: Arc<Vec<usize>>,
        state: usize,
    },
    PointMass(PointMass),
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    /// Episode length reached.
    pub truncated: bool,
}

/// A seeded environment instance. Single owner; clone for independent copies.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvSpec,
    dynamics: Dynamics,
    rng: ChaCha8Rng,
    seed: u64,
    t: usize,
}

pub fn make_env(env_id: &str, seed: u64) -> Result<Environment> {
    let spec = env_spec(env_id)?;
    let dynamics = match spec.action_kind {
        ActionKind::Continuous => Dynamics::PointMass(PointMass::new()),
        ActionKind::Discrete => {
            let mdp = tabular_for(env_id);
            let expert = value_iteration(&mdp, 1e-12, 100_000).greedy;
            Dynamics::Tabular {
                mdp: Arc::new(mdp),
                expert: Arc::new(expert),
                state: 0,
            }
        }
    };
    Ok(Environment {
        spec,
        dynamics,
        rng: rng::stream(seed, 0),
        seed,
        t: 0,
    })
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last state with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

impl Environment {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh copy of this environment driven by a different seed.
    pub fn reseeded(&self, seed: u64, stream_id: u64) -> Environment {
        let mut env = self.clone();
        env.rng = rng::stream(seed, stream_id);
        env.seed = seed;
        env.t = 0;
        env
    }

    pub fn tabular_mdp(&self) -> Option<&TabularMdp> {
        match &self.dynamics {
            Dynamics::Tabular { mdp, .. } => Some(mdp),
            Dynamics::PointMass(_) => None,
        }
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.t = 0;
        match &mut self.dynamics {
            Dynamics::Tabular { mdp, state, .. } => {
                *state = sample_categorical(mdp.initial(), &mut self.rng);
                vec![*state as f64]
            }
            Dynamics::PointMass(pm) => pm.reset(&mut self.rng),
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_dim("action", self.spec.action_dim, action.len())?;
        let (next_state, reward) = match &mut self.dynamics {
            Dynamics::Tabular { mdp, state, .. } => {
                let a = discrete_index(action[0], mdp.n_actions())?;
                let reward = mdp.reward(*state, a);
                *state = sample_categorical(mdp.next_distribution(*state, a), &mut self.rng);
                (vec![*state as f64], reward)
            }
            Dynamics::PointMass(pm) => pm.step(action)?,
        };
        self.t += 1;
        Ok(StepOutcome {
            next_state,
            reward,
            terminal: false,
            truncated: self.t >= self.spec.episode_len,
        })
    }

    /// Action of the hand-designed (continuous) or value-iteration (tabular) expert.
    pub fn expert_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.spec.state_dim, state.len())?;
        match &self.dynamics {
            Dynamics::Tabular { expert, mdp, .. } => {
                let s = discrete_index(state[0], mdp.n_states())?;
                Ok(vec![expert[s] as f64])
            }
            Dynamics::PointMass(_) => Ok(pointmass::pd_controller(state)),
        }
    }

    /// Uniform action over the action set or box.
    pub fn random_action(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self.spec.action_kind {
            ActionKind::Discrete => vec![rng.random_range(0..self.spec.n_actions) as f64],
            ActionKind::Continuous => (0..self.spec.action_dim)
                .map(|_| rng.random_range(self.spec.action_low..self.spec.action_high))
                .collect(),
        }
    }
}

pub(crate) fn discrete_index(value: f64, n: usize) -> Result<usize> {
    if value.fract() != 0.0 || value < 0.0 || value >= n as f64 {
        return Err(Error::InvalidArgument(format!("discrete index {value} outside 0..{n}")));
    }
    Ok(value as usize)
}

/// Anything that maps a state to an action.
pub trait Policy {
    fn act(&self, state: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

/// Deterministic actor network.
impl Policy for ApproximatorParams {
    fn act(&self, state: &[f64], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.forward(state)
    }
}

impl<F> Policy for F
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn act(&self, state: &[f64], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self(state))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnStats {
    pub mean: f64,
    /// Population standard deviation of the per-episode returns.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl ReturnStats {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.returns.len() as f64).sqrt()
    }
}

/// Monte-Carlo return of `policy`, discounted with the env's `eval_discount`.
pub fn evaluate_policy(env: &Environment, policy: &dyn Policy, n_episodes: usize, seed: u64) -> Result<ReturnStats> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be at least 1".into()));
    }
    let mut env = env.reseeded(seed, 1);
    let mut policy_rng = rng::stream(seed, 2);
    let discount = env.spec.eval_discount;
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut state = env.reset();
        let mut total = 0.0;
        let mut weight = 1.0;
        loop {
            let action = policy.act(&state, &mut policy_rng)?;
            let out = env.step(&action)?;
            total += weight * out.reward;
            weight *= discount;
            state = out.next_state;
            if out.terminal || out.truncated {
                break;
            }
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / n_episodes as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n_episodes as f64;
    Ok(ReturnStats {
        mean,
        std: var.sqrt(),
        returns,
    })
}
