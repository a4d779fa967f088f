//! Network input encoding. Tabular states become one-hot vectors and
//! tabular actions a scalar in `[-1, 1]`; continuous values pass through.

use rand::RngCore;

use crate::approximator::ApproximatorParams;
use crate::env_suite::{discrete_index, ActionKind, Batch, EnvSpec, Policy, Transition};
use crate::error::{check_dim, Result};
use crate::verify::default_action_embedding;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    kind: ActionKind,
    state_dim: usize,
    action_dim: usize,
    n_states: usize,
    embedding: Vec<f64>,
}

impl FeatureMap {
    pub fn for_spec(spec: &EnvSpec) -> Self {
        match spec.action_kind {
            ActionKind::Continuous => Self {
                kind: ActionKind::Continuous,
                state_dim: spec.state_dim,
                action_dim: spec.action_dim,
                n_states: 0,
                embedding: Vec::new(),
            },
            ActionKind::Discrete => Self {
                kind: ActionKind::Discrete,
                state_dim: spec.state_dim,
                action_dim: spec.action_dim,
                n_states: spec.n_states,
                embedding: default_action_embedding(spec.n_actions),
            },
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.kind == ActionKind::Discrete
    }

    /// Width of the encoded state.
    pub fn state_features(&self) -> usize {
        if self.is_discrete() {
            self.n_states
        } else {
            self.state_dim
        }
    }

    /// Width of the encoded action.
    pub fn action_features(&self) -> usize {
        if self.is_discrete() {
            1
        } else {
            self.action_dim
        }
    }

    pub fn encode_state(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.state_dim, state.len())?;
        if !self.is_discrete() {
            return Ok(state.to_vec());
        }
        let mut x = vec![0.0; self.n_states];
        x[discrete_index(state[0], self.n_states)?] = 1.0;
        Ok(x)
    }

    pub fn encode_action(&self, action: &[f64]) -> Result<Vec<f64>> {
        check_dim("action", self.action_dim, action.len())?;
        if !self.is_discrete() {
            return Ok(action.to_vec());
        }
        Ok(vec![self.embedding[discrete_index(action[0], self.embedding.len())?]])
    }

    /// Nearest discrete action for a network output; identity when continuous.
    pub fn decode_action(&self, output: &[f64]) -> Vec<f64> {
        if !self.is_discrete() {
            return output.to_vec();
        }
        let mut best = 0;
        for (i, e) in self.embedding.iter().enumerate() {
            if (e - output[0]).abs() < (self.embedding[best] - output[0]).abs() {
                best = i;
            }
        }
        vec![best as f64]
    }

    /// Encoded actions of every discrete action, empty when continuous.
    pub fn action_candidates(&self) -> Vec<Vec<f64>> {
        self.embedding.iter().map(|e| vec![*e]).collect()
    }

    pub fn encode_batch(&self, batch: &Batch) -> Result<Batch> {
        if !self.is_discrete() {
            return Ok(batch.clone());
        }
        let transitions = batch
            .transitions
            .iter()
            .map(|t| {
                Ok(Transition {
                    state: self.encode_state(&t.state)?,
                    action: self.encode_action(&t.action)?,
                    reward: t.reward,
                    next_state: self.encode_state(&t.next_state)?,
                    terminal: t.terminal,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch::new(transitions, batch.action_kind))
    }
}

/// An actor network acting in raw environment coordinates.
pub struct ActorPolicy<'a> {
    pub actor: &'a ApproximatorParams,
    pub features: &'a FeatureMap,
}

impl Policy for ActorPolicy<'_> {
    fn act(&self, state: &[f64], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let out = self.actor.forward(&self.features.encode_state(state)?)?;
        Ok(self.features.decode_action(&out))
    }
}
