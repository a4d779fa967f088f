//! Device runtime: Γ local steps of critic and actor updates on the
//! device's own dataset.

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::envelope::{ParamEnvelope, PayloadKind};
use super::features::FeatureMap;
use crate::approximator::{polyak_update_in_place, ApproximatorParams, OptimizerState};
use crate::env_suite::{Batch, OfflineDataset};
use crate::error::{Error, Result};
use crate::offline_core::{
    cql_critic_loss, rectified_actor_loss, state_action, td3bc_actor_loss, td3bc_lambda, CriticPair, LocalLossConfig,
};
use crate::rectifier::{periodic_rectify, RectifiedCache, RectifierConfig};

fn default_local_steps() -> u64 {
    200
}
fn default_batch_size() -> usize {
    256
}
fn default_lr() -> f64 {
    3e-4
}
fn default_target_tau() -> f64 {
    0.005
}
fn default_policy_delay() -> u64 {
    2
}

/// Step counts and optimizer settings shared by every local learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTrainConfig {
    /// Γ, local steps per round.
    #[serde(default = "default_local_steps")]
    pub local_steps: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub actor_lr: f64,
    #[serde(default = "default_lr")]
    pub critic_lr: f64,
    /// Polyak rate for the target critics.
    #[serde(default = "default_target_tau")]
    pub target_tau: f64,
    /// TD3+BC updates the actor every this many steps.
    #[serde(default = "default_policy_delay")]
    pub policy_delay: u64,
}

impl Default for LocalTrainConfig {
    fn default() -> Self {
        Self {
            local_steps: default_local_steps(),
            batch_size: default_batch_size(),
            actor_lr: default_lr(),
            critic_lr: default_lr(),
            target_tau: default_target_tau(),
            policy_delay: default_policy_delay(),
        }
    }
}

impl LocalTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.policy_delay == 0 {
            return Err(Error::Config("batch_size and policy_delay must be positive".into()));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.target_tau > 0.0 && self.target_tau <= 1.0) {
            return Err(Error::Config(format!("target_tau {} outside (0, 1]", self.target_tau)));
        }
        Ok(())
    }
}

/// What the local actor optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalObjective {
    /// Conservative critic plus the rectified actor objective.
    Rectified,
    /// Conservative critic, pure Q-maximizing actor.
    Cql,
    /// Unpenalized critic, TD3+BC actor.
    Td3bc,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DeviceConfig {
    pub loss: LocalLossConfig,
    pub rectifier: RectifierConfig,
    pub train: LocalTrainConfig,
}

#[derive(Clone, Debug)]
pub struct DeviceState {
    pub device_id: u32,
    pub actor: ApproximatorParams,
    pub critics: CriticPair,
    pub cache: RectifiedCache,
    /// Global actor received at the start of the current round.
    pub actor_snapshot: ApproximatorParams,
    pub dataset: Arc<OfflineDataset>,
    /// τ, local steps taken this round.
    pub step: u64,
    pub round: u64,
    pub flagged: bool,
    features: FeatureMap,
    batch: Option<Batch>,
    actor_opt: OptimizerState,
    q1_opt: OptimizerState,
    q2_opt: OptimizerState,
    round_start_evals: u64,
}

impl DeviceState {
    pub fn new(
        device_id: u32,
        dataset: Arc<OfflineDataset>,
        features: FeatureMap,
        actor: ApproximatorParams,
        critics: CriticPair,
        train: &LocalTrainConfig,
    ) -> Self {
        Self {
            device_id,
            actor_opt: OptimizerState::adam(actor.len(), train.actor_lr),
            q1_opt: OptimizerState::adam(critics.q1.len(), train.critic_lr),
            q2_opt: OptimizerState::adam(critics.q2.len(), train.critic_lr),
            actor_snapshot: actor.clone(),
            actor,
            critics,
            cache: RectifiedCache::new(),
            dataset,
            step: 0,
            round: 0,
            flagged: false,
            features,
            batch: None,
            round_start_evals: 0,
        }
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Loads the round's global model and resets per-round state.
    pub fn receive(&mut self, round: u64, actor: ApproximatorParams, critics: CriticPair, train: &LocalTrainConfig) {
        self.actor_opt = OptimizerState::adam(actor.len(), train.actor_lr);
        self.q1_opt = OptimizerState::adam(critics.q1.len(), train.critic_lr);
        self.q2_opt = OptimizerState::adam(critics.q2.len(), train.critic_lr);
        self.actor_snapshot = actor.clone();
        self.actor = actor;
        self.critics = critics;
        self.cache.invalidate();
        self.batch = None;
        self.step = 0;
        self.round = round;
        self.flagged = false;
        self.round_start_evals = self.cache.q_eval_count();
    }

    /// Decodes broadcast envelopes and calls [`Self::receive`].
    pub fn receive_envelopes(
        &mut self,
        actor: &ParamEnvelope,
        critics: &ParamEnvelope,
        train: &LocalTrainConfig,
    ) -> Result<()> {
        if actor.kind != PayloadKind::GlobalActor || actor.params.is_empty() {
            return Err(Error::InvalidArgument("expected a global actor envelope".into()));
        }
        if critics.kind != PayloadKind::GlobalCritic || critics.params.len() != 4 {
            return Err(Error::InvalidArgument("expected a two-head global critic envelope".into()));
        }
        let [q1, q2, t1, t2]: [ApproximatorParams; 4] = critics.params.clone().try_into().unwrap();
        let pair = CriticPair::with_targets(q1, q2, t1, t2)?;
        if !pair.q1.same_shape(&self.critics.q1) || !actor.params[0].same_shape(&self.actor) {
            return Err(Error::Shape("broadcast model does not match the device architecture".into()));
        }
        self.receive(actor.round, actor.params[0].clone(), pair, train);
        Ok(())
    }

    /// Rectifier critic evaluations since the last [`Self::receive`].
    pub fn round_q_evals(&self) -> u64 {
        self.cache.q_eval_count() - self.round_start_evals
    }

    pub fn critic_envelope(&self) -> ParamEnvelope {
        let c = &self.critics;
        ParamEnvelope::new(
            self.device_id,
            self.round,
            PayloadKind::CriticPair,
            vec![c.q1.clone(), c.q2.clone(), c.q1_target.clone(), c.q2_target.clone()],
        )
    }

    pub fn actor_envelope(&self) -> ParamEnvelope {
        ParamEnvelope::new(self.device_id, self.round, PayloadKind::LocalActor, vec![self.actor.clone()])
    }

    fn abort(&mut self, reason: impl std::fmt::Display) -> Error {
        self.flagged = true;
        Error::DeviceAbort {
            device: self.device_id,
            round: self.round,
            reason: reason.to_string(),
        }
    }
}

/// Runs Γ local steps and returns the critic upload. A non-finite value
/// aborts the round and flags the device.
pub fn device_round(
    state: &mut DeviceState,
    objective: LocalObjective,
    cfg: &DeviceConfig,
    rng: &mut dyn RngCore,
) -> Result<ParamEnvelope> {
    for _ in 0..cfg.train.local_steps {
        if let Err(e) = local_step(state, objective, cfg, rng) {
            return Err(state.abort(e));
        }
    }
    Ok(state.critic_envelope())
}

fn local_step(state: &mut DeviceState, objective: LocalObjective, cfg: &DeviceConfig, rng: &mut dyn RngCore) -> Result<()> {
    let tau = state.step;
    let searching = objective == LocalObjective::Rectified && cfg.rectifier.enabled && !state.features.is_discrete();
    // cached rectified actions stay valid only for the batch they were found on
    if state.batch.is_none() || !searching || tau.is_multiple_of(cfg.rectifier.delta) {
        let raw = state.dataset.sample_batch(cfg.train.batch_size, rng);
        state.batch = Some(state.features.encode_batch(&raw)?);
    }
    let batch = state.batch.take().expect("batch sampled above");
    let result = update_on_batch(state, &batch, objective, cfg, searching, rng);
    state.batch = Some(batch);
    state.step += 1;
    result
}

fn update_on_batch(
    state: &mut DeviceState,
    batch: &Batch,
    objective: LocalObjective,
    cfg: &DeviceConfig,
    searching: bool,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let tau = state.step;
    let states = batch.states();
    let rectified = match objective {
        LocalObjective::Rectified if searching => periodic_rectify(
            &mut state.cache,
            tau,
            &state.critics,
            &states,
            &state.actor,
            &cfg.rectifier,
            rng,
        )?,
        LocalObjective::Rectified if cfg.rectifier.enabled => exhaustive_rectify(state, &states)?,
        _ => states.iter().map(|s| state.actor.forward(s)).collect::<Result<Vec<_>>>()?,
    };

    let mut loss_cfg = cfg.loss.clone();
    if objective == LocalObjective::Td3bc {
        loss_cfg.omega_c = 0.0;
    }
    let critic = cql_critic_loss(&state.critics, &state.actor, batch, &loss_cfg, rng)?;
    state.q1_opt.step(&mut state.critics.q1, &critic.grad_q1)?;
    state.q2_opt.step(&mut state.critics.q2, &critic.grad_q2)?;

    match objective {
        LocalObjective::Rectified | LocalObjective::Cql => {
            if objective == LocalObjective::Cql {
                loss_cfg.alpha_1 = 0.0;
                loss_cfg.alpha_2 = 0.0;
            }
            let actor_loss = rectified_actor_loss(
                &state.actor,
                &state.critics,
                batch,
                &rectified,
                &state.actor_snapshot,
                &loss_cfg,
            )?;
            state.actor_opt.step(&mut state.actor, &actor_loss.grad)?;
        }
        LocalObjective::Td3bc => {
            if tau.is_multiple_of(cfg.train.policy_delay) {
                let lambda = td3bc_lambda(cfg.loss.lambda_td3bc, &state.actor, &state.critics, batch)?;
                let actor_loss = td3bc_actor_loss(&state.actor, &state.critics, batch, lambda)?;
                state.actor_opt.step(&mut state.actor, &actor_loss.grad)?;
            }
        }
    }

    let c = &mut state.critics;
    polyak_update_in_place(&mut c.q1_target, &c.q1, cfg.train.target_tau)?;
    polyak_update_in_place(&mut c.q2_target, &c.q2, cfg.train.target_tau)?;
    Ok(())
}

/// Tabular stand-in for the search: best of every discrete action and the
/// actor's own output, ties to the actor.
fn exhaustive_rectify(state: &mut DeviceState, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let candidates = state.features.action_candidates();
    let mut out = Vec::with_capacity(states.len());
    for s in states {
        let mut best = state.actor.forward(s)?;
        let mut best_q = state.critics.min_q(s, &best)?;
        for c in &candidates {
            let q = state.critics.min_q(s, c)?;
            if q > best_q {
                best_q = q;
                best = c.clone();
            }
        }
        out.push(best);
    }
    state.cache.record_evals((candidates.len() as u64 + 1) * states.len() as u64);
    Ok(out)
}

/// Greedy action of the device critics at an encoded tabular state.
pub fn critic_greedy_action(critics: &CriticPair, features: &FeatureMap, state: &[f64]) -> Result<usize> {
    let x = features.encode_state(state)?;
    let mut best = 0;
    let mut best_q = f64::NEG_INFINITY;
    for (i, c) in features.action_candidates().iter().enumerate() {
        let q = critics.min_q(&x, c)?;
        if q > best_q {
            best_q = q;
            best = i;
        }
    }
    Ok(best)
}

/// Mean of `min(Q1, Q2)` at the dataset's own actions, on encoded inputs.
pub fn mean_dataset_q(critics: &CriticPair, batch: &Batch) -> Result<f64> {
    let mut total = 0.0;
    for t in &batch.transitions {
        let x = state_action(&t.state, &t.action);
        total += critics.q1.forward(&x)?[0].min(critics.q2.forward(&x)?[0]);
    }
    Ok(total / batch.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_suite::{env_spec, generate_dataset, make_env, Quality};
    use crate::offline_core::{actor_layers, CriticPair};
    use crate::verify::{exact_policy_value, TabularPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn device(env_id: &str, quality: Quality, n: usize, seed: u64, train: &LocalTrainConfig) -> DeviceState {
        let env = make_env(env_id, seed).unwrap();
        let ds = Arc::new(generate_dataset(&env, quality, n, seed).unwrap());
        let features = FeatureMap::for_spec(&env_spec(env_id).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sf, af) = (features.state_features(), features.action_features());
        let actor = ApproximatorParams::init(actor_layers(sf, af, &[16]), &mut rng).unwrap();
        let critics = CriticPair::init(sf, af, &[16], &mut rng).unwrap();
        DeviceState::new(0, ds, features, actor, critics, train)
    }

    fn small_cfg(steps: u64) -> DeviceConfig {
        DeviceConfig {
            train: LocalTrainConfig {
                local_steps: steps,
                batch_size: 16,
                actor_lr: 1e-3,
                critic_lr: 1e-3,
                ..Default::default()
            },
            rectifier: RectifierConfig {
                population: 8,
                iterations: 2,
                ..Default::default()
            },
            loss: LocalLossConfig {
                mu_samples: 2,
                ..Default::default()
            },
        }
    }

    #[test]
    fn zero_steps_return_received_critics() {
        let cfg = small_cfg(0);
        let mut d = device("pointmass-2d", Quality::Medium, 200, 1, &cfg.train);
        let before = d.critics.clone();
        let env = device_round(&mut d, LocalObjective::Rectified, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(env.params, vec![before.q1, before.q2, before.q1_target, before.q2_target]);
    }

    #[test]
    fn rounds_are_bitwise_reproducible() {
        let cfg = small_cfg(12);
        for objective in [LocalObjective::Rectified, LocalObjective::Cql, LocalObjective::Td3bc] {
            let run = || {
                let mut d = device("pointmass-2d", Quality::Medium, 300, 2, &cfg.train);
                device_round(&mut d, objective, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().to_bytes()
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn rectifier_evals_follow_delta() {
        let cfg = small_cfg(10);
        let mut d = device("pointmass-2d", Quality::Medium, 300, 3, &cfg.train);
        device_round(&mut d, LocalObjective::Rectified, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // δ = 5 over 10 steps: 2 searches, 8 two-way comparisons
        let search = 2 * 17 * 16;
        assert_eq!(d.cache.full_search_evals(), search);
        assert_eq!(d.round_q_evals(), search + 8 * 2 * 16);
    }

    #[test]
    fn target_critics_are_not_trained_directly() {
        let cfg = DeviceConfig {
            train: LocalTrainConfig {
                target_tau: 1e-9,
                ..small_cfg(1).train
            },
            ..small_cfg(1)
        };
        let mut d = device("pointmass-2d", Quality::Medium, 200, 4, &cfg.train);
        let before = d.critics.clone();
        device_round(&mut d, LocalObjective::Cql, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_ne!(d.critics.q1, before.q1);
        // only the Polyak pull moves the targets
        let moved: f64 = d
            .critics
            .q1_target
            .values()
            .iter()
            .zip(before.q1_target.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(moved < 1e-8);
    }

    #[test]
    fn td3bc_rejects_tabular_data() {
        let cfg = small_cfg(2);
        let mut d = device("chain-3", Quality::Medium, 100, 0, &cfg.train);
        let err = device_round(&mut d, LocalObjective::Td3bc, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::DeviceAbort { .. }));
        assert!(d.flagged);
    }

    #[test]
    fn one_round_on_expert_chain_beats_behavior() {
        let cfg = DeviceConfig {
            train: LocalTrainConfig {
                local_steps: 400,
                batch_size: 32,
                actor_lr: 3e-3,
                critic_lr: 3e-3,
                target_tau: 0.05,
                ..Default::default()
            },
            loss: LocalLossConfig {
                gamma: 0.9,
                mu_samples: 2,
                omega_c: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut d = device("chain-3", Quality::Expert, 2000, 5, &cfg.train);
        device_round(&mut d, LocalObjective::Rectified, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let env = make_env("chain-3", 0).unwrap();
        let mdp = env.tabular_mdp().unwrap();
        let greedy: Vec<usize> = (0..3)
            .map(|s| critic_greedy_action(&d.critics, d.features(), &[s as f64]).unwrap())
            .collect();
        let learned = exact_policy_value(mdp, &TabularPolicy::deterministic(&greedy, 2).unwrap()).unwrap().j;
        let returns = d.dataset.episode_returns(mdp.gamma());
        let behavior = returns.iter().sum::<f64>() / returns.len() as f64;
        assert!(learned >= behavior, "greedy {greedy:?}: {learned} < {behavior}");
    }
}
