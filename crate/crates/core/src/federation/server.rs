//! Server-side aggregation: the received critic heads form a pessimistic
//! ensemble that is refined on the server dataset, and the global actor is
//! trained against the ensemble minimum.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::envelope::{ParamEnvelope, PayloadKind, SERVER_ID};
use super::features::FeatureMap;
use crate::approximator::{
    polyak_update_in_place, Activation, ApproximatorParams, LayerSpec, OptimizerState,
};
use crate::env_suite::{Batch, OfflineDataset};
use crate::error::{check_dim, Error, Result};
use crate::offline_core::{conservative_head_loss, sample_proposals, state_action, CriticPair, LocalLossConfig};
use crate::rng;

pub const LOG_STD_INIT: f64 = -1.6094379124341003; // ln 0.2
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

fn default_beta_ent() -> f64 {
    0.0
}
fn default_omega_s() -> f64 {
    5.0
}
fn default_grad_steps() -> u64 {
    200
}
fn default_batch() -> usize {
    256
}
fn default_lr() -> f64 {
    3e-4
}
fn default_tau() -> f64 {
    0.005
}
fn default_mu_samples() -> usize {
    10
}
fn default_mu_noise() -> f64 {
    0.2
}
fn default_probe() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    /// Entropy temperature; 0 keeps the global actor deterministic.
    #[serde(default = "default_beta_ent")]
    pub beta_ent: f64,
    /// Conservative weight on the ensemble heads.
    #[serde(default = "default_omega_s")]
    pub omega_s: f64,
    #[serde(default = "default_grad_steps")]
    pub grad_steps: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub actor_lr: f64,
    #[serde(default = "default_lr")]
    pub critic_lr: f64,
    #[serde(default = "default_tau")]
    pub target_tau: f64,
    #[serde(default = "default_mu_samples")]
    pub mu_samples: usize,
    #[serde(default = "default_mu_noise")]
    pub mu_noise: f64,
    /// Size of the fixed batch used to rank heads for broadcast.
    #[serde(default = "default_probe")]
    pub probe_size: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            beta_ent: default_beta_ent(),
            omega_s: default_omega_s(),
            grad_steps: default_grad_steps(),
            batch_size: default_batch(),
            actor_lr: default_lr(),
            critic_lr: default_lr(),
            target_tau: default_tau(),
            mu_samples: default_mu_samples(),
            mu_noise: default_mu_noise(),
            probe_size: default_probe(),
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [self.beta_ent, self.omega_s, self.mu_noise];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("beta_ent, omega_s and mu_noise must be non-negative".into()));
        }
        if self.batch_size == 0 || self.mu_samples == 0 || self.probe_size == 0 {
            return Err(Error::Config("server batch, mu_samples and probe_size must be positive".into()));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::Config("server learning rates must be positive".into()));
        }
        if !(self.target_tau > 0.0 && self.target_tau <= 1.0) {
            return Err(Error::Config(format!("server target_tau {} outside (0, 1]", self.target_tau)));
        }
        Ok(())
    }

    fn proposal_config(&self, gamma: f64) -> LocalLossConfig {
        LocalLossConfig {
            omega_c: self.omega_s,
            gamma,
            mu_samples: self.mu_samples,
            mu_noise: self.mu_noise,
            ..Default::default()
        }
    }
}

/// Log-density of `mean + σ ⊙ ε` under the diagonal Gaussian, which depends
/// only on `ε` and the log-stds.
pub fn gaussian_log_prob(noise: &[f64], log_std: &[f64]) -> f64 {
    noise
        .iter()
        .zip(log_std)
        .map(|(e, ls)| -0.5 * e * e - ls - 0.5 * (2.0 * PI).ln())
        .sum()
}

/// Next-state actions and their log-probabilities. `noise` of `None` means
/// the deterministic mean action with no entropy term.
fn next_actions(
    actor: &ApproximatorParams,
    log_std: &[f64],
    batch: &Batch,
    noise: Option<&[Vec<f64>]>,
) -> Result<Vec<(Vec<f64>, f64)>> {
    batch
        .transitions
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let mean = actor.forward(&t.next_state)?;
            match noise {
                None => Ok((mean, 0.0)),
                Some(eps) => {
                    let e = &eps[j];
                    check_dim("server noise", mean.len(), e.len())?;
                    let a = mean
                        .iter()
                        .zip(e)
                        .zip(log_std)
                        .map(|((m, e), ls)| m + ls.exp() * e)
                        .collect();
                    Ok((a, gaussian_log_prob(e, log_std)))
                }
            }
        })
        .collect()
}

/// Per-head targets `r + γ(1-d)(Q_i'(s',a') - β log π(a'|s'))`, one row per
/// head, followed by the shared pessimistic target built from the minimum.
pub fn ensemble_targets(
    target_heads: &[ApproximatorParams],
    actor: &ApproximatorParams,
    log_std: &[f64],
    batch: &Batch,
    gamma: f64,
    beta_ent: f64,
    noise: Option<&[Vec<f64>]>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if target_heads.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let next = next_actions(actor, log_std, batch, noise)?;
    let mut per_head = vec![Vec::with_capacity(batch.len()); target_heads.len()];
    let mut shared = Vec::with_capacity(batch.len());
    for (t, (a, logp)) in batch.transitions.iter().zip(&next) {
        let x = state_action(&t.next_state, a);
        let mask = if t.terminal { 0.0 } else { gamma };
        let mut min_q = f64::INFINITY;
        for (i, head) in target_heads.iter().enumerate() {
            let q = head.forward(&x)?[0];
            min_q = min_q.min(q);
            per_head[i].push(t.reward + mask * (q - beta_ent * logp));
        }
        let y = t.reward + mask * (min_q - beta_ent * logp);
        if !y.is_finite() {
            return Err(Error::NonFinite("ensemble target".into()));
        }
        shared.push(y);
    }
    Ok((per_head, shared))
}

#[derive(Clone, Debug)]
pub struct EnsembleCriticLoss {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

/// Every head regresses to the shared target: `Σ_i ½ mean (Q_i - y)² +
/// ω_s (mean_{a~π_o} Q_i - mean_D Q_i)`.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_critic_loss(
    heads: &[ApproximatorParams],
    target_heads: &[ApproximatorParams],
    actor: &ApproximatorParams,
    log_std: &[f64],
    batch: &Batch,
    proposals: &[Vec<Vec<f64>>],
    cfg: &ServerConfig,
    gamma: f64,
    noise: Option<&[Vec<f64>]>,
) -> Result<EnsembleCriticLoss> {
    check_dim("target heads", heads.len(), target_heads.len())?;
    let (_, targets) = ensemble_targets(target_heads, actor, log_std, batch, gamma, cfg.beta_ent, noise)?;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(heads.len());
    for head in heads {
        let (b, p, g) = conservative_head_loss(head, batch, &targets, proposals, cfg.omega_s)?;
        loss += b + p;
        grads.push(g);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("ensemble critic loss".into()));
    }
    Ok(EnsembleCriticLoss { loss, grads, targets })
}

#[derive(Clone, Debug)]
pub struct ServerActorLoss {
    pub loss: f64,
    pub grad_actor: Vec<f64>,
    pub grad_log_std: Vec<f64>,
}

/// `mean [β log π(a|s) - min_i Q_i(s, a)]` with `a = μ(s) + σ ⊙ ε`.
pub fn server_actor_loss(
    actor: &ApproximatorParams,
    log_std: &[f64],
    heads: &[ApproximatorParams],
    batch: &Batch,
    beta_ent: f64,
    noise: Option<&[Vec<f64>]>,
) -> Result<ServerActorLoss> {
    if heads.is_empty() || batch.is_empty() {
        return Err(Error::InvalidArgument("server actor update needs heads and a batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad_actor = vec![0.0; actor.len()];
    let mut grad_log_std = vec![0.0; log_std.len()];
    let mut loss = 0.0;
    for (j, t) in batch.transitions.iter().enumerate() {
        let trace = actor.forward_traced(&t.state)?;
        let mean = trace.output();
        let eps: Vec<f64> = match noise {
            Some(e) => e[j].clone(),
            None => vec![0.0; mean.len()],
        };
        check_dim("server noise", mean.len(), eps.len())?;
        let a: Vec<f64> = mean
            .iter()
            .zip(&eps)
            .zip(log_std)
            .map(|((m, e), ls)| m + ls.exp() * e)
            .collect();
        let x = state_action(&t.state, &a);
        let mut best: Option<(f64, &ApproximatorParams)> = None;
        for head in heads {
            let q = head.forward(&x)?[0];
            if best.is_none_or(|(b, _)| q < b) {
                best = Some((q, head));
            }
        }
        let (min_q, head) = best.expect("heads checked non-empty");
        let ht = head.forward_traced(&x)?;
        let dq = &head.input_gradient(&ht, &[1.0])?[t.state.len()..];
        let logp = if noise.is_some() { gaussian_log_prob(&eps, log_std) } else { 0.0 };
        loss += (beta_ent * logp - min_q) / n;
        let up: Vec<f64> = dq.iter().map(|g| -g / n).collect();
        actor.backward(&trace, &up, &mut grad_actor)?;
        if noise.is_some() {
            for d in 0..log_std.len() {
                grad_log_std[d] += (-beta_ent - dq[d] * log_std[d].exp() * eps[d]) / n;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("server actor loss".into()));
    }
    Ok(ServerActorLoss {
        loss,
        grad_actor,
        grad_log_std,
    })
}

#[derive(Clone, Debug)]
pub struct ServerState {
    pub actor: ApproximatorParams,
    /// State-independent log-std of the global policy.
    pub log_std: Vec<f64>,
    pub heads: Vec<ApproximatorParams>,
    pub targets: Vec<ApproximatorParams>,
    pub dataset: Arc<OfflineDataset>,
    pub round: u64,
    features: FeatureMap,
    probe: Batch,
    broadcast: [usize; 2],
    actor_opt: OptimizerState,
    log_std_opt: OptimizerState,
}

/// What happened to the envelopes of one aggregation.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AggregationSummary {
    pub accepted: Vec<u32>,
    pub rejected: Vec<u32>,
}

impl ServerState {
    /// `initial` supplies the round-0 ensemble and broadcast pair.
    pub fn new(
        actor: ApproximatorParams,
        initial: CriticPair,
        dataset: Arc<OfflineDataset>,
        features: FeatureMap,
        cfg: &ServerConfig,
        seed: u64,
    ) -> Result<Self> {
        let action_dim = actor.output_dim();
        let mut probe_rng = rng::stream(seed, rng::stream_id(3, 0, 0));
        let probe = features.encode_batch(&dataset.sample_batch(cfg.probe_size, &mut probe_rng))?;
        Ok(Self {
            actor_opt: OptimizerState::adam(actor.len(), cfg.actor_lr),
            log_std_opt: OptimizerState::adam(action_dim, cfg.actor_lr),
            actor,
            log_std: vec![LOG_STD_INIT; action_dim],
            heads: vec![initial.q1, initial.q2],
            targets: vec![initial.q1_target, initial.q2_target],
            dataset,
            round: 0,
            features,
            probe,
            broadcast: [0, 1],
        })
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Indices of the two heads sent to devices.
    pub fn broadcast_heads(&self) -> [usize; 2] {
        self.broadcast
    }

    pub fn broadcast_pair(&self) -> Result<CriticPair> {
        let [a, b] = self.broadcast;
        CriticPair::with_targets(
            self.heads[a].clone(),
            self.heads[b].clone(),
            self.targets[a].clone(),
            self.targets[b].clone(),
        )
    }

    pub fn actor_envelope(&self) -> Result<ParamEnvelope> {
        Ok(ParamEnvelope::new(
            SERVER_ID,
            self.round,
            PayloadKind::GlobalActor,
            vec![self.actor.clone(), log_std_params(&self.log_std)?],
        ))
    }

    /// The broadcast pair as `[head_a, head_b, target_a, target_b]`.
    pub fn critic_envelope(&self) -> Result<ParamEnvelope> {
        let p = self.broadcast_pair()?;
        Ok(ParamEnvelope::new(
            SERVER_ID,
            self.round,
            PayloadKind::GlobalCritic,
            vec![p.q1, p.q2, p.q1_target, p.q2_target],
        ))
    }

    /// Every head followed by every target, for checkpoints.
    pub fn ensemble_envelope(&self) -> ParamEnvelope {
        let params = self.heads.iter().chain(&self.targets).cloned().collect();
        ParamEnvelope::new(SERVER_ID, self.round, PayloadKind::GlobalCritic, params)
    }

    fn accepts(&self, env: &ParamEnvelope) -> bool {
        env.kind == PayloadKind::CriticPair
            && env.params.len() == 4
            && env.params.iter().all(|p| p.same_shape(&self.heads[0]))
    }

    fn rank_heads(&mut self) -> Result<()> {
        let mut scored = Vec::with_capacity(self.heads.len());
        for (i, head) in self.heads.iter().enumerate() {
            let mut total = 0.0;
            for t in &self.probe.transitions {
                total += head.forward(&state_action(&t.state, &t.action))?[0];
            }
            scored.push((total / self.probe.len() as f64, i));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.broadcast = [scored[0].1, scored[1.min(scored.len() - 1)].1];
        Ok(())
    }
}

/// State-independent log-std stored as a bias-only layer.
pub fn log_std_params(log_std: &[f64]) -> Result<ApproximatorParams> {
    let d = log_std.len();
    let mut values = vec![0.0; 2 * d];
    values[d..].copy_from_slice(log_std);
    ApproximatorParams::from_values(vec![LayerSpec::new(1, d, Activation::Identity)], values)
}

pub fn log_std_from_params(params: &ApproximatorParams) -> Vec<f64> {
    let d = params.output_dim();
    params.values()[params.len() - d..].to_vec()
}

/// Replaces the ensemble with the received heads, then runs the configured
/// number of critic and actor steps on the server dataset.
pub fn server_ensemble_update(
    state: &mut ServerState,
    envelopes: &[ParamEnvelope],
    cfg: &ServerConfig,
    gamma: f64,
    rng: &mut dyn RngCore,
) -> Result<AggregationSummary> {
    let mut summary = AggregationSummary::default();
    let mut heads = Vec::new();
    let mut targets = Vec::new();
    for env in envelopes {
        if state.accepts(env) {
            summary.accepted.push(env.sender_id);
            heads.extend_from_slice(&env.params[..2]);
            targets.extend_from_slice(&env.params[2..]);
        } else {
            summary.rejected.push(env.sender_id);
        }
    }
    if heads.is_empty() {
        return Err(Error::NoEnvelopes(state.round));
    }
    state.heads = heads;
    state.targets = targets;

    let mut head_opts: Vec<OptimizerState> = state
        .heads
        .iter()
        .map(|h| OptimizerState::adam(h.len(), cfg.critic_lr))
        .collect();
    let proposal_cfg = cfg.proposal_config(gamma);
    let stochastic = cfg.beta_ent > 0.0;
    let action_dim = state.log_std.len();
    for _ in 0..cfg.grad_steps {
        let batch = state.features.encode_batch(&state.dataset.sample_batch(cfg.batch_size, rng))?;
        let next_noise = stochastic.then(|| gaussian_rows(batch.len(), action_dim, rng));
        let proposals = if cfg.omega_s > 0.0 {
            sample_proposals(&state.actor, &batch, &proposal_cfg, rng)?
        } else {
            Vec::new()
        };
        let critic = ensemble_critic_loss(
            &state.heads,
            &state.targets,
            &state.actor,
            &state.log_std,
            &batch,
            &proposals,
            cfg,
            gamma,
            next_noise.as_deref(),
        )?;
        for ((head, opt), g) in state.heads.iter_mut().zip(&mut head_opts).zip(&critic.grads) {
            opt.step(head, g)?;
        }

        let noise = stochastic.then(|| gaussian_rows(batch.len(), action_dim, rng));
        let actor = server_actor_loss(&state.actor, &state.log_std, &state.heads, &batch, cfg.beta_ent, noise.as_deref())?;
        state.actor_opt.step(&mut state.actor, &actor.grad_actor)?;
        if stochastic {
            state.log_std_opt.step_slice(&mut state.log_std, &actor.grad_log_std)?;
            for ls in &mut state.log_std {
                *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
        }

        for (t, h) in state.targets.iter_mut().zip(&state.heads) {
            polyak_update_in_place(t, h, cfg.target_tau)?;
        }
    }
    state.rank_heads()?;
    state.round += 1;
    Ok(summary)
}

fn gaussian_rows(rows: usize, dim: usize, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_suite::{env_spec, generate_dataset, make_env, ActionKind, Quality, Transition};
    use crate::offline_core::{actor_layers, critic_layers};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_head(value: f64, in_dim: usize) -> ApproximatorParams {
        let mut v = vec![0.0; in_dim + 1];
        v[in_dim] = value;
        ApproximatorParams::from_values(vec![LayerSpec::new(in_dim, 1, Activation::Identity)], v).unwrap()
    }

    fn one_row_batch() -> Batch {
        Batch::new(
            vec![Transition {
                state: vec![0.1],
                action: vec![0.2],
                reward: 0.0,
                next_state: vec![0.3],
                terminal: false,
            }],
            ActionKind::Continuous,
        )
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Batch {
        let rows = (0..n)
            .map(|i| Transition {
                state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: rng.random_range(-1.0..0.0),
                next_state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                terminal: i == 0,
            })
            .collect();
        Batch::new(rows, ActionKind::Continuous)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        num / den.max(1e-12)
    }

    fn fd(values: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        (0..values.len())
            .map(|k| {
                let mut v = values.to_vec();
                v[k] += h;
                let fp = f(&v);
                v[k] -= 2.0 * h;
                (fp - f(&v)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn shared_target_uses_ensemble_minimum() {
        let heads: Vec<_> = [1.0, 0.5, 2.0].iter().map(|v| constant_head(*v, 2)).collect();
        let actor = ApproximatorParams::zeros(actor_layers(1, 1, &[])).unwrap();
        let (per_head, shared) = ensemble_targets(&heads, &actor, &[LOG_STD_INIT], &one_row_batch(), 0.9, 0.0, None).unwrap();
        assert!((shared[0] - 0.45).abs() < 1e-15);
        for row in per_head {
            assert!(shared[0] <= row[0]);
        }
    }

    #[test]
    fn identical_heads_reduce_to_single_critic() {
        let h = constant_head(1.3, 2);
        let actor = ApproximatorParams::zeros(actor_layers(1, 1, &[])).unwrap();
        let (_, many) = ensemble_targets(&vec![h.clone(); 6], &actor, &[0.0], &one_row_batch(), 0.9, 0.0, None).unwrap();
        let (_, one) = ensemble_targets(&[h], &actor, &[0.0], &one_row_batch(), 0.9, 0.0, None).unwrap();
        assert_eq!(many, one);
    }

    #[test]
    fn ensemble_gradients_match_finite_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let heads: Vec<_> = (0..4)
                .map(|_| ApproximatorParams::init(critic_layers(3, 2, &[5]), &mut rng).unwrap())
                .collect();
            let targets: Vec<_> = (0..4)
                .map(|_| ApproximatorParams::init(critic_layers(3, 2, &[5]), &mut rng).unwrap())
                .collect();
            let actor = ApproximatorParams::init(actor_layers(3, 2, &[4]), &mut rng).unwrap();
            let log_std = vec![-0.5, -1.0];
            let batch = random_batch(&mut rng, 5);
            let noise = gaussian_rows(5, 2, &mut rng);
            let cfg = ServerConfig {
                beta_ent: 0.3,
                mu_samples: 3,
                ..Default::default()
            };
            let proposals = sample_proposals(&actor, &batch, &cfg.proposal_config(0.9), &mut rng).unwrap();
            let out =
                ensemble_critic_loss(&heads, &targets, &actor, &log_std, &batch, &proposals, &cfg, 0.9, Some(&noise))
                    .unwrap();
            for k in 0..heads.len() {
                let numeric = fd(heads[k].values(), |v| {
                    let mut hs = heads.clone();
                    hs[k].values_mut().copy_from_slice(v);
                    ensemble_critic_loss(&hs, &targets, &actor, &log_std, &batch, &proposals, &cfg, 0.9, Some(&noise))
                        .unwrap()
                        .loss
                });
                assert!(rel_err(&out.grads[k], &numeric) <= 1e-4);
            }

            let a = server_actor_loss(&actor, &log_std, &heads, &batch, 0.3, Some(&noise)).unwrap();
            let numeric = fd(actor.values(), |v| {
                let mut p = actor.clone();
                p.values_mut().copy_from_slice(v);
                server_actor_loss(&p, &log_std, &heads, &batch, 0.3, Some(&noise)).unwrap().loss
            });
            assert!(rel_err(&a.grad_actor, &numeric) <= 1e-4, "seed {seed}");
            let numeric = fd(&log_std, |v| server_actor_loss(&actor, v, &heads, &batch, 0.3, Some(&noise)).unwrap().loss);
            assert!(rel_err(&a.grad_log_std, &numeric) <= 1e-4, "seed {seed}");
        }
    }

    #[test]
    fn deterministic_actor_maximizes_min_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let heads: Vec<_> = (0..3)
            .map(|_| ApproximatorParams::init(critic_layers(3, 2, &[5]), &mut rng).unwrap())
            .collect();
        let actor = ApproximatorParams::init(actor_layers(3, 2, &[4]), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 4);
        let out = server_actor_loss(&actor, &[0.0, 0.0], &heads, &batch, 0.0, None).unwrap();
        let mut expected = 0.0;
        for t in &batch.transitions {
            let a = actor.forward(&t.state).unwrap();
            let x = state_action(&t.state, &a);
            expected -= heads.iter().map(|h| h.forward(&x).unwrap()[0]).fold(f64::INFINITY, f64::min) / 4.0;
        }
        assert!((out.loss - expected).abs() < 1e-14);
        assert!(out.grad_log_std.iter().all(|g| *g == 0.0));
    }

    fn server_fixture(seed: u64) -> (ServerState, ChaCha8Rng) {
        let env = make_env("pointmass-2d", seed).unwrap();
        let ds = Arc::new(generate_dataset(&env, Quality::Medium, 500, seed).unwrap());
        let features = FeatureMap::for_spec(&env_spec("pointmass-2d").unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = ApproximatorParams::init(actor_layers(4, 2, &[8]), &mut rng).unwrap();
        let pair = CriticPair::init(4, 2, &[8], &mut rng).unwrap();
        let cfg = ServerConfig {
            probe_size: 32,
            ..Default::default()
        };
        (ServerState::new(actor, pair, ds, features, &cfg, seed).unwrap(), rng)
    }

    fn upload(sender: u32, rng: &mut ChaCha8Rng, hidden: usize) -> ParamEnvelope {
        let pair = CriticPair::init(4, 2, &[hidden], rng).unwrap();
        ParamEnvelope::new(
            sender,
            0,
            PayloadKind::CriticPair,
            vec![pair.q1, pair.q2, pair.q1_target, pair.q2_target],
        )
    }

    #[test]
    fn mismatched_envelopes_rejected() {
        let (mut server, mut rng) = server_fixture(1);
        let cfg = ServerConfig {
            grad_steps: 2,
            batch_size: 8,
            mu_samples: 2,
            probe_size: 32,
            ..Default::default()
        };
        let envs = vec![upload(0, &mut rng, 8), upload(1, &mut rng, 9), upload(2, &mut rng, 8)];
        let summary = server_ensemble_update(&mut server, &envs, &cfg, 0.99, &mut rng).unwrap();
        assert_eq!(summary.accepted, vec![0, 2]);
        assert_eq!(summary.rejected, vec![1]);
        assert_eq!(server.heads.len(), 4);
        assert_eq!(server.round, 1);

        let bad = vec![upload(5, &mut rng, 3)];
        assert!(matches!(
            server_ensemble_update(&mut server, &bad, &cfg, 0.99, &mut rng),
            Err(Error::NoEnvelopes(1))
        ));
    }

    #[test]
    fn broadcast_pair_is_most_pessimistic() {
        let (mut server, mut rng) = server_fixture(2);
        let cfg = ServerConfig {
            grad_steps: 1,
            batch_size: 8,
            mu_samples: 2,
            probe_size: 32,
            ..Default::default()
        };
        let envs: Vec<_> = (0..3).map(|k| upload(k, &mut rng, 8)).collect();
        server_ensemble_update(&mut server, &envs, &cfg, 0.99, &mut rng).unwrap();
        let mean_q = |h: &ApproximatorParams| {
            server
                .probe
                .transitions
                .iter()
                .map(|t| h.forward(&state_action(&t.state, &t.action)).unwrap()[0])
                .sum::<f64>()
        };
        let [a, b] = server.broadcast_heads();
        assert_ne!(a, b);
        for (i, h) in server.heads.iter().enumerate() {
            if i != a && i != b {
                assert!(mean_q(h) >= mean_q(&server.heads[a]).max(mean_q(&server.heads[b])));
            }
        }
    }

    #[test]
    fn broadcast_envelopes_round_trip() {
        let (server, _) = server_fixture(3);
        let actor = ParamEnvelope::from_bytes(&server.actor_envelope().unwrap().to_bytes()).unwrap();
        assert_eq!(actor.params[0], server.actor);
        assert_eq!(log_std_from_params(&actor.params[1]), server.log_std);
        let critics = ParamEnvelope::from_bytes(&server.critic_envelope().unwrap().to_bytes()).unwrap();
        assert_eq!(critics.params[0], server.heads[0]);
    }

    #[test]
    fn stochastic_mode_keeps_log_std_in_range() {
        let (mut server, mut rng) = server_fixture(4);
        let cfg = ServerConfig {
            beta_ent: 50.0,
            grad_steps: 20,
            batch_size: 8,
            mu_samples: 2,
            actor_lr: 0.5,
            probe_size: 32,
            ..Default::default()
        };
        let envs = vec![upload(0, &mut rng, 8)];
        server_ensemble_update(&mut server, &envs, &cfg, 0.99, &mut rng).unwrap();
        assert!(server.log_std.iter().all(|l| (LOG_STD_MIN..=LOG_STD_MAX).contains(l)));
        assert_ne!(server.log_std, vec![LOG_STD_INIT; 2]);
    }
}
