//! Losses for local and baseline updates: the conservative critic loss,
//! the rectified actor objective and the TD3+BC actor objective, all with
//! analytic parameter gradients.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::approximator::{mlp_layers, Activation, ApproximatorParams};
use crate::env_suite::{ActionKind, Batch};
use crate::error::{check_dim, Error, Result};

/// Two online critic heads and their target copies. Critics map
/// `state ⊕ action` to a scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticPair {
    pub q1: ApproximatorParams,
    pub q2: ApproximatorParams,
    pub q1_target: ApproximatorParams,
    pub q2_target: ApproximatorParams,
}

impl CriticPair {
    /// Targets start as copies of the online heads.
    pub fn new(q1: ApproximatorParams, q2: ApproximatorParams) -> Result<Self> {
        let (t1, t2) = (q1.clone(), q2.clone());
        Self::with_targets(q1, q2, t1, t2)
    }

    pub fn with_targets(
        q1: ApproximatorParams,
        q2: ApproximatorParams,
        q1_target: ApproximatorParams,
        q2_target: ApproximatorParams,
    ) -> Result<Self> {
        if !(q1.same_shape(&q2) && q1.same_shape(&q1_target) && q1.same_shape(&q2_target)) {
            return Err(Error::Shape("critic heads and targets must share one layer header".into()));
        }
        if q1.output_dim() != 1 {
            return Err(Error::Shape(format!("critic output dim {} != 1", q1.output_dim())));
        }
        Ok(Self {
            q1,
            q2,
            q1_target,
            q2_target,
        })
    }

    pub fn init(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut dyn RngCore) -> Result<Self> {
        let layers = critic_layers(state_dim, action_dim, hidden);
        let q1 = ApproximatorParams::init(layers.clone(), rng)?;
        let q2 = ApproximatorParams::init(layers, rng)?;
        Self::new(q1, q2)
    }

    pub fn min_q(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let x = state_action(state, action);
        Ok(self.q1.forward(&x)?[0].min(self.q2.forward(&x)?[0]))
    }

    pub fn min_target_q(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let x = state_action(state, action);
        Ok(self.q1_target.forward(&x)?[0].min(self.q2_target.forward(&x)?[0]))
    }

    pub fn heads(&self) -> [&ApproximatorParams; 2] {
        [&self.q1, &self.q2]
    }
}

pub fn critic_layers(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Vec<crate::approximator::LayerSpec> {
    mlp_layers(state_dim + action_dim, hidden, 1, Activation::Tanh, Activation::Identity)
}

/// Deterministic actor with a tanh-squashed output in `[-1, 1]`.
pub fn actor_layers(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Vec<crate::approximator::LayerSpec> {
    mlp_layers(state_dim, hidden, action_dim, Activation::Tanh, Activation::Tanh)
}

#[inline]
pub fn state_action(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + action.len());
    x.extend_from_slice(state);
    x.extend_from_slice(action);
    x
}

fn default_omega_c() -> f64 {
    5.0
}
fn default_alpha_1() -> f64 {
    1.0
}
fn default_alpha_2() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    2.5
}
fn default_gamma() -> f64 {
    0.99
}
fn default_mu_samples() -> usize {
    10
}
fn default_mu_noise() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalLossConfig {
    /// Weight of the conservative penalty.
    #[serde(default = "default_omega_c")]
    pub omega_c: f64,
    /// Pull toward the rectified action.
    #[serde(default = "default_alpha_1")]
    pub alpha_1: f64,
    /// Pull toward the round-start global actor.
    #[serde(default = "default_alpha_2")]
    pub alpha_2: f64,
    /// TD3+BC normalization constant; the effective λ is this over mean |Q|.
    #[serde(default = "default_lambda")]
    pub lambda_td3bc: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Proposal actions per state for the conservative penalty.
    #[serde(default = "default_mu_samples")]
    pub mu_samples: usize,
    /// Gaussian noise added to actor proposals.
    #[serde(default = "default_mu_noise")]
    pub mu_noise: f64,
    /// Test hook: propose exactly the dataset action.
    #[serde(skip)]
    pub mu_from_dataset: bool,
}

impl Default for LocalLossConfig {
    fn default() -> Self {
        Self {
            omega_c: default_omega_c(),
            alpha_1: default_alpha_1(),
            alpha_2: default_alpha_2(),
            lambda_td3bc: default_lambda(),
            gamma: default_gamma(),
            mu_samples: default_mu_samples(),
            mu_noise: default_mu_noise(),
            mu_from_dataset: false,
        }
    }
}

impl LocalLossConfig {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.omega_c, self.alpha_1, self.alpha_2, self.lambda_td3bc, self.mu_noise];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("loss coefficients must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.mu_samples == 0 {
            return Err(Error::Config("mu_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// `r + γ (1 - done) min(Q1', Q2')(s', π(s'))`, computed without gradients.
pub fn bellman_target(pair: &CriticPair, actor: &ApproximatorParams, batch: &Batch, gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    batch
        .transitions
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let y = if t.terminal || gamma == 0.0 {
                t.reward
            } else {
                let next_action = actor.forward(&t.next_state)?;
                t.reward + gamma * pair.min_target_q(&t.next_state, &next_action)?
            };
            if y.is_finite() {
                Ok(y)
            } else {
                Err(Error::NonFinite(format!("Bellman target for row {j}")))
            }
        })
        .collect()
}

/// Proposal actions for the conservative penalty: half from the actor with
/// clipped Gaussian noise, the rest uniform over `[-1, 1]^d`.
pub fn sample_proposals(
    actor: &ApproximatorParams,
    batch: &Batch,
    cfg: &LocalLossConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if cfg.mu_from_dataset {
        return Ok(batch.transitions.iter().map(|t| vec![t.action.clone()]).collect());
    }
    let n_actor = cfg.mu_samples / 2;
    batch
        .transitions
        .iter()
        .map(|t| {
            let mean = actor.forward(&t.state)?;
            let mut proposals = Vec::with_capacity(cfg.mu_samples);
            for m in 0..cfg.mu_samples {
                let a: Vec<f64> = if m < n_actor {
                    mean.iter()
                        .map(|mu| {
                            let eps: f64 = StandardNormal.sample(&mut *rng);
                            (mu + cfg.mu_noise * eps).clamp(-1.0, 1.0)
                        })
                        .collect()
                } else {
                    (0..mean.len()).map(|_| rng.random_range(-1.0..1.0)).collect()
                };
                proposals.push(a);
            }
            Ok(proposals)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct CriticLoss {
    /// Sum over both heads.
    pub loss: f64,
    pub bellman_term: f64,
    pub penalty_term: f64,
    pub grad_q1: Vec<f64>,
    pub grad_q2: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Conservative critic loss for both heads:
/// `½ mean (Q(s,a) - y)² + ω (mean_{a~μ} Q(s,a) - mean_D Q(s,a))`.
pub fn cql_critic_loss(
    pair: &CriticPair,
    actor: &ApproximatorParams,
    batch: &Batch,
    cfg: &LocalLossConfig,
    rng: &mut dyn RngCore,
) -> Result<CriticLoss> {
    let targets = bellman_target(pair, actor, batch, cfg.gamma)?;
    let proposals = if cfg.omega_c > 0.0 || cfg.mu_from_dataset {
        sample_proposals(actor, batch, cfg, rng)?
    } else {
        Vec::new()
    };
    let (b1, p1, grad_q1) = conservative_head_loss(&pair.q1, batch, &targets, &proposals, cfg.omega_c)?;
    let (b2, p2, grad_q2) = conservative_head_loss(&pair.q2, batch, &targets, &proposals, cfg.omega_c)?;
    let loss = b1 + p1 + b2 + p2;
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    Ok(CriticLoss {
        loss,
        bellman_term: b1 + b2,
        penalty_term: p1 + p2,
        grad_q1,
        grad_q2,
        targets,
    })
}

/// One head's regression + conservative penalty. Returns `(bellman, penalty, grad)`.
pub(crate) fn conservative_head_loss(
    head: &ApproximatorParams,
    batch: &Batch,
    targets: &[f64],
    proposals: &[Vec<Vec<f64>>],
    omega: f64,
) -> Result<(f64, f64, Vec<f64>)> {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; head.len()];
    let mut bellman = 0.0;
    let mut penalty = 0.0;
    for (j, t) in batch.transitions.iter().enumerate() {
        let trace = head.forward_traced(&state_action(&t.state, &t.action))?;
        let q = trace.output()[0];
        let err = q - targets[j];
        bellman += 0.5 * err * err / n;
        let mut up = err / n;
        if let Some(props) = proposals.get(j) {
            up -= omega / n;
            let m = props.len() as f64;
            let mut q_mu = 0.0;
            for a in props {
                let tr = head.forward_traced(&state_action(&t.state, a))?;
                q_mu += tr.output()[0];
                head.backward(&tr, &[omega / (n * m)], &mut grad)?;
            }
            penalty += omega * (q_mu / m - q) / n;
        }
        head.backward(&trace, &[up], &mut grad)?;
    }
    Ok((bellman, penalty, grad))
}

#[derive(Clone, Debug)]
pub struct ActorLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Value and action-gradient of `min(Q1, Q2)` at `(state, action)`; ties use Q1.
pub(crate) fn min_head_with_action_grad(pair: &CriticPair, state: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
    let x = state_action(state, action);
    let t1 = pair.q1.forward_traced(&x)?;
    let t2 = pair.q2.forward_traced(&x)?;
    let (head, trace) = if t1.output()[0] <= t2.output()[0] {
        (&pair.q1, t1)
    } else {
        (&pair.q2, t2)
    };
    let gx = head.input_gradient(&trace, &[1.0])?;
    Ok((trace.output()[0], gx[state.len()..].to_vec()))
}

/// `-mean Q̂(s, π(s)) + α1 mean |π(s) - â|² + α2 mean |π(s) - π₀(s)|²`
/// with `Q̂` the minimum of the two online heads.
pub fn rectified_actor_loss(
    actor: &ApproximatorParams,
    pair: &CriticPair,
    batch: &Batch,
    rectified_actions: &[Vec<f64>],
    global_actor_snapshot: &ApproximatorParams,
    cfg: &LocalLossConfig,
) -> Result<ActorLoss> {
    check_dim("rectified action rows", batch.len(), rectified_actions.len())?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; actor.len()];
    let mut loss = 0.0;
    for (t, rect) in batch.transitions.iter().zip(rectified_actions) {
        let trace = actor.forward_traced(&t.state)?;
        let a = trace.output();
        check_dim("rectified action", a.len(), rect.len())?;
        let (q, dq) = min_head_with_action_grad(pair, &t.state, a)?;
        let anchor = global_actor_snapshot.forward(&t.state)?;
        let mut up = vec![0.0; a.len()];
        let mut row = -q;
        for d in 0..a.len() {
            let to_rect = a[d] - rect[d];
            let to_anchor = a[d] - anchor[d];
            row += cfg.alpha_1 * to_rect * to_rect + cfg.alpha_2 * to_anchor * to_anchor;
            up[d] = (-dq[d] + 2.0 * cfg.alpha_1 * to_rect + 2.0 * cfg.alpha_2 * to_anchor) / n;
        }
        loss += row / n;
        actor.backward(&trace, &up, &mut grad)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("actor loss".into()));
    }
    Ok(ActorLoss { loss, grad })
}

/// `-λ mean Q1(s, π(s)) + mean |π(s) - a|²`.
pub fn td3bc_actor_loss(actor: &ApproximatorParams, pair: &CriticPair, batch: &Batch, lambda: f64) -> Result<ActorLoss> {
    if batch.action_kind == ActionKind::Discrete {
        return Err(Error::Unsupported("TD3+BC needs a continuous action space".into()));
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; actor.len()];
    let mut loss = 0.0;
    for t in &batch.transitions {
        let trace = actor.forward_traced(&t.state)?;
        let a = trace.output();
        let ct = pair.q1.forward_traced(&state_action(&t.state, a))?;
        let dq = pair.q1.input_gradient(&ct, &[1.0])?;
        let mut row = -lambda * ct.output()[0];
        let mut up = vec![0.0; a.len()];
        for d in 0..a.len() {
            let diff = a[d] - t.action[d];
            row += diff * diff;
            up[d] = (-lambda * dq[t.state.len() + d] + 2.0 * diff) / n;
        }
        loss += row / n;
        actor.backward(&trace, &up, &mut grad)?;
    }
    Ok(ActorLoss { loss, grad })
}

/// `λ = α_bc / mean |Q1(s, π(s))|` over the batch, treated as a constant.
pub fn td3bc_lambda(alpha_bc: f64, actor: &ApproximatorParams, pair: &CriticPair, batch: &Batch) -> Result<f64> {
    let mut total = 0.0;
    for t in &batch.transitions {
        let a = actor.forward(&t.state)?;
        total += pair.q1.forward(&state_action(&t.state, &a))?[0].abs();
    }
    let mean_abs = total / batch.len().max(1) as f64;
    Ok(alpha_bc / mean_abs.max(1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::LayerSpec;
    use crate::env_suite::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_critic(value: f64, in_dim: usize) -> ApproximatorParams {
        let mut values = vec![0.0; in_dim + 1];
        values[in_dim] = value;
        ApproximatorParams::from_values(vec![LayerSpec::new(in_dim, 1, Activation::Identity)], values).unwrap()
    }

    fn transition(s: &[f64], a: &[f64], r: f64, s2: &[f64], terminal: bool) -> Transition {
        Transition {
            state: s.to_vec(),
            action: a.to_vec(),
            reward: r,
            next_state: s2.to_vec(),
            terminal,
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, s_dim: usize, a_dim: usize) -> Batch {
        let rows = (0..n)
            .map(|i| {
                let s: Vec<f64> = (0..s_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a: Vec<f64> = (0..a_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let s2: Vec<f64> = (0..s_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                transition(&s, &a, rng.random_range(-1.0..0.0), &s2, i % 5 == 4)
            })
            .collect();
        Batch::new(rows, ActionKind::Continuous)
    }

    fn small_setup(seed: u64) -> (ChaCha8Rng, ApproximatorParams, CriticPair, Batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = ApproximatorParams::init(actor_layers(3, 2, &[5]), &mut rng).unwrap();
        let mut pair = CriticPair::init(3, 2, &[6], &mut rng).unwrap();
        pair.q1_target = ApproximatorParams::init(critic_layers(3, 2, &[6]), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 6, 3, 2);
        (rng, actor, pair, batch)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        num / den.max(1e-12)
    }

    fn finite_difference(params: &ApproximatorParams, f: impl Fn(&ApproximatorParams) -> f64) -> Vec<f64> {
        let h = 1e-5;
        (0..params.len())
            .map(|k| {
                let mut p = params.clone();
                p.values_mut()[k] += h;
                let fp = f(&p);
                p.values_mut()[k] -= 2.0 * h;
                let fm = f(&p);
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn terminal_and_zero_discount_targets() {
        let pair = CriticPair::new(constant_critic(3.0, 2), constant_critic(4.0, 2)).unwrap();
        let actor = ApproximatorParams::zeros(actor_layers(1, 1, &[])).unwrap();
        let batch = Batch::new(
            vec![transition(&[0.0], &[0.0], 1.0, &[1.0], true), transition(&[0.0], &[0.0], -2.0, &[1.0], false)],
            ActionKind::Continuous,
        );
        let y = bellman_target(&pair, &actor, &batch, 0.9).unwrap();
        assert_eq!(y[0], 1.0);
        assert!((y[1] - (-2.0 + 0.9 * 3.0)).abs() < 1e-15);
        assert_eq!(bellman_target(&pair, &actor, &batch, 0.0).unwrap(), vec![1.0, -2.0]);
        let empty = Batch::new(vec![], ActionKind::Continuous);
        assert!(bellman_target(&pair, &actor, &empty, 0.9).is_err());
    }

    #[test]
    fn target_uses_min_of_constant_heads() {
        let pair = CriticPair::with_targets(
            constant_critic(0.0, 2),
            constant_critic(0.0, 2),
            constant_critic(2.0, 2),
            constant_critic(5.0, 2),
        )
        .unwrap();
        let actor = ApproximatorParams::zeros(actor_layers(1, 1, &[])).unwrap();
        let batch = Batch::new(vec![transition(&[0.3], &[0.1], 0.0, &[0.2], false)], ActionKind::Continuous);
        let y = bellman_target(&pair, &actor, &batch, 0.9).unwrap();
        assert!((y[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn penalty_off_is_plain_fitted_q() {
        let (mut rng, actor, pair, batch) = small_setup(1);
        let cfg = LocalLossConfig {
            omega_c: 0.0,
            gamma: 0.9,
            ..Default::default()
        };
        let out = cql_critic_loss(&pair, &actor, &batch, &cfg, &mut rng).unwrap();
        // independent MSE
        let mut expected = 0.0;
        for head in [&pair.q1, &pair.q2] {
            for t in &batch.transitions {
                let y = if t.terminal {
                    t.reward
                } else {
                    let a2 = actor.forward(&t.next_state).unwrap();
                    let x2 = state_action(&t.next_state, &a2);
                    t.reward + 0.9 * pair.q1_target.forward(&x2).unwrap()[0].min(pair.q2_target.forward(&x2).unwrap()[0])
                };
                let q = head.forward(&state_action(&t.state, &t.action)).unwrap()[0];
                expected += 0.5 * (q - y).powi(2) / batch.len() as f64;
            }
        }
        assert!((out.loss - expected).abs() < 1e-12);
        assert_eq!(out.penalty_term, 0.0);
    }

    #[test]
    fn dataset_proposals_zero_the_penalty() {
        let (mut rng, actor, pair, batch) = small_setup(2);
        let cfg = LocalLossConfig {
            mu_from_dataset: true,
            ..Default::default()
        };
        let out = cql_critic_loss(&pair, &actor, &batch, &cfg, &mut rng).unwrap();
        assert_eq!(out.penalty_term, 0.0);
    }

    #[test]
    fn constant_critic_bellman_term_by_hand() {
        // two rows, both heads constant 1.5, targets: terminal r=1 -> 1, and r=0.5 + 0.9 * 1.5
        let c = constant_critic(1.5, 2);
        let pair = CriticPair::new(c.clone(), c).unwrap();
        let actor = ApproximatorParams::zeros(actor_layers(1, 1, &[])).unwrap();
        let batch = Batch::new(
            vec![transition(&[0.0], &[0.2], 1.0, &[0.0], true), transition(&[0.5], &[-0.2], 0.5, &[0.1], false)],
            ActionKind::Continuous,
        );
        let cfg = LocalLossConfig {
            omega_c: 0.0,
            gamma: 0.9,
            ..Default::default()
        };
        let out = cql_critic_loss(&pair, &actor, &batch, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let hand = ((1.5f64 - 1.0).powi(2) + (1.5f64 - (0.5 + 0.9 * 1.5)).powi(2)) / 2.0;
        assert!((out.bellman_term - hand).abs() < 1e-15);
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        for seed in 0..20 {
            let (rng, actor, pair, batch) = small_setup(100 + seed);
            let cfg = LocalLossConfig {
                mu_samples: 3,
                gamma: 0.95,
                ..Default::default()
            };
            let out = cql_critic_loss(&pair, &actor, &batch, &cfg, &mut rng.clone()).unwrap();
            let fd1 = finite_difference(&pair.q1, |p| {
                let mut pr = pair.clone();
                pr.q1 = p.clone();
                cql_critic_loss(&pr, &actor, &batch, &cfg, &mut rng.clone()).unwrap().loss
            });
            let fd2 = finite_difference(&pair.q2, |p| {
                let mut pr = pair.clone();
                pr.q2 = p.clone();
                cql_critic_loss(&pr, &actor, &batch, &cfg, &mut rng.clone()).unwrap().loss
            });
            assert!(rel_err(&out.grad_q1, &fd1) <= 1e-4);
            assert!(rel_err(&out.grad_q2, &fd2) <= 1e-4);
        }
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        for seed in 0..20 {
            let (mut rng, actor, pair, batch) = small_setup(200 + seed);
            let snapshot = ApproximatorParams::init(actor_layers(3, 2, &[5]), &mut rng).unwrap();
            let rect: Vec<Vec<f64>> = (0..batch.len())
                .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            let cfg = LocalLossConfig::default();
            let out = rectified_actor_loss(&actor, &pair, &batch, &rect, &snapshot, &cfg).unwrap();
            let fd = finite_difference(&actor, |p| {
                rectified_actor_loss(p, &pair, &batch, &rect, &snapshot, &cfg).unwrap().loss
            });
            assert!(rel_err(&out.grad, &fd) <= 1e-4, "seed {seed}");

            let bc = td3bc_actor_loss(&actor, &pair, &batch, 0.7).unwrap();
            let fd = finite_difference(&actor, |p| td3bc_actor_loss(p, &pair, &batch, 0.7).unwrap().loss);
            assert!(rel_err(&bc.grad, &fd) <= 1e-4, "seed {seed}");
        }
    }

    #[test]
    fn pure_q_maximization_when_penalties_off() {
        let (_, actor, pair, batch) = small_setup(3);
        let cfg = LocalLossConfig {
            alpha_1: 0.0,
            alpha_2: 0.0,
            ..Default::default()
        };
        let rect: Vec<Vec<f64>> = vec![vec![0.9, 0.9]; batch.len()];
        let out = rectified_actor_loss(&actor, &pair, &batch, &rect, &actor, &cfg).unwrap();
        // ∂(-mean min Q(s, π(s)))/∂θ by direct chain rule
        let mut expected = vec![0.0; actor.len()];
        for t in &batch.transitions {
            let trace = actor.forward_traced(&t.state).unwrap();
            let (_, dq) = min_head_with_action_grad(&pair, &t.state, trace.output()).unwrap();
            let up: Vec<f64> = dq.iter().map(|g| -g / batch.len() as f64).collect();
            actor.backward(&trace, &up, &mut expected).unwrap();
        }
        assert!(rel_err(&out.grad, &expected) < 1e-12);
    }

    #[test]
    fn penalties_vanish_when_actor_matches_targets() {
        let (_, actor, _, batch) = small_setup(4);
        let zero = constant_critic(0.0, 5);
        let pair = CriticPair::new(zero.clone(), zero).unwrap();
        let rect: Vec<Vec<f64>> = batch.transitions.iter().map(|t| actor.forward(&t.state).unwrap()).collect();
        let out = rectified_actor_loss(&actor, &pair, &batch, &rect, &actor, &LocalLossConfig::default()).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn large_alpha_1_drives_actor_to_rectified_actions() {
        use crate::approximator::OptimizerState;
        let (mut rng, mut actor, pair, batch) = small_setup(5);
        let snapshot = actor.clone();
        let rect: Vec<Vec<f64>> = (0..batch.len())
            .map(|_| vec![rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)])
            .collect();
        let cfg = LocalLossConfig {
            alpha_1: 1000.0,
            alpha_2: 0.0,
            ..Default::default()
        };
        let mut opt = OptimizerState::adam(actor.len(), 1e-2);
        for _ in 0..4000 {
            let out = rectified_actor_loss(&actor, &pair, &batch, &rect, &snapshot, &cfg).unwrap();
            opt.step(&mut actor, &out.grad).unwrap();
        }
        for (t, r) in batch.transitions.iter().zip(&rect) {
            let a = actor.forward(&t.state).unwrap();
            for d in 0..2 {
                assert!((a[d] - r[d]).abs() < 1e-3, "{a:?} vs {r:?}");
            }
        }
    }

    #[test]
    fn row_mismatch_is_an_error() {
        let (_, actor, pair, batch) = small_setup(6);
        let rect = vec![vec![0.0, 0.0]; batch.len() - 1];
        assert!(rectified_actor_loss(&actor, &pair, &batch, &rect, &actor, &LocalLossConfig::default()).is_err());
    }

    #[test]
    fn td3bc_behavior_cloning_terms() {
        let (_, actor, pair, batch) = small_setup(7);
        // λ = 0 and π(s) = a → zero loss
        let matched = Batch::new(
            batch
                .transitions
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    t.action = actor.forward(&t.state).unwrap();
                    t
                })
                .collect(),
            ActionKind::Continuous,
        );
        let out = td3bc_actor_loss(&actor, &pair, &matched, 0.0).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.iter().all(|g| *g == 0.0));

        let discrete = Batch::new(matched.transitions.clone(), ActionKind::Discrete);
        assert!(matches!(td3bc_actor_loss(&actor, &pair, &discrete, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn td3bc_lambda_on_two_rows() {
        let pair = CriticPair::new(constant_critic(-4.0, 2), constant_critic(9.0, 2)).unwrap();
        let actor = ApproximatorParams::zeros(actor_layers(1, 1, &[])).unwrap();
        let batch = Batch::new(
            vec![transition(&[0.0], &[0.0], 0.0, &[0.0], false), transition(&[1.0], &[0.5], 0.0, &[0.0], false)],
            ActionKind::Continuous,
        );
        // mean |Q1| = 4 → λ = 2.5 / 4
        let lambda = td3bc_lambda(2.5, &actor, &pair, &batch).unwrap();
        assert!((lambda - 0.625).abs() < 1e-15);
    }
}
