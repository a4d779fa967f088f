//! Exact tabular oracles and the safe-policy-improvement bound checker.
//!
//! Policy values and visitation distributions come from dense linear
//! solves, which is exact up to floating point for the small MDPs here.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::env_suite::{discrete_index, sample_categorical, OfflineDataset, Policy, TabularMdp};
use crate::error::{check_dim, Error, Result};

const ROW_TOLERANCE: f64 = 1e-12;
/// Slack on the bound comparison.
pub const BOUND_SLACK: f64 = 1e-9;

/// Row-stochastic action probabilities indexed `[s * n_actions + a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument("policy needs at least one state and action".into()));
        }
        check_dim("policy table", n_states * n_actions, probs.len())?;
        for (s, row) in probs.chunks_exact(n_actions).enumerate() {
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidArgument(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, a) in actions.iter().enumerate() {
            if *a >= n_actions {
                return Err(Error::InvalidArgument(format!("action {a} in state {s} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(n_states, n_actions, vec![1.0 / n_actions as f64; n_states * n_actions])
    }

    /// `1 - ε` on the greedy action plus `ε` spread uniformly over all actions.
    pub fn epsilon_greedy(greedy: &[usize], n_actions: usize, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
        }
        let base = Self::deterministic(greedy, n_actions)?;
        let probs = base
            .probs
            .iter()
            .map(|p| (1.0 - epsilon) * p + epsilon / n_actions as f64)
            .collect();
        Self::new(greedy.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// The chosen action per state if every row is one-hot.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().position(|p| *p == 1.0))
            .collect()
    }

    /// Expected embedded action per state.
    pub fn mean_embedding(&self, embedding: &[f64]) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().zip(embedding).map(|(p, e)| p * e).sum())
            .collect()
    }

    fn check_against(&self, mdp: &TabularMdp) -> Result<()> {
        check_dim("policy states", mdp.n_states(), self.n_states)?;
        check_dim("policy actions", mdp.n_actions(), self.n_actions)
    }
}

impl Policy for TabularPolicy {
    fn act(&self, state: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        check_dim("tabular state", 1, state.len())?;
        let s = discrete_index(state[0], self.n_states)?;
        Ok(vec![sample_categorical(self.row(s), rng) as f64])
    }
}

/// Action index mapped linearly onto `[-1, 1]`.
pub fn default_action_embedding(n_actions: usize) -> Vec<f64> {
    if n_actions == 1 {
        return vec![0.0];
    }
    (0..n_actions).map(|a| -1.0 + 2.0 * a as f64 / (n_actions - 1) as f64).collect()
}

/// `(P_π, r_π)` as a dense matrix and vector.
fn induced_chain(mdp: &TabularMdp, policy: &TabularPolicy) -> (DMatrix<f64>, DVector<f64>) {
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r[s] += w * mdp.reward(s, a);
            for (s2, q) in mdp.next_distribution(s, a).iter().enumerate() {
                p[(s, s2)] += w * q;
            }
        }
    }
    (p, r)
}

fn resolvent(mdp: &TabularMdp, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if mdp.gamma() >= 1.0 {
        return Err(Error::Singular(format!("I - γP is singular for γ = {}", mdp.gamma())));
    }
    Ok(DMatrix::identity(p.nrows(), p.ncols()) - p * mdp.gamma())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValue {
    pub values: Vec<f64>,
    /// Initial-distribution-weighted value.
    pub j: f64,
}

pub fn exact_policy_value(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<PolicyValue> {
    policy.check_against(mdp)?;
    let (p, r) = induced_chain(mdp, policy);
    let a = resolvent(mdp, &p)?;
    let v = a
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Singular("policy evaluation system".into()))?;
    let values: Vec<f64> = v.iter().copied().collect();
    let j = values.iter().zip(mdp.initial()).map(|(v, m)| v * m).sum();
    Ok(PolicyValue { values, j })
}

/// `‖V - (r_π + γ P_π V)‖∞`.
pub fn bellman_residual(mdp: &TabularMdp, policy: &TabularPolicy, values: &[f64]) -> Result<f64> {
    policy.check_against(mdp)?;
    check_dim("value vector", mdp.n_states(), values.len())?;
    let (p, r) = induced_chain(mdp, policy);
    let v = DVector::from_column_slice(values);
    let backup = r + p * &v * mdp.gamma();
    Ok((v - backup).amax())
}

/// Normalized discounted occupancy `(1 - γ) μ0ᵀ (I - γ P_π)⁻¹`.
pub fn visitation_distribution(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    policy.check_against(mdp)?;
    let (p, _) = induced_chain(mdp, policy);
    let a = resolvent(mdp, &p)?;
    let mu0 = DVector::from_column_slice(mdp.initial());
    let x = a
        .transpose()
        .lu()
        .solve(&mu0)
        .ok_or_else(|| Error::Singular("visitation system".into()))?;
    Ok(x.iter().map(|v| (1.0 - mdp.gamma()) * v).collect())
}

/// Monte-Carlo occupancy estimate: after each step the walk restarts from
/// `μ0` with probability `1 - γ`, so time spent per state is `d^π`.
pub fn monte_carlo_visitation(mdp: &TabularMdp, policy: &TabularPolicy, steps: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    policy.check_against(mdp)?;
    let mut counts = vec![0u64; mdp.n_states()];
    let mut s = sample_categorical(mdp.initial(), rng);
    for _ in 0..steps {
        counts[s] += 1;
        if rng.random::<f64>() >= mdp.gamma() {
            s = sample_categorical(mdp.initial(), rng);
        } else {
            let a = sample_categorical(policy.row(s), rng);
            s = sample_categorical(mdp.next_distribution(s, a), rng);
        }
    }
    Ok(counts.iter().map(|c| *c as f64 / steps as f64).collect())
}

/// Bound terms with expectations taken under a given pair of occupancies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub term_d: f64,
    pub term_quad_pi: f64,
    pub term_quad_beta: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    pub j_pi_star: f64,
    pub j_behavior: f64,
    pub term_d: f64,
    pub term_quad_pi: f64,
    pub term_quad_beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `V(s) - α D(s)` under the learned policy.
    pub shifted_values: Vec<f64>,
    /// Same terms with occupancies from the empirical model, when one is given.
    pub empirical: Option<BoundTerms>,
}

impl BoundReport {
    /// `lhs` and `rhs` agree with their component terms.
    pub fn is_self_consistent(&self) -> bool {
        let lhs = self.j_pi_star - self.j_behavior;
        let rhs = self.term_d + self.term_quad_pi - self.term_quad_beta;
        self.lhs == lhs && self.rhs == rhs && self.holds == (lhs >= rhs - BOUND_SLACK)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BoundOutcome {
    Report(BoundReport),
    /// The behavior policy never takes the learned action in these states.
    Inapplicable { states: Vec<usize> },
}

impl BoundOutcome {
    pub fn report(&self) -> Option<&BoundReport> {
        match self {
            BoundOutcome::Report(r) => Some(r),
            BoundOutcome::Inapplicable { .. } => None,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bound_terms(
    mdp: &TabularMdp,
    pi_actions: &[usize],
    pi_star: &TabularPolicy,
    behavior: &TabularPolicy,
    embedding: &[f64],
    alpha: f64,
    eta: f64,
    lhs: f64,
) -> Result<BoundTerms> {
    let gamma = mdp.gamma();
    let d_star = visitation_distribution(mdp, pi_star)?;
    let d_beta = visitation_distribution(mdp, behavior)?;
    let beta_mean = behavior.mean_embedding(embedding);
    let ratio = eta / (1.0 - eta);
    let mut e_d = 0.0;
    let mut e_quad_pi = 0.0;
    let mut e_quad_beta = 0.0;
    for s in 0..mdp.n_states() {
        let a = pi_actions[s];
        let b = behavior.prob(s, a);
        e_d += d_star[s] * (1.0 - b) / b;
        e_quad_pi += d_star[s] * (embedding[a] - beta_mean[s]).powi(2);
        let spread: f64 = behavior
            .row(s)
            .iter()
            .zip(embedding)
            .map(|(p, e)| p * (e - beta_mean[s]).powi(2))
            .sum();
        e_quad_beta += d_beta[s] * spread;
    }
    let term_d = alpha / (1.0 - gamma) * e_d;
    let term_quad_pi = ratio * e_quad_pi;
    let term_quad_beta = ratio * e_quad_beta;
    let rhs = term_d + term_quad_pi - term_quad_beta;
    Ok(BoundTerms {
        term_d,
        term_quad_pi,
        term_quad_beta,
        rhs,
        holds: lhs >= rhs - BOUND_SLACK,
    })
}

/// Evaluates both sides of the safe-improvement inequality exactly.
pub fn check_theorem1(
    mdp: &TabularMdp,
    pi_star: &TabularPolicy,
    behavior: &TabularPolicy,
    action_embedding: &[f64],
    alpha: f64,
    eta: f64,
) -> Result<BoundOutcome> {
    check_bound(mdp, None, pi_star, behavior, action_embedding, alpha, eta)
}

/// As [`check_theorem1`], additionally reporting the terms with occupancies
/// computed in `model` (typically an empirical MDP fitted to data).
pub fn check_theorem1_with_model(
    mdp: &TabularMdp,
    model: &TabularMdp,
    pi_star: &TabularPolicy,
    behavior: &TabularPolicy,
    action_embedding: &[f64],
    alpha: f64,
    eta: f64,
) -> Result<BoundOutcome> {
    check_bound(mdp, Some(model), pi_star, behavior, action_embedding, alpha, eta)
}

fn check_bound(
    mdp: &TabularMdp,
    model: Option<&TabularMdp>,
    pi_star: &TabularPolicy,
    behavior: &TabularPolicy,
    embedding: &[f64],
    alpha: f64,
    eta: f64,
) -> Result<BoundOutcome> {
    pi_star.check_against(mdp)?;
    behavior.check_against(mdp)?;
    check_dim("action embedding", mdp.n_actions(), embedding.len())?;
    if let Some(m) = model {
        check_dim("model states", mdp.n_states(), m.n_states())?;
        check_dim("model actions", mdp.n_actions(), m.n_actions())?;
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be non-negative")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta {eta} outside (0, 1)")));
    }
    let pi_actions = pi_star
        .as_deterministic()
        .ok_or_else(|| Error::InvalidArgument("learned policy must be deterministic".into()))?;
    let uncovered: Vec<usize> = (0..mdp.n_states())
        .filter(|s| behavior.prob(*s, pi_actions[*s]) == 0.0)
        .collect();
    if !uncovered.is_empty() {
        return Ok(BoundOutcome::Inapplicable { states: uncovered });
    }

    let star_value = exact_policy_value(mdp, pi_star)?;
    let j_behavior = exact_policy_value(mdp, behavior)?.j;
    let lhs = star_value.j - j_behavior;
    let terms = bound_terms(mdp, &pi_actions, pi_star, behavior, embedding, alpha, eta, lhs)?;
    let empirical = model
        .map(|m| bound_terms(m, &pi_actions, pi_star, behavior, embedding, alpha, eta, lhs))
        .transpose()?;
    let shifted_values = star_value
        .values
        .iter()
        .enumerate()
        .map(|(s, v)| {
            let b = behavior.prob(s, pi_actions[s]);
            v - alpha * (1.0 - b) / b
        })
        .collect();
    Ok(BoundOutcome::Report(BoundReport {
        alpha,
        eta,
        gamma: mdp.gamma(),
        j_pi_star: star_value.j,
        j_behavior,
        term_d: terms.term_d,
        term_quad_pi: terms.term_quad_pi,
        term_quad_beta: terms.term_quad_beta,
        lhs,
        rhs: terms.rhs,
        holds: terms.holds,
        shifted_values,
        empirical,
    }))
}

/// Count-based model of a tabular dataset. Unvisited pairs self-loop with
/// zero reward.
pub fn empirical_mdp(dataset: &OfflineDataset, reference: &TabularMdp) -> Result<TabularMdp> {
    let (ns, na) = (reference.n_states(), reference.n_actions());
    let mut counts = vec![0.0; ns * na * ns];
    let mut visits = vec![0.0; ns * na];
    let mut rewards = vec![0.0; ns * na];
    for t in dataset.transitions() {
        let s = discrete_index(t.state[0], ns)?;
        let a = discrete_index(t.action[0], na)?;
        let s2 = discrete_index(t.next_state[0], ns)?;
        counts[(s * na + a) * ns + s2] += 1.0;
        visits[s * na + a] += 1.0;
        rewards[s * na + a] += t.reward;
    }
    for sa in 0..ns * na {
        let row = &mut counts[sa * ns..(sa + 1) * ns];
        if visits[sa] == 0.0 {
            row[sa / na] = 1.0;
        } else {
            row.iter_mut().for_each(|c| *c /= visits[sa]);
            // keep rows exact after division
            let total: f64 = row.iter().sum();
            let last = row.iter().rposition(|c| *c > 0.0).unwrap_or(0);
            row[last] += 1.0 - total;
            rewards[sa] /= visits[sa];
        }
    }
    TabularMdp::new(ns, na, counts, rewards, reference.gamma(), reference.initial().to_vec())
}

/// Action frequencies per state; unvisited states get the uniform row.
pub fn empirical_behavior(dataset: &OfflineDataset, n_states: usize, n_actions: usize) -> Result<TabularPolicy> {
    let mut counts = vec![0.0; n_states * n_actions];
    for t in dataset.transitions() {
        let s = discrete_index(t.state[0], n_states)?;
        let a = discrete_index(t.action[0], n_actions)?;
        counts[s * n_actions + a] += 1.0;
    }
    for row in counts.chunks_exact_mut(n_actions) {
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            row.iter_mut().for_each(|p| *p = 1.0 / n_actions as f64);
        } else {
            row.iter_mut().for_each(|p| *p /= total);
            let sum: f64 = row.iter().sum();
            let last = row.iter().rposition(|p| *p > 0.0).unwrap_or(0);
            row[last] += 1.0 - sum;
        }
    }
    TabularPolicy::new(n_states, n_actions, counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularForlerConfig {
    /// Conservative penalty weight.
    pub omega_c: f64,
    pub alpha_1: f64,
    pub alpha_2: f64,
    pub policy_iterations: usize,
    pub evaluation_sweeps: usize,
}

impl Default for TabularForlerConfig {
    fn default() -> Self {
        Self {
            omega_c: 0.1,
            alpha_1: 1.0,
            alpha_2: 0.1,
            policy_iterations: 50,
            evaluation_sweeps: 500,
        }
    }
}

/// Tabular stand-in for the device update: conservative Q evaluation on
/// `model`, then per state the action maximizing
/// `Q(s,a) - α1 (e(a) - e(â(s)))² - α2 (e(a) - e(π0(s)))²` where `â` is the
/// exhaustive argmax of Q and `π0` the behavior's most likely action.
/// Returns a deterministic policy.
pub fn tabular_forler(
    model: &TabularMdp,
    behavior: &TabularPolicy,
    embedding: &[f64],
    cfg: &TabularForlerConfig,
) -> Result<TabularPolicy> {
    behavior.check_against(model)?;
    check_dim("action embedding", model.n_actions(), embedding.len())?;
    let (ns, na, gamma) = (model.n_states(), model.n_actions(), model.gamma());
    let anchor: Vec<usize> = (0..ns).map(|s| argmax(behavior.row(s))).collect();
    let mut policy = anchor.clone();
    let mut q = vec![0.0; ns * na];
    for _ in 0..cfg.policy_iterations {
        for _ in 0..cfg.evaluation_sweeps {
            let v: Vec<f64> = (0..ns).map(|s| q[s * na + policy[s]]).collect();
            for s in 0..ns {
                for a in 0..na {
                    let b = behavior.prob(s, a).max(1e-3);
                    let indicator = if a == policy[s] { 1.0 } else { 0.0 };
                    let next: f64 = model.next_distribution(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                    q[s * na + a] = model.reward(s, a) - cfg.omega_c * (indicator / b - 1.0) + gamma * next;
                }
            }
        }
        let next_policy: Vec<usize> = (0..ns)
            .map(|s| {
                let row = &q[s * na..(s + 1) * na];
                let best = argmax(row);
                let scores: Vec<f64> = (0..na)
                    .map(|a| {
                        row[a]
                            - cfg.alpha_1 * (embedding[a] - embedding[best]).powi(2)
                            - cfg.alpha_2 * (embedding[a] - embedding[anchor[s]]).powi(2)
                    })
                    .collect();
                argmax(&scores)
            })
            .collect();
        if next_policy == policy {
            break;
        }
        policy = next_policy;
    }
    TabularPolicy::deterministic(&policy, na)
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}
