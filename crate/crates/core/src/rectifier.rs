//! Zeroth-order action search over a critic and the δ-periodic cache rule.
//!
//! A search runs `iterations` rounds of: sample `population` actions from
//! an isotropic Gaussian, score them, refit the Gaussian with softmax
//! weights. The result for each state is the best action seen, with the
//! current actor's own action always in the running.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::approximator::ApproximatorParams;
use crate::error::{check_dim, Error, Result};
use crate::offline_core::CriticPair;

/// Floor applied to the search std between iterations.
pub const MIN_SEARCH_STD: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchDistribution {
    pub mean: Vec<f64>,
    pub std: f64,
}

fn default_population() -> usize {
    32
}
fn default_iterations() -> usize {
    5
}
fn default_beta_w() -> f64 {
    10.0
}
fn default_delta() -> u64 {
    5
}
fn default_init_std() -> f64 {
    0.5
}
fn default_enabled() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectifierConfig {
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Softmax temperature for the refit weights.
    #[serde(default = "default_beta_w")]
    pub beta_w: f64,
    /// Full searches happen at local steps that are multiples of this.
    #[serde(default = "default_delta")]
    pub delta: u64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// When false the device skips the search and the α1 pull vanishes.
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

impl Default for RectifierConfig {
    fn default() -> Self {
        Self {
            population: default_population(),
            iterations: default_iterations(),
            beta_w: default_beta_w(),
            delta: default_delta(),
            init_std: default_init_std(),
            enabled: default_enabled(),
        }
    }
}

impl RectifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.iterations == 0 {
            return Err(Error::Config("population and iterations must be positive".into()));
        }
        if self.delta == 0 {
            return Err(Error::Config("delta must be at least 1".into()));
        }
        if !(self.beta_w > 0.0 && self.beta_w.is_finite()) || !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config("beta_w and init_std must be positive and finite".into()));
        }
        Ok(())
    }

    /// Critic evaluations per state for one full search.
    pub fn evals_per_state(&self) -> u64 {
        (self.iterations * self.population) as u64 + 1
    }
}

/// Rectified actions for the device's current minibatch, plus counters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RectifiedCache {
    actions: Vec<Vec<f64>>,
    last_full_search_step: Option<u64>,
    q_eval_count: u64,
    full_search_evals: u64,
}

impl RectifiedCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn last_full_search_step(&self) -> Option<u64> {
        self.last_full_search_step
    }

    /// All critic evaluations made by the rectifier.
    pub fn q_eval_count(&self) -> u64 {
        self.q_eval_count
    }

    /// The share of `q_eval_count` spent inside full searches.
    pub fn full_search_evals(&self) -> u64 {
        self.full_search_evals
    }

    /// Counts evaluations made outside [`periodic_rectify`].
    pub fn record_evals(&mut self, n: u64) {
        self.q_eval_count += n;
    }

    /// Drops cached actions but keeps the counters.
    pub fn invalidate(&mut self) {
        self.actions.clear();
        self.last_full_search_step = None;
    }
}

/// Anything that scores an action at a state.
pub trait ActionScorer {
    fn score(&self, state: &[f64], action: &[f64]) -> Result<f64>;
}

/// Pessimistic score: the smaller of the two online heads.
impl ActionScorer for CriticPair {
    fn score(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.min_q(state, action)
    }
}

impl<F> ActionScorer for F
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    fn score(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self(state, action))
    }
}

pub fn softmax_weights(q_values: &[f64], beta_w: f64) -> Result<Vec<f64>> {
    if q_values.is_empty() {
        return Err(Error::InvalidArgument("softmax over an empty vector".into()));
    }
    if q_values.iter().any(|q| !q.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let max = q_values.iter().fold(f64::NEG_INFINITY, |m, q| m.max(*q));
    let mut w: Vec<f64> = q_values.iter().map(|q| (beta_w * (q - max)).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Weighted mean of the candidates and the weighted RMS distance to it.
pub fn distribution_update(candidates: &[Vec<f64>], weights: &[f64]) -> Result<SearchDistribution> {
    check_dim("distribution update weights", candidates.len(), weights.len())?;
    let Some(first) = candidates.first() else {
        return Err(Error::InvalidArgument("empty candidate set".into()));
    };
    let dim = first.len();
    let mut mean = vec![0.0; dim];
    for (c, w) in candidates.iter().zip(weights) {
        check_dim("candidate action", dim, c.len())?;
        for (m, x) in mean.iter_mut().zip(c) {
            *m += w * x;
        }
    }
    let var: f64 = candidates
        .iter()
        .zip(weights)
        .map(|(c, w)| w * c.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum();
    Ok(SearchDistribution {
        mean,
        std: var.max(0.0).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub actions: Vec<Vec<f64>>,
    pub q_evals: u64,
}

/// Search one state. Ties keep the actor's action, then the earliest candidate.
fn search_state(
    scorer: &dyn ActionScorer,
    state: &[f64],
    actor_action: &[f64],
    cfg: &RectifierConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let mut best = actor_action.to_vec();
    let mut best_q = scorer.score(state, actor_action)?;
    let mut dist = SearchDistribution {
        mean: actor_action.to_vec(),
        std: cfg.init_std,
    };
    let mut candidates = vec![vec![0.0; actor_action.len()]; cfg.population];
    let mut scores = vec![0.0; cfg.population];
    for _ in 0..cfg.iterations {
        for (cand, q) in candidates.iter_mut().zip(scores.iter_mut()) {
            for (c, m) in cand.iter_mut().zip(&dist.mean) {
                let eps: f64 = StandardNormal.sample(&mut *rng);
                *c = (m + dist.std * eps).clamp(-1.0, 1.0);
            }
            *q = scorer.score(state, cand)?;
            if *q > best_q {
                best_q = *q;
                best.clone_from(cand);
            }
        }
        let w = softmax_weights(&scores, cfg.beta_w)?;
        dist = distribution_update(&candidates, &w)?;
        dist.std = dist.std.max(MIN_SEARCH_STD);
    }
    Ok(best)
}

pub fn full_search(
    scorer: &dyn ActionScorer,
    states: &[Vec<f64>],
    actor: &ApproximatorParams,
    cfg: &RectifierConfig,
    rng: &mut dyn RngCore,
) -> Result<SearchOutcome> {
    let actions = states
        .iter()
        .map(|s| {
            let a = actor.forward(s)?;
            search_state(scorer, s, &a, cfg, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchOutcome {
        q_evals: cfg.evals_per_state() * states.len() as u64,
        actions,
    })
}

/// Full search on steps that are multiples of `delta`; otherwise keep the
/// better of the cached action and the actor's action for each state.
/// Between refreshes the caller must pass the same states.
pub fn periodic_rectify(
    cache: &mut RectifiedCache,
    tau: u64,
    scorer: &dyn ActionScorer,
    states: &[Vec<f64>],
    actor: &ApproximatorParams,
    cfg: &RectifierConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<f64>>> {
    if cfg.delta == 0 {
        return Err(Error::Config("delta must be at least 1".into()));
    }
    if tau.is_multiple_of(cfg.delta) {
        let out = full_search(scorer, states, actor, cfg, rng)?;
        cache.q_eval_count += out.q_evals;
        cache.full_search_evals += out.q_evals;
        cache.last_full_search_step = Some(tau);
        cache.actions = out.actions;
        return Ok(cache.actions.clone());
    }
    if cache.last_full_search_step.is_none() {
        return Err(Error::InvalidArgument(format!("step {tau} reuses an empty rectifier cache")));
    }
    check_dim("rectifier cache rows", cache.actions.len(), states.len())?;
    for (s, cached) in states.iter().zip(cache.actions.iter_mut()) {
        let a = actor.forward(s)?;
        let q_actor = scorer.score(s, &a)?;
        let q_cached = scorer.score(s, cached)?;
        if q_actor >= q_cached {
            *cached = a;
        }
    }
    cache.q_eval_count += 2 * states.len() as u64;
    Ok(cache.actions.clone())
}
