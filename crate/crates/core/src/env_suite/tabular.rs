//! Finite MDPs with explicit transition tensors.

use crate::error::{check_dim, Error, Result};

const ROW_TOLERANCE: f64 = 1e-12;

/// `(S, A, P, R, mu0, gamma)` stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Indexed `[(s * n_actions + a) * n_states + s']`.
    transitions: Vec<f64>,
    /// Indexed `[s * n_actions + a]`.
    rewards: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument("MDP needs at least one state and action".into()));
        }
        check_dim("transition tensor", n_states * n_actions * n_states, transitions.len())?;
        check_dim("reward table", n_states * n_actions, rewards.len())?;
        check_dim("initial distribution", n_states, initial.len())?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("discount {gamma} outside [0, 1]")));
        }
        for (row_idx, row) in transitions.chunks_exact(n_states).enumerate() {
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "transition row (s={}, a={}) has a negative or non-finite entry",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "transition row (s={}, a={}) sums to {total}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward table".into()));
        }
        if initial.iter().any(|p| *p < 0.0) || (initial.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidArgument("initial distribution is not a distribution".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
            initial,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// Next-state distribution for `(s, a)`.
    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            self.rewards.clone(),
            gamma,
            self.initial.clone(),
        )
    }

    /// Three-state chain, actions {left, right}, reward 1 for every step
    /// spent in the rightmost state, start in the leftmost state.
    pub fn chain3() -> Self {
        let (n_s, n_a) = (3, 2);
        let mut p = vec![0.0; n_s * n_a * n_s];
        let mut r = vec![0.0; n_s * n_a];
        for s in 0..n_s {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(n_s - 1);
            p[(s * n_a) * n_s + left] = 1.0;
            p[(s * n_a + 1) * n_s + right] = 1.0;
            if s == n_s - 1 {
                r[s * n_a] = 1.0;
                r[s * n_a + 1] = 1.0;
            }
        }
        Self::new(n_s, n_a, p, r, 0.9, vec![1.0, 0.0, 0.0]).expect("chain-3 is well formed")
    }

    /// 5x5 grid, actions {up, down, left, right}, 10% slip to a uniformly
    /// random direction, absorbing goal in the far corner paying 1 per step.
    pub fn gridworld5x5() -> Self {
        const SIDE: usize = 5;
        const SLIP: f64 = 0.1;
        let n_s = SIDE * SIDE;
        let n_a = 4;
        let goal = n_s - 1;
        let moves: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        let target = |s: usize, dir: usize| -> usize {
            let (row, col) = ((s / SIDE) as isize, (s % SIDE) as isize);
            let (nr, nc) = (row + moves[dir].0, col + moves[dir].1);
            if (0..SIDE as isize).contains(&nr) && (0..SIDE as isize).contains(&nc) {
                nr as usize * SIDE + nc as usize
            } else {
                s
            }
        };
        let mut p = vec![0.0; n_s * n_a * n_s];
        let mut r = vec![0.0; n_s * n_a];
        for s in 0..n_s {
            for a in 0..n_a {
                let row = (s * n_a + a) * n_s;
                if s == goal {
                    p[row + goal] = 1.0;
                    r[s * n_a + a] = 1.0;
                    continue;
                }
                p[row + target(s, a)] += 1.0 - SLIP;
                for dir in 0..n_a {
                    p[row + target(s, dir)] += SLIP / n_a as f64;
                }
            }
        }
        let mut initial = vec![0.0; n_s];
        initial[0] = 1.0;
        Self::new(n_s, n_a, p, r, 0.95, initial).expect("gridworld is well formed")
    }
}

/// Result of value iteration: optimal values, action values and a greedy policy.
#[derive(Clone, Debug)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub greedy: Vec<usize>,
    pub iterations: usize,
}

/// Standard Bellman-optimality iteration until the sup-norm change is below `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iterations: usize) -> ValueIterationResult {
    let (n_s, n_a) = (mdp.n_states, mdp.n_actions);
    let mut v = vec![0.0; n_s];
    let mut q = vec![0.0; n_s * n_a];
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        for s in 0..n_s {
            for a in 0..n_a {
                let next: f64 = mdp.next_distribution(s, a).iter().zip(&v).map(|(p, vn)| p * vn).sum();
                q[s * n_a + a] = mdp.reward(s, a) + mdp.gamma * next;
            }
        }
        let mut delta: f64 = 0.0;
        for s in 0..n_s {
            let best = q[s * n_a..(s + 1) * n_a].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < tol {
            break;
        }
    }
    let greedy = (0..n_s)
        .map(|s| {
            let row = &q[s * n_a..(s + 1) * n_a];
            let mut best = 0;
            for a in 1..n_a {
                if row[a] > row[best] + 1e-12 {
                    best = a;
                }
            }
            best
        })
        .collect();
    ValueIterationResult {
        values: v,
        q_values: q,
        greedy,
        iterations,
    }
}
