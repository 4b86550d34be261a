//! Optimal values of the underlying fully observable MDP.
//!
//! `Q_MDP(s, a, k) = R(s, a) + γ Σ_{s'} T(s' | s, a) max_{a'} Q_MDP(s', a', k - 1)`
//! with `Q_MDP(s, a, 1) = R(s, a)`.

use std::collections::BTreeMap;

use crate::model::{decode_joint, encode_joint, Enumerable};
use crate::solver::tables::Tables;

/// Memo table of `Q_MDP` for every `(steps_remaining, state, joint action)`
/// up to a maximum number of steps.
#[derive(Debug, Clone)]
pub struct QMdpTable {
    num_states: usize,
    num_joint_actions: usize,
    max_steps: usize,
    q: Vec<f64>,
    v: Vec<f64>,
}

impl QMdpTable {
    pub fn new(tables: &Tables, max_steps: usize) -> Self {
        let ns = tables.num_states;
        let nja = tables.num_joint_actions;
        let mut q = vec![0.0; (max_steps + 1) * ns * nja];
        let mut v = vec![0.0; (max_steps + 1) * ns];
        for k in 1..=max_steps {
            for s in 0..ns {
                let mut best = f64::NEG_INFINITY;
                for ja in 0..nja {
                    let mut cont = 0.0;
                    if k > 1 {
                        for s2 in 0..ns {
                            let p = tables.t(s, ja, s2);
                            if p != 0.0 {
                                cont += p * v[(k - 1) * ns + s2];
                            }
                        }
                    }
                    let val = tables.r(s, ja) + tables.discount * cont;
                    q[(k * ns + s) * nja + ja] = val;
                    best = best.max(val);
                }
                v[k * ns + s] = best;
            }
        }
        Self {
            num_states: ns,
            num_joint_actions: nja,
            max_steps,
            q,
            v,
        }
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// `Q_MDP(s, a, k)`; zero when `k = 0`.
    #[inline]
    pub fn q(&self, state: usize, ja: usize, steps: usize) -> f64 {
        self.q[(steps * self.num_states + state) * self.num_joint_actions + ja]
    }

    /// `max_a Q_MDP(s, a, k)`.
    #[inline]
    pub fn v(&self, state: usize, steps: usize) -> f64 {
        self.v[steps * self.num_states + state]
    }

    /// Lowest-index maximizer of `Q_MDP(s, ., k)`.
    pub fn argmax(&self, state: usize, steps: usize) -> usize {
        let mut best = 0;
        for ja in 1..self.num_joint_actions {
            if self.q(state, ja, steps) > self.q(state, best, steps) {
                best = ja;
            }
        }
        best
    }
}

pub fn q_mdp<M: Enumerable + ?Sized>(
    model: &M,
    state: usize,
    joint_action: &[usize],
    steps_remaining: usize,
) -> f64 {
    let tables = Tables::from_model(model);
    let table = QMdpTable::new(&tables, steps_remaining);
    table.q(
        state,
        encode_joint(joint_action, &tables.actions),
        steps_remaining,
    )
}

/// MDP-optimal joint action for every `(state, steps_remaining)` with
/// `1 ≤ steps_remaining ≤ horizon`. Ties go to the lowest joint-action index.
pub fn mdp_policy<M: Enumerable + ?Sized>(
    model: &M,
    horizon: usize,
) -> BTreeMap<(usize, usize), Vec<usize>> {
    let tables = Tables::from_model(model);
    let table = QMdpTable::new(&tables, horizon);
    let mut out = BTreeMap::new();
    for k in 1..=horizon {
        for s in 0..tables.num_states {
            out.insert((s, k), decode_joint(table.argmax(s, k), &tables.actions));
        }
    }
    out
}
