//! Probabilities of joint and local histories under a fixed policy.

use crate::belief::{Belief, predict_and_weight};
use crate::error::ModelError;
use crate::history::{JointHistory, LocalStep};
use crate::model::{decode_joint, Enumerable};
use crate::solver::policy::PolicyTree;

/// Unnormalized state marginal `α(s) = P(τ, s_t = s | b₀)` after a history,
/// ignoring whether the actions agree with any policy.
pub fn forward_message<M: Enumerable + ?Sized>(model: &M, history: &JointHistory) -> Vec<f64> {
    let mut alpha = model.initial_belief().probs().to_vec();
    for t in 0..history.len() {
        alpha = predict_and_weight(
            model,
            &alpha,
            &history.joint_action(t),
            &history.joint_observation(t),
        );
    }
    alpha
}

/// `b(s | τ)`. Fails with `ImpossibleObservation` for a zero-probability history.
pub fn belief_from_history<M: Enumerable + ?Sized>(
    model: &M,
    history: &JointHistory,
) -> Result<Belief, ModelError> {
    Belief::from_unnormalized(forward_message(model, history))
}

/// `P^π(τ | b₀)`: zero if the history is inconsistent with the policy,
/// otherwise the probability of its observations given its actions.
pub fn joint_recurrence<M: Enumerable + ?Sized>(
    model: &M,
    policy: &PolicyTree,
    history: &JointHistory,
) -> f64 {
    if !policy.is_consistent(history) {
        return 0.0;
    }
    forward_message(model, history).iter().sum()
}

/// `P_i^{π_i}(τ_i | b₀)`: the joint recurrence summed over every completion of
/// the other agents' local histories.
pub fn individual_recurrence<M: Enumerable + ?Sized>(
    model: &M,
    policy: &PolicyTree,
    agent: usize,
    local: &[LocalStep],
) -> f64 {
    let n = model.num_agents();
    let mut node = vec![0usize; n];
    for step in local {
        if policy.nodes(agent)[node[agent]] != step.action {
            return 0.0;
        }
        node[agent] = policy.num_observations(agent) * node[agent] + 1 + step.observation;
    }
    let others: Vec<usize> = (0..n)
        .filter(|&j| j != agent)
        .map(|j| model.num_observations(j))
        .collect();
    let alpha = model.initial_belief().probs().to_vec();
    marginal(model, policy, agent, local, 0, vec![0; n], &others, alpha)
}

#[allow(clippy::too_many_arguments)]
fn marginal<M: Enumerable + ?Sized>(
    model: &M,
    policy: &PolicyTree,
    agent: usize,
    local: &[LocalStep],
    t: usize,
    nodes: Vec<usize>,
    others: &[usize],
    alpha: Vec<f64>,
) -> f64 {
    if t == local.len() {
        return alpha.iter().sum();
    }
    let n = model.num_agents();
    let action: Vec<usize> = (0..n).map(|j| policy.nodes(j)[nodes[j]]).collect();
    let combos: usize = others.iter().product();
    let mut total = 0.0;
    for c in 0..combos {
        let rest = decode_joint(c, others);
        let mut obs = Vec::with_capacity(n);
        let mut r = rest.iter();
        for j in 0..n {
            obs.push(if j == agent {
                local[t].observation
            } else {
                *r.next().unwrap()
            });
        }
        let next = predict_and_weight(model, &alpha, &action, &obs);
        if next.iter().all(|&v| v == 0.0) {
            continue;
        }
        let child: Vec<usize> = (0..n)
            .map(|j| policy.num_observations(j) * nodes[j] + 1 + obs[j])
            .collect();
        total += marginal(model, policy, agent, local, t + 1, child, others, next);
    }
    total
}

/// Every joint observation history of length `len` that `policy` can
/// generate, with actions filled in from the policy.
pub fn policy_histories<M: Enumerable + ?Sized>(
    model: &M,
    policy: &PolicyTree,
    len: usize,
) -> Vec<JointHistory> {
    let n = model.num_agents();
    let z_rad = model.observation_radices();
    let njo: usize = z_rad.iter().product();
    let mut frontier = vec![JointHistory::new(n)];
    for _ in 0..len {
        let mut next = Vec::with_capacity(frontier.len() * njo);
        for h in &frontier {
            let action: Vec<usize> = (0..n)
                .map(|j| policy.action(j, &h.local_observations(j, h.len())))
                .collect();
            for jo in 0..njo {
                let mut child = h.clone();
                child
                    .push(&action, &decode_joint(jo, &z_rad))
                    .expect("arity matches model");
                next.push(child);
            }
        }
        frontier = next;
    }
    frontier
}
