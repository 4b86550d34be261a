//! Exact evaluation of joint policies.

use crate::error::ModelError;
use crate::history::JointHistory;
use crate::model::{encode_joint, Enumerable};
use crate::solver::policy::PolicyTree;
use crate::solver::recurrence::belief_from_history;
use crate::solver::tables::Tables;

/// `Q(τ, a)`: expected return of taking `joint_action` after `history` and
/// following `policy` afterwards, under the belief `b(· | τ)`. At the last
/// step this is the belief-weighted immediate reward.
pub fn q_under_policy<M: Enumerable + ?Sized>(
    model: &M,
    policy: &PolicyTree,
    history: &JointHistory,
    joint_action: &[usize],
) -> Result<f64, ModelError> {
    if history.len() >= policy.horizon() {
        return Err(ModelError::EpisodeEnded);
    }
    let tables = Tables::from_model(model);
    let belief = belief_from_history(model, history)?;
    let nodes: Vec<usize> = (0..model.num_agents())
        .map(|j| policy.node_index(j, &history.local_observations(j, history.len())))
        .collect();
    let ja = encode_joint(joint_action, &tables.actions);
    Ok(q_rec(&tables, policy, belief.probs(), &nodes, history.len(), ja))
}

fn q_rec(
    tables: &Tables,
    policy: &PolicyTree,
    belief: &[f64],
    nodes: &[usize],
    t: usize,
    ja: usize,
) -> f64 {
    let r = tables.expected_reward(belief, ja);
    if t + 1 >= policy.horizon() {
        return r;
    }
    let ns = tables.num_states;
    let mut pred = vec![0.0; ns];
    let mut post = vec![0.0; ns];
    tables.predict(belief, ja, &mut pred);
    let mut cont = 0.0;
    for jo in 0..tables.num_joint_obs {
        tables.weight(&pred, ja, jo, &mut post);
        let p: f64 = post.iter().sum();
        if p == 0.0 {
            continue;
        }
        post.iter_mut().for_each(|v| *v /= p);
        let obs = crate::model::decode_joint(jo, &tables.observations);
        let child: Vec<usize> = nodes
            .iter()
            .enumerate()
            .map(|(j, &k)| policy.num_observations(j) * k + 1 + obs[j])
            .collect();
        let next_action: Vec<usize> = child
            .iter()
            .enumerate()
            .map(|(j, &k)| policy.nodes(j)[k])
            .collect();
        let next_ja = encode_joint(&next_action, &tables.actions);
        cont += p * q_rec(tables, policy, &post, &child, t + 1, next_ja);
    }
    r + tables.discount * cont
}

/// Expected discounted return of `policy` from `b₀`, summing over every
/// joint observation history it can generate weighted by its recurrence.
pub fn policy_value<M: Enumerable + ?Sized>(model: &M, policy: &PolicyTree) -> f64 {
    let tables = Tables::from_model(model);
    let nodes = vec![0; model.num_agents()];
    value_rec(&tables, policy, &tables.initial, &nodes, 0)
}

pub(crate) fn value_rec(
    tables: &Tables,
    policy: &PolicyTree,
    alpha: &[f64],
    nodes: &[usize],
    t: usize,
) -> f64 {
    let action: Vec<usize> = nodes
        .iter()
        .enumerate()
        .map(|(j, &k)| policy.nodes(j)[k])
        .collect();
    let ja = encode_joint(&action, &tables.actions);
    let r = tables.expected_reward(alpha, ja);
    if t + 1 >= policy.horizon() {
        return r;
    }
    let ns = tables.num_states;
    let mut pred = vec![0.0; ns];
    let mut post = vec![0.0; ns];
    tables.predict(alpha, ja, &mut pred);
    let mut cont = 0.0;
    for jo in 0..tables.num_joint_obs {
        tables.weight(&pred, ja, jo, &mut post);
        if post.iter().all(|&v| v == 0.0) {
            continue;
        }
        let obs = crate::model::decode_joint(jo, &tables.observations);
        let child: Vec<usize> = nodes
            .iter()
            .enumerate()
            .map(|(j, &k)| policy.num_observations(j) * k + 1 + obs[j])
            .collect();
        cont += value_rec(tables, policy, &post, &child, t + 1);
    }
    r + tables.discount * cont
}
