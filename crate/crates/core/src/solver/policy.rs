//! Deterministic joint policies of finite depth.
//!
//! Each agent's policy is a complete `|Z_i|`-ary decision tree stored in
//! breadth-first order: node 0 is the root action and the child of node `k`
//! for observation `z` is node `|Z_i| * k + 1 + z`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::history::JointHistory;
use crate::model::Enumerable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTree {
    horizon: usize,
    num_actions: Vec<usize>,
    num_obs: Vec<usize>,
    actions: Vec<Vec<usize>>,
}

/// Number of nodes in a complete `branching`-ary tree with `depth` levels.
pub fn tree_size(branching: usize, depth: usize) -> usize {
    (0..depth).map(|d| branching.pow(d as u32)).sum()
}

/// Index of the first node at `level`.
pub(crate) fn level_offset(branching: usize, level: usize) -> usize {
    tree_size(branching, level)
}

impl PolicyTree {
    /// Builds a policy from explicit per-agent node actions. Returns `None` if
    /// a tree has the wrong size or an action is out of range.
    pub fn from_actions(
        horizon: usize,
        num_actions: Vec<usize>,
        num_obs: Vec<usize>,
        actions: Vec<Vec<usize>>,
    ) -> Option<Self> {
        if num_actions.len() != num_obs.len() || actions.len() != num_obs.len() {
            return None;
        }
        for i in 0..actions.len() {
            if actions[i].len() != tree_size(num_obs[i], horizon)
                || actions[i].iter().any(|&a| a >= num_actions[i])
            {
                return None;
            }
        }
        Some(Self {
            horizon,
            num_actions,
            num_obs,
            actions,
        })
    }

    /// Every agent always plays `joint_action[i]`.
    pub fn constant<M: Enumerable + ?Sized>(model: &M, horizon: usize, joint_action: &[usize]) -> Self {
        Self::from_fn(model, horizon, |agent, _| joint_action[agent])
    }

    /// Policy given by `f(agent, local observation sequence)`.
    pub fn from_fn<M: Enumerable + ?Sized>(
        model: &M,
        horizon: usize,
        mut f: impl FnMut(usize, &[usize]) -> usize,
    ) -> Self {
        let n = model.num_agents();
        let num_actions = model.action_radices();
        let num_obs = model.observation_radices();
        let mut actions = Vec::with_capacity(n);
        for agent in 0..n {
            let z = num_obs[agent];
            let size = tree_size(z, horizon);
            let mut tree = Vec::with_capacity(size);
            for node in 0..size {
                let seq = observation_path(z, node);
                tree.push(f(agent, &seq));
            }
            actions.push(tree);
        }
        Self {
            horizon,
            num_actions,
            num_obs,
            actions,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self, agent: usize) -> usize {
        self.num_obs[agent]
    }

    pub fn nodes(&self, agent: usize) -> &[usize] {
        &self.actions[agent]
    }

    /// Node index reached by a local observation sequence.
    pub fn node_index(&self, agent: usize, obs: &[usize]) -> usize {
        let z = self.num_obs[agent];
        obs.iter().fold(0, |k, &o| z * k + 1 + o)
    }

    /// Action prescribed after observing `obs` (length < horizon).
    pub fn action(&self, agent: usize, obs: &[usize]) -> usize {
        self.actions[agent][self.node_index(agent, obs)]
    }

    /// The `C^π` indicator: every recorded action matches the prescription
    /// given the agent's preceding observations.
    pub fn is_consistent(&self, history: &JointHistory) -> bool {
        if history.len() > self.horizon || history.num_agents() != self.num_agents() {
            return false;
        }
        for agent in 0..self.num_agents() {
            let z = self.num_obs[agent];
            let mut node = 0;
            for step in history.local(agent) {
                if step.observation >= z || self.actions[agent][node] != step.action {
                    return false;
                }
                node = z * node + 1 + step.observation;
            }
        }
        true
    }

    /// Plain-text rendering. Each agent starts with a line `agent <i>:`; every
    /// node is one line indented by two spaces per depth, holding the action
    /// name, prefixed by `<observation> -> ` below the root.
    pub fn render(&self, action_names: &[&str], obs_names: &[&str]) -> String {
        let mut out = String::new();
        for agent in 0..self.num_agents() {
            let _ = writeln!(out, "agent {agent}:");
            self.render_node(agent, 0, 0, None, action_names, obs_names, &mut out);
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn render_node(
        &self,
        agent: usize,
        node: usize,
        depth: usize,
        via: Option<usize>,
        action_names: &[&str],
        obs_names: &[&str],
        out: &mut String,
    ) {
        let a = self.actions[agent][node];
        let name = |names: &[&str], i: usize, prefix: &str| {
            names
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("{prefix}{i}"))
        };
        let indent = "  ".repeat(depth + 1);
        match via {
            None => {
                let _ = writeln!(out, "{indent}{}", name(action_names, a, "a"));
            }
            Some(z) => {
                let _ = writeln!(
                    out,
                    "{indent}{} -> {}",
                    name(obs_names, z, "z"),
                    name(action_names, a, "a")
                );
            }
        }
        if depth + 1 < self.horizon {
            let nz = self.num_obs[agent];
            for z in 0..nz {
                self.render_node(agent, nz * node + 1 + z, depth + 1, Some(z), action_names, obs_names, out);
            }
        }
    }
}

/// Observation sequence leading to `node` in a complete `z`-ary tree.
fn observation_path(z: usize, mut node: usize) -> Vec<usize> {
    let mut seq = Vec::new();
    while node > 0 {
        let o = (node - 1) % z;
        seq.push(o);
        node = (node - 1) / z;
    }
    seq.reverse();
    seq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::dectiger::*;

    fn tiger(h: usize) -> DecTiger {
        dectiger_model(DecTigerVariant::ResetOnOpen, h, 1.0).unwrap()
    }

    #[test]
    fn node_indexing_roundtrips() {
        for node in 0..tree_size(2, 4) {
            let seq = observation_path(2, node);
            let p = PolicyTree::constant(&tiger(4), 4, &[0, 0]);
            assert_eq!(p.node_index(0, &seq), node);
        }
        assert_eq!(level_offset(2, 3), 7);
        assert_eq!(tree_size(3, 3), 13);
    }

    #[test]
    fn consistency_indicator() {
        let m = tiger(2);
        let p = PolicyTree::constant(&m, 2, &[LISTEN, LISTEN]);
        assert!(p.is_consistent(&JointHistory::new(2)));
        let bad = JointHistory::from_steps(2, &[(vec![OPEN_LEFT, LISTEN], vec![Z_L, Z_L])]).unwrap();
        assert!(!p.is_consistent(&bad));
        let good = JointHistory::from_steps(2, &[(vec![LISTEN, LISTEN], vec![Z_L, Z_R])]).unwrap();
        assert!(p.is_consistent(&good));
    }

    #[test]
    fn from_fn_reads_observation_sequences() {
        let m = tiger(3);
        let p = PolicyTree::from_fn(&m, 3, |_, obs| match obs {
            [Z_L, Z_L] => OPEN_RIGHT,
            _ => LISTEN,
        });
        assert_eq!(p.action(1, &[Z_L, Z_L]), OPEN_RIGHT);
        assert_eq!(p.action(1, &[Z_L, Z_R]), LISTEN);
        assert_eq!(p.action(0, &[]), LISTEN);
    }

    #[test]
    fn render_format() {
        let m = tiger(2);
        let p = PolicyTree::from_fn(&m, 2, |_, obs| if obs == [Z_R] { OPEN_LEFT } else { LISTEN });
        let text = p.render(&["li", "oL", "oR"], &["zL", "zR"]);
        let expected = "agent 0:\n  li\n    zL -> li\n    zR -> oL\nagent 1:\n  li\n    zL -> li\n    zR -> oL\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn from_actions_validates() {
        assert!(PolicyTree::from_actions(2, vec![3, 3], vec![2, 2], vec![vec![0; 3], vec![0; 3]]).is_some());
        assert!(PolicyTree::from_actions(2, vec![3, 3], vec![2, 2], vec![vec![0; 2], vec![0; 3]]).is_none());
        assert!(PolicyTree::from_actions(2, vec![3, 3], vec![2, 2], vec![vec![3; 3], vec![0; 3]]).is_none());
    }
}
