//! MAA*: best-first search over partially specified joint policy trees.
//!
//! A search node fixes every agent's actions for tree levels `0..depth` and,
//! at level `depth`, the decision rules of the first `agents_filled` agents.
//! Its priority is the exact expected reward of the fixed prefix plus an
//! admissible upper bound on the rest. Children fill the next agent's rule at
//! the current level. The final level is solved exactly as a one-shot
//! cooperative Bayesian game: every combination of rules for the first `N - 1`
//! agents is enumerated and the last agent best-responds per local history.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::model::{decode_joint, Enumerable};
use crate::solver::policy::{level_offset, tree_size, PolicyTree};
use crate::solver::qmdp::QMdpTable;
use crate::solver::tables::Tables;
use crate::solver::SolverError;

/// Bound used for the unspecified remainder of a partial policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// `max_a Σ_s α_τ(s) Q_MDP(s, a, k)` per reachable joint history.
    #[default]
    QMdp,
    /// Value of the centralized POMDP in which every agent sees the joint
    /// observation: `max_a Q_POMDP(b_τ, a, k)` weighted by `P(τ)`.
    QPomdp,
}

#[derive(Debug, Clone)]
pub struct MaaOptions {
    pub heuristic: Heuristic,
    /// Maximum number of node expansions before giving up.
    pub node_budget: usize,
}

impl Default for MaaOptions {
    fn default() -> Self {
        Self {
            heuristic: Heuristic::QMdp,
            node_budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MaaStats {
    pub expanded: usize,
    pub generated: usize,
    pub pruned: usize,
}

/// Open-list element.
#[derive(Debug, Clone)]
pub struct SearchNode {
    /// Per agent, the actions of the filled tree nodes in breadth-first order.
    pub actions: Vec<Vec<usize>>,
    pub depth: usize,
    pub agents_filled: usize,
    /// Exact expected reward of levels `0..depth`.
    pub prefix_value: f64,
    /// `prefix_value` plus the heuristic completion value.
    pub bound: f64,
}

struct Queued {
    node: SearchNode,
    seq: u64,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Highest bound first; earlier insertion wins ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.node
            .bound
            .total_cmp(&other.node.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// A reachable joint history at the search frontier.
struct Entry {
    nodes: Vec<usize>,
    alpha: Vec<f64>,
    aoh: usize,
}

enum Bound {
    Mdp(QMdpTable),
    /// `Q_POMDP` per node of the joint action-observation tree, `nja` values each.
    Pomdp(Vec<f64>),
}

const HEURISTIC_TABLE_LIMIT: usize = 50_000_000;
const PRUNE_EPS: f64 = 1e-10;

struct Search<'a> {
    tables: &'a Tables,
    horizon: usize,
    bound: Bound,
    obs: Vec<Vec<usize>>,
    /// `Π_{j > k} |A_j|`: width of the joint-action range once agents `0..=k` are fixed.
    block: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(tables: &'a Tables, horizon: usize, heuristic: Heuristic) -> Result<Self, SolverError> {
        let n = tables.num_agents();
        let block = (0..n)
            .map(|k| tables.actions[k + 1..].iter().product())
            .collect();
        let bound = match heuristic {
            Heuristic::QMdp => Bound::Mdp(QMdpTable::new(tables, horizon)),
            Heuristic::QPomdp => Bound::Pomdp(pomdp_table(tables, horizon)?),
        };
        Ok(Self {
            tables,
            horizon,
            bound,
            obs: (0..tables.num_joint_obs)
                .map(|jo| decode_joint(jo, &tables.observations))
                .collect(),
            block,
        })
    }

    fn joint_action(&self, actions: &[Vec<usize>], nodes: &[usize]) -> usize {
        actions
            .iter()
            .zip(nodes)
            .zip(&self.tables.actions)
            .fold(0, |acc, ((tree, &k), &r)| acc * r + tree[k])
    }

    fn root(&self) -> Vec<Entry> {
        vec![Entry {
            nodes: vec![0; self.tables.num_agents()],
            alpha: self.tables.initial.clone(),
            aoh: 0,
        }]
    }

    /// Histories one level deeper, given complete actions at the current level.
    fn advance(&self, entries: &[Entry], actions: &[Vec<usize>]) -> Vec<Entry> {
        let t = self.tables;
        let ns = t.num_states;
        let mut pred = vec![0.0; ns];
        let mut out = Vec::with_capacity(entries.len() * t.num_joint_obs);
        for e in entries {
            let ja = self.joint_action(actions, &e.nodes);
            t.predict(&e.alpha, ja, &mut pred);
            for jo in 0..t.num_joint_obs {
                let mut alpha = vec![0.0; ns];
                t.weight(&pred, ja, jo, &mut alpha);
                if alpha.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let nodes = e
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| t.observations[j] * k + 1 + self.obs[jo][j])
                    .collect();
                let branching = t.num_joint_actions * t.num_joint_obs;
                out.push(Entry {
                    nodes,
                    alpha,
                    aoh: e.aoh * branching + 1 + ja * t.num_joint_obs + jo,
                });
            }
        }
        out
    }

    fn frontier(&self, actions: &[Vec<usize>], depth: usize) -> Vec<Entry> {
        let mut entries = self.root();
        for _ in 0..depth {
            entries = self.advance(&entries, actions);
        }
        entries
    }

    /// Heuristic value of each joint action at a history with `steps` to go.
    fn completion(&self, e: &Entry, steps: usize) -> Vec<f64> {
        let t = self.tables;
        match &self.bound {
            Bound::Mdp(q) => (0..t.num_joint_actions)
                .map(|ja| {
                    e.alpha
                        .iter()
                        .enumerate()
                        .map(|(s, &w)| if w == 0.0 { 0.0 } else { w * q.q(s, ja, steps) })
                        .sum()
                })
                .collect(),
            Bound::Pomdp(q) => {
                let p: f64 = e.alpha.iter().sum();
                let row = &q[e.aoh * t.num_joint_actions..(e.aoh + 1) * t.num_joint_actions];
                row.iter().map(|v| p * v).collect()
            }
        }
    }

    fn level_reward(&self, entries: &[Entry], actions: &[Vec<usize>]) -> f64 {
        entries
            .iter()
            .map(|e| {
                self.tables
                    .expected_reward(&e.alpha, self.joint_action(actions, &e.nodes))
            })
            .sum()
    }

    /// Σ_τ max over joint actions agreeing with agents `0..=k`.
    fn partial_bound(
        &self,
        entries: &[Entry],
        completions: &[Vec<f64>],
        actions: &[Vec<usize>],
        k: usize,
    ) -> f64 {
        let width = self.block[k];
        entries
            .iter()
            .zip(completions)
            .map(|(e, h)| {
                let prefix = (0..=k).fold(0, |acc, j| {
                    acc * self.tables.actions[j] + actions[j][e.nodes[j]]
                });
                h[prefix * width..(prefix + 1) * width]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }

    fn full_bound(&self, entries: &[Entry], steps: usize) -> f64 {
        entries
            .iter()
            .map(|e| {
                self.completion(e, steps)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }

    fn gamma_pow(&self, d: usize) -> f64 {
        self.tables.discount.powi(d as i32)
    }

    /// Children of a node that is not at the final level.
    fn expand(&self, node: &SearchNode, mut emit: impl FnMut(SearchNode)) {
        let d = node.depth;
        let k = node.agents_filled;
        let t = self.tables;
        let n = t.num_agents();
        let entries = self.frontier(&node.actions, d);
        let steps = self.horizon - d;
        let completions: Vec<Vec<f64>> = entries.iter().map(|e| self.completion(e, steps)).collect();
        let z = t.observations[k];
        let width = z.pow(d as u32);
        let off = level_offset(z, d);
        let radix = t.actions[k];
        let count = radix.pow(width as u32);
        let mut actions = node.actions.clone();
        actions[k].resize(off + width, 0);
        for r in 0..count {
            let rule = decode_joint(r, &vec![radix; width]);
            actions[k][off..].copy_from_slice(&rule);
            let child = if k + 1 < n {
                let h = self.partial_bound(&entries, &completions, &actions, k);
                SearchNode {
                    actions: actions.clone(),
                    depth: d,
                    agents_filled: k + 1,
                    prefix_value: node.prefix_value,
                    bound: node.prefix_value + self.gamma_pow(d) * h,
                }
            } else {
                let g = node.prefix_value + self.gamma_pow(d) * self.level_reward(&entries, &actions);
                let bound = if d + 1 < self.horizon {
                    let next = self.advance(&entries, &actions);
                    g + self.gamma_pow(d + 1) * self.full_bound(&next, steps - 1)
                } else {
                    g
                };
                SearchNode {
                    actions: actions.clone(),
                    depth: d + 1,
                    agents_filled: 0,
                    prefix_value: g,
                    bound,
                }
            };
            emit(child);
        }
    }

    /// Exact best completion of the final level; returns the completed node.
    fn solve_last_level(&self, node: &SearchNode) -> SearchNode {
        let t = self.tables;
        let n = t.num_agents();
        let d = self.horizon - 1;
        let entries = self.frontier(&node.actions, d);
        let vals: Vec<Vec<f64>> = entries
            .iter()
            .map(|e| {
                (0..t.num_joint_actions)
                    .map(|ja| t.expected_reward(&e.alpha, ja))
                    .collect()
            })
            .collect();
        let offs: Vec<usize> = (0..n).map(|j| level_offset(t.observations[j], d)).collect();
        let widths: Vec<usize> = (0..n).map(|j| t.observations[j].pow(d as u32)).collect();
        let last = n - 1;
        let last_actions = t.actions[last];

        // Digits of the first n-1 agents' rules, agent 0's first node most significant.
        let radices: Vec<usize> = (0..last)
            .flat_map(|j| std::iter::repeat(t.actions[j]).take(widths[j]))
            .collect();
        let starts: Vec<usize> = (0..last)
            .scan(0, |acc, j| {
                let s = *acc;
                *acc += widths[j];
                Some(s)
            })
            .collect();
        let mut digits = vec![0usize; radices.len()];
        let mut acc = vec![0.0; widths[last] * last_actions];
        let mut best_value = f64::NEG_INFINITY;
        let mut best_digits = digits.clone();
        let mut best_reply = vec![0usize; widths[last]];
        let mut reply = vec![0usize; widths[last]];
        loop {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for (e, v) in entries.iter().zip(&vals) {
                let prefix = (0..last).fold(0, |a, j| {
                    a * t.actions[j] + digits[starts[j] + e.nodes[j] - offs[j]]
                });
                let ty = e.nodes[last] - offs[last];
                let row = &mut acc[ty * last_actions..(ty + 1) * last_actions];
                let base = prefix * last_actions;
                for (slot, x) in row.iter_mut().zip(&v[base..base + last_actions]) {
                    *slot += x;
                }
            }
            let mut total = 0.0;
            for ty in 0..widths[last] {
                let row = &acc[ty * last_actions..(ty + 1) * last_actions];
                let mut arg = 0;
                for a in 1..last_actions {
                    if row[a] > row[arg] {
                        arg = a;
                    }
                }
                reply[ty] = arg;
                total += row[arg];
            }
            if total > best_value {
                best_value = total;
                best_digits.copy_from_slice(&digits);
                best_reply.copy_from_slice(&reply);
            }
            if !next_digits(&mut digits, &radices) {
                break;
            }
        }

        let mut actions = node.actions.clone();
        for j in 0..n {
            actions[j].resize(offs[j] + widths[j], 0);
            if j < last {
                actions[j][offs[j]..].copy_from_slice(&best_digits[starts[j]..starts[j] + widths[j]]);
            } else {
                actions[j][offs[j]..].copy_from_slice(&best_reply);
            }
        }
        let value = node.prefix_value + self.gamma_pow(d) * best_value;
        SearchNode {
            actions,
            depth: self.horizon,
            agents_filled: 0,
            prefix_value: value,
            bound: value,
        }
    }
}

/// Odometer increment, last digit fastest. Returns false after wrapping.
fn next_digits(digits: &mut [usize], radices: &[usize]) -> bool {
    for pos in (0..digits.len()).rev() {
        digits[pos] += 1;
        if digits[pos] < radices[pos] {
            return true;
        }
        digits[pos] = 0;
    }
    false
}

/// `Q_POMDP` over the joint action-observation tree, depth-first from `b₀`.
fn pomdp_table(tables: &Tables, horizon: usize) -> Result<Vec<f64>, SolverError> {
    let nja = tables.num_joint_actions;
    let branching = nja * tables.num_joint_obs;
    let size = (0..horizon)
        .try_fold(0usize, |acc, d| {
            branching
                .checked_pow(d as u32)
                .and_then(|x| acc.checked_add(x))
        })
        .and_then(|x| x.checked_mul(nja))
        .filter(|&x| x <= HEURISTIC_TABLE_LIMIT)
        .ok_or(SolverError::HeuristicTooLarge(usize::MAX))?;
    let mut q = vec![0.0; size];
    fill_pomdp(tables, horizon, 0, &tables.initial, 0, &mut q);
    Ok(q)
}

fn fill_pomdp(tables: &Tables, horizon: usize, node: usize, belief: &[f64], depth: usize, q: &mut [f64]) -> f64 {
    let nja = tables.num_joint_actions;
    let njo = tables.num_joint_obs;
    let ns = tables.num_states;
    let mut pred = vec![0.0; ns];
    let mut post = vec![0.0; ns];
    let mut best = f64::NEG_INFINITY;
    for ja in 0..nja {
        let mut v = tables.expected_reward(belief, ja);
        if depth + 1 < horizon {
            tables.predict(belief, ja, &mut pred);
            let mut cont = 0.0;
            for jo in 0..njo {
                tables.weight(&pred, ja, jo, &mut post);
                let p: f64 = post.iter().sum();
                if p == 0.0 {
                    continue;
                }
                post.iter_mut().for_each(|x| *x /= p);
                let child = node * nja * njo + 1 + ja * njo + jo;
                cont += p * fill_pomdp(tables, horizon, child, &post, depth + 1, q);
            }
            v += tables.discount * cont;
        }
        q[node * nja + ja] = v;
        best = best.max(v);
    }
    best
}

fn to_policy(tables: &Tables, horizon: usize, actions: Vec<Vec<usize>>) -> PolicyTree {
    PolicyTree::from_actions(horizon, tables.actions.clone(), tables.observations.clone(), actions)
        .expect("search produces complete trees")
}

/// MAA* with the `Q_MDP` heuristic and the default node budget.
pub fn maa_star<M: Enumerable + ?Sized>(
    model: &M,
    horizon: usize,
) -> Result<(PolicyTree, f64), SolverError> {
    maa_star_with(model, horizon, &MaaOptions::default()).map(|(p, v, _)| (p, v))
}

pub fn maa_star_with<M: Enumerable + ?Sized>(
    model: &M,
    horizon: usize,
    options: &MaaOptions,
) -> Result<(PolicyTree, f64, MaaStats), SolverError> {
    if horizon == 0 {
        return Err(SolverError::ZeroHorizon);
    }
    let tables = Tables::from_model(model);
    let search = Search::new(&tables, horizon, options.heuristic)?;
    let mut stats = MaaStats::default();
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    let root_entries = search.root();
    let root = SearchNode {
        actions: vec![Vec::new(); tables.num_agents()],
        depth: 0,
        agents_filled: 0,
        prefix_value: 0.0,
        bound: search.full_bound(&root_entries, horizon),
    };
    open.push(Queued { node: root, seq });
    seq += 1;
    let mut incumbent: Option<SearchNode> = None;

    while let Some(Queued { node, .. }) = open.pop() {
        if node.depth == horizon {
            debug_assert!(node.actions.iter().enumerate().all(|(j, a)| a.len()
                == tree_size(tables.observations[j], horizon)));
            return Ok((to_policy(&tables, horizon, node.actions), node.bound, stats));
        }
        let floor = incumbent.as_ref().map(|n| n.bound);
        if floor.is_some_and(|f| node.bound <= f + PRUNE_EPS) {
            stats.pruned += 1;
            continue;
        }
        if stats.expanded >= options.node_budget {
            return Err(SolverError::NodeBudgetExceeded {
                expanded: stats.expanded,
                incumbent: incumbent.map(|n| (to_policy(&tables, horizon, n.actions), n.bound)),
            });
        }
        stats.expanded += 1;
        if node.depth + 1 == horizon && node.agents_filled == 0 {
            let done = search.solve_last_level(&node);
            stats.generated += 1;
            if floor.map_or(true, |f| done.bound > f) {
                incumbent = Some(done.clone());
                open.push(Queued { node: done, seq });
                seq += 1;
            }
            continue;
        }
        let mut children = Vec::new();
        search.expand(&node, |c| children.push(c));
        for child in children {
            stats.generated += 1;
            if floor.is_some_and(|f| child.bound <= f + PRUNE_EPS) {
                stats.pruned += 1;
                continue;
            }
            open.push(Queued { node: child, seq });
            seq += 1;
        }
    }
    // Every path ends in a complete node pushed above, so the heap cannot run
    // dry before one is popped; fall back to the incumbent regardless.
    let best = incumbent.expect("search always completes at least one policy");
    Ok((to_policy(&tables, horizon, best.actions), best.bound, stats))
}
