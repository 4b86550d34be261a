//! Exhaustive enumeration of deterministic joint policies.

use rayon::prelude::*;

use crate::model::{decode_joint, encode_joint, Enumerable};
use crate::solver::policy::{tree_size, PolicyTree};
use crate::solver::tables::Tables;
use crate::solver::SolverError;

/// Maximum number of joint policies `brute_force_optimal` will enumerate.
pub const ENUMERATION_BUDGET: f64 = 1e8;

/// `Π_i |A_i|^{nodes_i}`: the number of deterministic joint policies.
pub fn enumeration_size<M: Enumerable + ?Sized>(model: &M, horizon: usize) -> f64 {
    (0..model.num_agents())
        .map(|i| {
            (model.num_actions(i) as f64)
                .powf(tree_size(model.num_observations(i), horizon) as f64)
        })
        .product()
}

/// Decodes the `index`-th tree of an agent; node 0 is the most significant digit.
fn decode_tree(index: u64, radix: usize, size: usize, out: &mut [usize]) {
    let mut idx = index;
    for slot in out[..size].iter_mut().rev() {
        *slot = (idx % radix as u64) as usize;
        idx /= radix as u64;
    }
}

/// Evaluates complete joint policies with preallocated per-depth scratch.
struct Evaluator<'a> {
    tables: &'a Tables,
    horizon: usize,
    obs: Vec<Vec<usize>>,
    alpha: Vec<Vec<f64>>,
    pred: Vec<Vec<f64>>,
    nodes: Vec<Vec<usize>>,
    action: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    fn new(tables: &'a Tables, horizon: usize) -> Self {
        let ns = tables.num_states;
        let n = tables.num_agents();
        Self {
            tables,
            horizon,
            obs: (0..tables.num_joint_obs)
                .map(|jo| decode_joint(jo, &tables.observations))
                .collect(),
            alpha: vec![vec![0.0; ns]; horizon + 1],
            pred: vec![vec![0.0; ns]; horizon + 1],
            nodes: vec![vec![0; n]; horizon + 1],
            action: vec![0; n],
        }
    }

    fn value(&mut self, trees: &[Vec<usize>]) -> f64 {
        self.alpha[0].copy_from_slice(&self.tables.initial);
        self.nodes[0].iter_mut().for_each(|k| *k = 0);
        self.rec(trees, 0)
    }

    fn rec(&mut self, trees: &[Vec<usize>], t: usize) -> f64 {
        let tables = self.tables;
        for (j, a) in self.action.iter_mut().enumerate() {
            *a = trees[j][self.nodes[t][j]];
        }
        let ja = encode_joint(&self.action, &tables.actions);
        let r = tables.expected_reward(&self.alpha[t], ja);
        if t + 1 >= self.horizon {
            return r;
        }
        tables.predict(&self.alpha[t], ja, &mut self.pred[t]);
        let mut cont = 0.0;
        for jo in 0..tables.num_joint_obs {
            tables.weight(&self.pred[t], ja, jo, &mut self.alpha[t + 1]);
            if self.alpha[t + 1].iter().all(|&v| v == 0.0) {
                continue;
            }
            for j in 0..trees.len() {
                let z = tables.observations[j];
                self.nodes[t + 1][j] = z * self.nodes[t][j] + 1 + self.obs[jo][j];
            }
            cont += self.rec(trees, t + 1);
            // The recursion overwrote the joint action; restore it for the next branch.
            for (j, a) in self.action.iter_mut().enumerate() {
                *a = trees[j][self.nodes[t][j]];
            }
        }
        r + tables.discount * cont
    }
}

/// Globally optimal joint policy by exhaustive enumeration. Among equally
/// valued policies the lexicographically first one is returned (agent 0's
/// tree most significant, root node first within a tree).
pub fn brute_force_optimal<M: Enumerable + ?Sized>(
    model: &M,
    horizon: usize,
) -> Result<(PolicyTree, f64), SolverError> {
    if horizon == 0 {
        return Err(SolverError::ZeroHorizon);
    }
    let required = enumeration_size(model, horizon);
    if required > ENUMERATION_BUDGET {
        return Err(SolverError::EnumerationBudgetExceeded {
            required,
            budget: ENUMERATION_BUDGET,
        });
    }
    let tables = Tables::from_model(model);
    let n = tables.num_agents();
    let sizes: Vec<usize> = (0..n)
        .map(|i| tree_size(tables.observations[i], horizon))
        .collect();
    let counts: Vec<u64> = (0..n)
        .map(|i| (tables.actions[i] as u64).pow(sizes[i] as u32))
        .collect();
    let rest: u64 = counts[1..].iter().product();

    let best = (0..counts[0])
        .into_par_iter()
        .map(|first| {
            let mut eval = Evaluator::new(&tables, horizon);
            let mut trees: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![0; s]).collect();
            decode_tree(first, tables.actions[0], sizes[0], &mut trees[0]);
            let mut best: Option<(f64, u64)> = None;
            for r in 0..rest {
                let mut idx = r;
                for j in (1..n).rev() {
                    decode_tree(idx % counts[j], tables.actions[j], sizes[j], &mut trees[j]);
                    idx /= counts[j];
                }
                let v = eval.value(&trees);
                if best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, first * rest + r));
                }
            }
            best.expect("at least one policy")
        })
        .reduce_with(|a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .expect("at least one policy");

    let mut trees: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![0; s]).collect();
    let mut idx = best.1;
    for j in (0..n).rev() {
        decode_tree(idx % counts[j], tables.actions[j], sizes[j], &mut trees[j]);
        idx /= counts[j];
    }
    let policy = PolicyTree::from_actions(
        horizon,
        tables.actions.clone(),
        tables.observations.clone(),
        trees,
    )
    .expect("decoded trees are well formed");
    Ok((policy, best.0))
}
