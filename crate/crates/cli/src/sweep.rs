//! Sweep summaries: per-environment normalization and the best-count tally.

use aerial_marl::VariantKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub env: String,
    pub algo: VariantKind,
    pub phi: f64,
    pub k_init: usize,
    pub seeds: usize,
    pub mean_return: f64,
    pub return_ci: f64,
    pub mean_win_rate: f64,
    pub win_rate_ci: f64,
    /// `mean_win_rate` divided by the largest cell value of the same
    /// environment.
    pub normalized: f64,
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "env",
    "algo",
    "phi",
    "k_init",
    "seeds",
    "mean_return",
    "return_ci",
    "mean_win_rate",
    "win_rate_ci",
    "normalized",
];

/// Divides by the maximum. When every value is 0 all cells tie for best
/// and score 1.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return vec![1.0; values.len()];
    }
    values.iter().map(|v| (v / max).max(0.0)).collect()
}

/// Fills `normalized` per environment.
pub fn normalize_cells(cells: &mut [CellSummary]) {
    let mut envs: Vec<String> = cells.iter().map(|c| c.env.clone()).collect();
    envs.sort();
    envs.dedup();
    for env in envs {
        let idx: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].env == env).collect();
        let values: Vec<f64> = idx.iter().map(|&i| cells[i].mean_win_rate).collect();
        for (&i, n) in idx.iter().zip(normalize(&values)) {
            cells[i].normalized = n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyRow {
    /// Variant name, or `none` for sweep points without a strict winner.
    pub algo: String,
    pub best_count: usize,
}

pub const TALLY_COLUMNS: [&str; 2] = ["algo", "best_count"];

/// Counts, per variant, the (environment, φ, K) points where its normalized
/// score is strictly above every other variant's. Ties award nobody.
pub fn best_counts(cells: &[CellSummary], algos: &[VariantKind]) -> Vec<TallyRow> {
    let mut points: Vec<(String, u64, usize)> = cells.iter().map(|c| (c.env.clone(), c.phi.to_bits(), c.k_init)).collect();
    points.sort();
    points.dedup();
    let mut counts = vec![0usize; algos.len()];
    let mut none = 0;
    for (env, phi, k) in points {
        let here: Vec<&CellSummary> = cells
            .iter()
            .filter(|c| c.env == env && c.phi.to_bits() == phi && c.k_init == k)
            .collect();
        let best = here.iter().map(|c| c.normalized).fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<&&CellSummary> = here.iter().filter(|c| c.normalized == best).collect();
        match winners.as_slice() {
            [w] => {
                let slot = algos.iter().position(|&a| a == w.algo).expect("cell algo is in the sweep");
                counts[slot] += 1;
            }
            _ => none += 1,
        }
    }
    let mut rows: Vec<TallyRow> = algos
        .iter()
        .zip(counts)
        .map(|(a, best_count)| TallyRow {
            algo: a.name().into(),
            best_count,
        })
        .collect();
    rows.push(TallyRow {
        algo: "none".into(),
        best_count: none,
    });
    rows
}
