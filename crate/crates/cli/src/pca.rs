//! Principal components by power iteration with deflation.

use serde::{Deserialize, Serialize};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Column means and the unbiased sample covariance of `rows`.
pub fn covariance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            if di == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    let denom = n.saturating_sub(1).max(1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    (mean, cov)
}

pub fn trace(m: &[Vec<f64>]) -> f64 {
    m.iter().enumerate().map(|(i, r)| r[i]).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Unit vector, or all zeros when the matrix is zero.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Dominant eigenpair of a symmetric positive semi-definite matrix. Stops
/// once successive unit iterates differ by less than `tol` in norm.
pub fn power_iteration(m: &[Vec<f64>], tol: f64, max_iters: usize) -> Eigenpair {
    let d = m.len();
    // Uneven start so it is unlikely to be orthogonal to the answer.
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64 + 1.0).sqrt() / 10.0).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    for it in 1..=max_iters {
        let w = mat_vec(m, &v);
        let nw = norm(&w);
        if nw == 0.0 {
            return Eigenpair {
                value: 0.0,
                vector: vec![0.0; d],
                iterations: it,
                converged: true,
            };
        }
        let next: Vec<f64> = w.iter().map(|x| x / nw).collect();
        let delta = norm(&next.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        v = next;
        if delta < tol {
            let value = v.iter().zip(mat_vec(m, &v)).map(|(a, b)| a * b).sum();
            return Eigenpair {
                value,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
    }
    let value = v.iter().zip(mat_vec(m, &v)).map(|(a, b)| a * b).sum();
    Eigenpair {
        value,
        vector: v,
        iterations: max_iters,
        converged: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// `λ_k / tr(Σ)`, 0 for zero-variance data.
    pub explained_variance: Vec<f64>,
    pub covariance_trace: f64,
    pub converged: bool,
}

/// Top `k` principal directions, each found by power iteration on the
/// covariance deflated by the previous ones.
pub fn pca(rows: &[Vec<f64>], k: usize) -> Pca {
    let (mean, mut cov) = covariance(rows);
    let total = trace(&cov);
    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut converged = true;
    for _ in 0..k.min(mean.len()) {
        let e = power_iteration(&cov, POWER_TOL, POWER_MAX_ITERS);
        converged &= e.converged;
        for (i, row) in cov.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c -= e.value * e.vector[i] * e.vector[j];
            }
        }
        components.push(e.vector);
        eigenvalues.push(e.value.max(0.0));
    }
    let explained_variance = eigenvalues
        .iter()
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Pca {
        mean,
        components,
        eigenvalues,
        explained_variance,
        covariance_trace: total,
        converged,
    }
}

impl Pca {
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }
}
