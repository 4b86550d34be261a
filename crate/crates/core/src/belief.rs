//! Belief states and Bayes filtering.
//!
//! `b'(s') ∝ Ω(z | a, s') Σ_s T(s' | s, a) b(s)`

use crate::error::ModelError;
use crate::model::Enumerable;

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    /// Validates non-negativity and normalization (within 1e-12).
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidDistribution("empty belief".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::InvalidDistribution(format!(
                "belief has negative or non-finite entries: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(ModelError::InvalidDistribution(format!(
                "belief sums to {sum}"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes an unnormalized non-negative vector.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self, ModelError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(ModelError::ImpossibleObservation);
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, state: usize) -> f64 {
        self.probs[state]
    }

    /// Belief-weighted expectation of a per-state quantity.
    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(s, &p)| if p == 0.0 { 0.0 } else { p * f(s) })
            .sum()
    }
}

/// Unnormalized forward message: `Ω(z | a, s') Σ_s T(s' | s, a) w(s)`.
pub fn predict_and_weight<M: Enumerable + ?Sized>(
    model: &M,
    weights: &[f64],
    action: &[usize],
    obs: &[usize],
) -> Vec<f64> {
    let n = model.num_states();
    let mut next = vec![0.0; n];
    for (s, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (s2, p) in model.transition_probs(s, action).into_iter().enumerate() {
            next[s2] += w * p;
        }
    }
    for (s2, v) in next.iter_mut().enumerate() {
        if *v != 0.0 {
            *v *= model.observation_prob(action, s2, obs);
        }
    }
    next
}

pub fn belief_update<M: Enumerable + ?Sized>(
    model: &M,
    belief: &Belief,
    action: &[usize],
    obs: &[usize],
) -> Result<Belief, ModelError> {
    let weights = predict_and_weight(model, belief.probs(), action, obs);
    Belief::from_unnormalized(weights)
}
