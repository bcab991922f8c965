//! Probability-simplex primitives: validation, Euclidean projection,
//! perturbed-strategy construction, and categorical sampling.
//!
//! Strategies are plain `f64` vectors wrapped in [`SimplexPoint`], which
//! enforces the distribution invariants at construction time. All functions
//! here are pure; random streams are caller-owned.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum-to-one invariant.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A point of the probability simplex: non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexPoint {
    weights: Vec<f64>,
}

impl SimplexPoint {
    /// Validates and wraps a weight vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("simplex point must be non-empty"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("simplex point has non-finite weights"));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0) {
            return Err(Error::invalid(format!(
                "simplex point has negative weight {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "simplex point weights sum to {sum}, expected 1 within {SUM_TOLERANCE}"
            )));
        }
        Ok(Self { weights })
    }

    /// The uniform distribution over `m` actions.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("uniform distribution needs at least 1 action"));
        }
        Ok(Self {
            weights: vec![1.0 / m as f64; m],
        })
    }

    /// The vertex `e_j`: probability one on action `j`.
    pub fn vertex(m: usize, j: usize) -> Result<Self> {
        if j >= m {
            return Err(Error::invalid(format!(
                "vertex index {j} out of range for {m} actions"
            )));
        }
        let mut weights = vec![0.0; m];
        weights[j] = 1.0;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Index of the largest weight (first one on ties) and the weight itself.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = 0;
        for (j, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = j;
            }
        }
        (best, self.weights[best])
    }

    /// Sup-norm distance to the vertex `e_j`.
    pub fn distance_to_vertex(&self, j: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| if k == j { (w - 1.0).abs() } else { w.abs() })
            .fold(0.0, f64::max)
    }
}

/// Euclidean projection onto the probability simplex.
///
/// Uses the exact sort-based rule: with coordinates sorted in decreasing
/// order, find the largest support size whose shared shift keeps every
/// supported coordinate positive, shift by it, and clip the rest to zero.
/// Points already on the simplex are returned unchanged, which also makes
/// the projection exactly idempotent.
pub fn project_to_simplex(v: &[f64]) -> Result<SimplexPoint> {
    if v.is_empty() {
        return Err(Error::invalid("cannot project an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("cannot project a non-finite vector"));
    }
    let sum: f64 = v.iter().sum();
    if v.iter().all(|x| *x >= 0.0) && (sum - 1.0).abs() <= SUM_TOLERANCE {
        return SimplexPoint::new(v.to_vec());
    }

    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite values compare"));

    let mut prefix = 0.0;
    let mut shift = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (1.0 - prefix) / (j + 1) as f64;
        if u + candidate > 0.0 {
            shift = candidate;
        }
    }

    let projected: Vec<f64> = v.iter().map(|x| (x + shift).max(0.0)).collect();
    SimplexPoint::new(projected)
}

/// Mixes uniform mutation mass `lambda` into a strategy:
/// `sigma_j = (1 - lambda) * x_j + lambda / m`.
///
/// Every output weight is at least `lambda / m`, so no action is ever
/// starved of probability while `lambda > 0`.
pub fn perturb(x: &SimplexPoint, lambda: f64) -> Result<SimplexPoint> {
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "perturbation lambda must be in [0, 1], got {lambda}"
        )));
    }
    let m = x.len() as f64;
    let floor = lambda / m;
    let weights = x
        .weights()
        .iter()
        .map(|w| (1.0 - lambda) * w + floor)
        .collect();
    SimplexPoint::new(weights)
}

/// Samples an action index from a categorical distribution, advancing the
/// random stream by exactly one draw.
pub fn sample_index<R: Rng + ?Sized>(p: &SimplexPoint, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (j, w) in p.weights().iter().enumerate() {
        if *w > 0.0 {
            last_positive = j;
        }
        cumulative += w;
        if u < cumulative {
            return j;
        }
    }
    // Rounding left the cumulative sum a hair below u; fall back to the
    // highest-index action that has positive mass.
    last_positive
}

/// Max over agents of the sup-norm distance between each agent's strategy
/// and the vertex of its pure assignment.
pub fn vertex_distance(x_profile: &[SimplexPoint], pure_profile: &[usize]) -> Result<f64> {
    if x_profile.len() != pure_profile.len() {
        return Err(Error::invalid(format!(
            "strategy profile has {} agents but pure profile has {}",
            x_profile.len(),
            pure_profile.len()
        )));
    }
    let mut worst = 0.0_f64;
    for (x, &j) in x_profile.iter().zip(pure_profile) {
        if j >= x.len() {
            return Err(Error::invalid(format!(
                "pure profile action {j} out of range for {}-action strategy",
                x.len()
            )));
        }
        worst = worst.max(x.distance_to_vertex(j));
    }
    Ok(worst)
}
