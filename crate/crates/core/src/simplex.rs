//! Probability vectors over finite index sets.

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::{Error, Result};

/// Tolerance within which a vector counts as a distribution.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Beyond this the input is rejected instead of renormalized.
pub const RENORMALIZE_LIMIT: f64 = 1e-6;

/// A probability vector. Entries are nonnegative and sum to one within
/// [`SIMPLEX_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexDistribution {
    weights: Vec<f64>,
}

impl SimplexDistribution {
    /// Validates `weights` as a distribution. Sums off by more than
    /// [`SIMPLEX_TOL`] but within [`RENORMALIZE_LIMIT`] are renormalized.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("bad weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        let gap = (total - 1.0).abs();
        if gap <= SIMPLEX_TOL {
            Ok(Self { weights })
        } else if gap <= RENORMALIZE_LIMIT {
            Ok(Self {
                weights: weights.into_iter().map(|w| w / total).collect(),
            })
        } else {
            Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )))
        }
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty set");
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, index: usize) -> Self {
        assert!(index < n);
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Self { weights }
    }

    /// Normalizes `exp(log_weights)` after subtracting the maximum.
    pub fn from_log_weights(log_weights: &[f64]) -> Self {
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { weights }
    }

    /// Normalizes a nonnegative vector with positive total mass.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "cannot normalize vector with total {total}"
            )));
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Inverse-CDF draw over the stored order.
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding slack above the last partial sum
        self.weights
            .iter()
            .rposition(|w| *w > 0.0)
            .unwrap_or(self.weights.len() - 1)
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// `Σ_i p_i v_i`.
    pub fn dot(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

impl TryFrom<Vec<f64>> for SimplexDistribution {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<SimplexDistribution> for Vec<f64> {
    fn from(d: SimplexDistribution) -> Self {
        d.weights
    }
}

/// Draws an index from `dist`. Free-function form of
/// [`SimplexDistribution::sample`].
pub fn sample_categorical(dist: &SimplexDistribution, rng: &mut RngStream) -> usize {
    dist.sample(rng)
}

/// Validates raw weights and draws from them.
pub fn sample_weights(weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    let dist = SimplexDistribution::new(weights.to_vec())?;
    Ok(dist.sample(rng))
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}
