//! Measures an oracle from the outside: square-loss regret against `f⋆`,
//! KL between consecutive mixture weights and sup-norm drift between
//! consecutive predictions.

use serde::{Deserialize, Serialize};

use crate::envs::LossTable;
use crate::oracles::{kl_increment, sup_drift, RegressionOracle};
use crate::simplex::SimplexDistribution;
use crate::Result;

/// Slack allowed in the per-step `drift² <= 2 KL` check.
const CHAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleStats {
    pub updates: usize,
    /// `Σ (f̂_t(z_t) − f⋆(z_t))²` over consumed examples, with `f̂_t` the
    /// prediction before the example was consumed.
    pub square_loss_regret: Option<f64>,
    /// `Σ KL(q_t ‖ q_{t+1})`, for oracles exposing mixture weights.
    pub kl_sum: Option<f64>,
    pub sup_drift_sq_sum: f64,
    /// Steps where `sup_drift² > 2 KL`.
    pub chain_violations: usize,
}

pub struct Instrumented {
    inner: Box<dyn RegressionOracle>,
    star: Option<LossTable>,
    cached: LossTable,
    stats: OracleStats,
}

impl Instrumented {
    pub fn new(inner: Box<dyn RegressionOracle>, star: Option<LossTable>) -> Self {
        let cached = inner.predict();
        let has_weights = inner.weights().is_some();
        Self {
            stats: OracleStats {
                square_loss_regret: star.as_ref().map(|_| 0.0),
                kl_sum: has_weights.then_some(0.0),
                ..OracleStats::default()
            },
            inner,
            star,
            cached,
        }
    }

    pub fn stats(&self) -> &OracleStats {
        &self.stats
    }
}

impl RegressionOracle for Instrumented {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn predict(&self) -> LossTable {
        self.cached.clone()
    }

    fn update(&mut self, context: usize, action: usize, y: f64) -> Result<()> {
        if let (Some(star), Some(acc)) = (&self.star, self.stats.square_loss_regret.as_mut()) {
            let diff = self.cached.get(context, action) - star.get(context, action);
            *acc += diff * diff;
        }
        let before: Option<SimplexDistribution> = self.inner.weights().cloned();
        self.inner.update(context, action, y)?;
        let next = self.inner.predict();
        let drift = sup_drift(&self.cached, &next);
        self.stats.sup_drift_sq_sum += drift * drift;
        if let (Some(before), Some(after)) = (before, self.inner.weights()) {
            let kl = kl_increment(&before, after)?;
            if let Some(sum) = self.stats.kl_sum.as_mut() {
                *sum += kl;
            }
            if drift * drift > 2.0 * kl + CHAIN_SLACK {
                self.stats.chain_violations += 1;
            }
        }
        self.stats.updates += 1;
        self.cached = next;
        Ok(())
    }

    fn updates(&self) -> usize {
        self.inner.updates()
    }

    fn weights(&self) -> Option<&SimplexDistribution> {
        self.inner.weights()
    }
}
