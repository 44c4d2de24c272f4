//! Delay-adapted function approximation.
//!
//! The learner keeps the newest oracle prediction it has. When delayed
//! observations arrive (FIFO order) it feeds them to the oracle one at a time,
//! discards the intermediate predictions and keeps only the last. Actions are
//! drawn from the minimizer of
//!
//! ```text
//!     Σ_a p(a) f̂(x, a) − (1/γ) Σ_a log p(a)
//! ```
//!
//! over the simplex. Stationarity gives `p(a) = 1 / (γ (f̂(x,a) + λ))` for
//! the unique `λ` making the `p(a)` sum to one; [`barrier_solve`] finds `λ`
//! by bisection.

use crate::envs::LossTable;
use crate::feedback::FeedbackEvent;
use crate::harness::Learner;
use crate::oracles::RegressionOracle;
use crate::rng::RngStream;
use crate::simplex::SimplexDistribution;
use crate::{Error, Result};

pub const BARRIER_RESIDUAL_TOL: f64 = 1e-12;
pub const BARRIER_MAX_ITERS: usize = 200;

/// `sqrt(K T / R)` where `R` bounds the oracle's square-loss regret.
pub fn default_gamma(actions: f64, horizon: f64, oracle_regret_bound: f64) -> f64 {
    (actions * horizon / oracle_regret_bound).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub dist: SimplexDistribution,
    pub lambda: f64,
    pub iterations: usize,
    /// `|Σ_a 1/(γ(f_a + λ)) − 1|` at the returned `λ`.
    pub residual: f64,
}

/// The objective being minimized, for checking solutions.
pub fn barrier_objective(p: &[f64], values: &[f64], gamma: f64) -> f64 {
    p.iter()
        .zip(values)
        .map(|(p, f)| p * f - p.ln() / gamma)
        .sum()
}

/// Minimizes the log-barrier objective for one context's loss estimates.
pub fn barrier_solve(values: &[f64], gamma: f64) -> Result<BarrierSolution> {
    if values.is_empty() {
        return Err(Error::Contract("barrier solve over zero actions".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Contract(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("non-finite loss estimate {v}")));
    }
    if values.len() == 1 {
        return Ok(BarrierSolution {
            dist: SimplexDistribution::point_mass(1, 0),
            lambda: 1.0 / gamma - values[0],
            iterations: 0,
            residual: 0.0,
        });
    }
    let k = values.len() as f64;
    let f_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mass = |lambda: f64| -> f64 { values.iter().map(|f| 1.0 / (gamma * (f + lambda))).sum() };

    // at lo the argmin action alone has mass 1; at hi every term is <= 1/K
    let mut lo = 1.0 / gamma - f_min;
    let mut hi = k / gamma - f_min;
    // endpoints are exact in real arithmetic; allow for their rounding
    if !(mass(lo) >= 1.0 - 1e-9 && mass(hi) <= 1.0 + 1e-9) {
        return Err(Error::Contract(format!(
            "barrier bracket [{lo}, {hi}] does not contain the root"
        )));
    }

    let mut lambda = hi;
    let mut residual = (mass(hi) - 1.0).abs();
    let mut iterations = 0;
    if (mass(lo) - 1.0).abs() <= BARRIER_RESIDUAL_TOL {
        lambda = lo;
        residual = (mass(lo) - 1.0).abs();
    } else {
        while iterations < BARRIER_MAX_ITERS && residual > BARRIER_RESIDUAL_TOL {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let g = mass(mid);
            lambda = mid;
            residual = (g - 1.0).abs();
            if g > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    let p: Vec<f64> = values
        .iter()
        .map(|f| 1.0 / (gamma * (f + lambda)))
        .collect();
    let dist = SimplexDistribution::normalized(p)?;
    Ok(BarrierSolution {
        dist,
        lambda,
        iterations,
        residual,
    })
}

/// Largest deviation of `f_a − 1/(γ p(a))` from its median: zero at an exact
/// stationary point, since every action shares the multiplier `−λ`.
pub fn stationarity_residual(p: &[f64], values: &[f64], gamma: f64) -> f64 {
    let mut g: Vec<f64> = p
        .iter()
        .zip(values)
        .map(|(p, f)| f - 1.0 / (gamma * p))
        .collect();
    let mut sorted = g.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    g.iter_mut()
        .map(|v| (*v - median).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug)]
pub struct DaFa<O> {
    oracle: O,
    gamma: f64,
    current: LossTable,
    last_tau: Option<usize>,
    last_dist: Option<SimplexDistribution>,
    out_of_order: usize,
}

impl<O: RegressionOracle> DaFa<O> {
    /// Before any feedback the learner uses the oracle's prediction on the
    /// empty history.
    pub fn new(oracle: O, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let current = oracle.predict();
        Ok(Self {
            oracle,
            gamma,
            current,
            last_tau: None,
            last_dist: None,
            out_of_order: 0,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn oracle(&self) -> &O {
        &self.oracle
    }

    pub fn into_oracle(self) -> O {
        self.oracle
    }

    /// The loss estimate currently used for action selection.
    pub fn current(&self) -> &LossTable {
        &self.current
    }

    /// Origin round of the most recent observation fed to the oracle.
    pub fn last_tau(&self) -> Option<usize> {
        self.last_tau
    }

    /// Observations that arrived older than one already processed; only
    /// possible when the delay schedule is not FIFO.
    pub fn out_of_order(&self) -> usize {
        self.out_of_order
    }

    /// Feeds a batch to the oracle in origin order and keeps the final
    /// prediction. The batch must be sorted by origin round.
    pub fn ingest_batch(&mut self, batch: &[FeedbackEvent]) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        if batch
            .windows(2)
            .any(|w| w[0].origin_round > w[1].origin_round)
        {
            return Err(Error::Contract(
                "feedback batch not sorted by origin round".into(),
            ));
        }
        for event in batch {
            if self.last_tau.is_some_and(|tau| event.origin_round < tau) {
                self.out_of_order += 1;
            }
            self.oracle
                .update(event.context, event.action, event.loss)?;
        }
        self.current = self.oracle.predict();
        let newest = batch[batch.len() - 1].origin_round;
        self.last_tau = Some(self.last_tau.map_or(newest, |tau| tau.max(newest)));
        Ok(())
    }

    /// Action distribution for `context` under the current estimate.
    pub fn distribution(&self, context: usize) -> Result<SimplexDistribution> {
        Ok(barrier_solve(self.current.row(context), self.gamma)?.dist)
    }

    pub fn act(&mut self, context: usize, rng: &mut RngStream) -> Result<usize> {
        let dist = self.distribution(context)?;
        let action = dist.sample(rng);
        self.last_dist = Some(dist);
        Ok(action)
    }
}

impl<O: RegressionOracle> Learner for DaFa<O> {
    fn name(&self) -> &str {
        "dafa"
    }

    fn choose(&mut self, _round: usize, context: usize, rng: &mut RngStream) -> Result<usize> {
        self.act(context, rng)
    }

    fn receive_feedback(&mut self, _round: usize, batch: &[FeedbackEvent]) -> Result<()> {
        self.ingest_batch(batch)
    }

    fn last_action_distribution(&self) -> Option<&SimplexDistribution> {
        self.last_dist.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::FunctionClass;
    use crate::oracles::{PerfectOracle, Vovk, VOVK_MAX_ETA};
    use proptest::prelude::*;
    use std::sync::Arc;

    /// Independent check: dense grid search over the 2-simplex.
    fn grid_min_k2(values: &[f64], gamma: f64) -> (f64, f64) {
        let n = 1_000_000;
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..n {
            let p0 = i as f64 / n as f64;
            let obj = barrier_objective(&[p0, 1.0 - p0], values, gamma);
            if obj < best.0 {
                best = (obj, p0);
            }
        }
        best
    }

    #[test]
    fn equal_values_give_uniform() {
        for k in 1..6 {
            let sol = barrier_solve(&vec![0.3; k], 2.5).unwrap();
            for p in sol.dist.weights() {
                assert!((p - 1.0 / k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn golden_ratio_example() {
        let sol = barrier_solve(&[0.0, 1.0], 1.0).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.lambda - phi).abs() < 1e-9);
        let p = sol.dist.weights();
        assert!((p[0] - 0.618_034).abs() < 1e-6);
        assert!((p[1] - 0.381_966).abs() < 1e-6);
        let (obj, p0) = grid_min_k2(&[0.0, 1.0], 1.0);
        assert!((p0 - p[0]).abs() < 1e-5);
        assert!(barrier_objective(p, &[0.0, 1.0], 1.0) <= obj + 1e-12);
    }

    #[test]
    fn large_gamma_concentrates() {
        let values = [0.2, 0.6, 0.9];
        let mut last = 0.0;
        for gamma in [10.0, 100.0, 1000.0] {
            let p = barrier_solve(&values, gamma).unwrap().dist.get(0);
            assert!(p > last);
            last = p;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn single_action() {
        let sol = barrier_solve(&[0.7], 3.0).unwrap();
        assert_eq!(sol.dist.weights(), &[1.0]);
    }

    #[test]
    fn bad_inputs() {
        assert!(barrier_solve(&[], 1.0).is_err());
        assert!(barrier_solve(&[0.1, f64::NAN], 1.0).is_err());
        assert!(barrier_solve(&[0.1], 0.0).is_err());
    }

    #[test]
    fn default_gamma_values() {
        let e = std::f64::consts::E;
        assert!((default_gamma(1.0, 36.0 * e.ln(), 36.0 * e.ln()) - 1.0).abs() < 1e-15);
        let g = default_gamma(2.0, 1e4, 36.0 * 16f64.ln());
        assert!((g - 14.16).abs() < 0.01, "gamma {g}");
        let g2 = default_gamma(2.0, 2e4, 36.0 * 16f64.ln());
        assert!((g2 / g - 2f64.sqrt()).abs() < 1e-12);
    }

    fn small_class() -> Arc<FunctionClass> {
        Arc::new(
            FunctionClass::new(
                3,
                2,
                2,
                vec![0.0, 1.0, 0.5, 0.5, 1.0, 0.0, 0.2, 0.8, 0.3, 0.3, 0.9, 0.1],
                Some(0),
            )
            .unwrap(),
        )
    }

    fn ev(s: usize, d: usize, x: usize, a: usize, y: f64) -> FeedbackEvent {
        FeedbackEvent::new(s, d, x, a, y).unwrap()
    }

    #[test]
    fn empty_batch_changes_nothing() {
        let oracle = Vovk::new(small_class(), VOVK_MAX_ETA).unwrap();
        let mut learner = DaFa::new(oracle, 2.0).unwrap();
        let before = learner.current().clone();
        learner.ingest_batch(&[]).unwrap();
        assert_eq!(learner.current(), &before);
        assert_eq!(learner.last_tau(), None);
        let a = learner.distribution(1).unwrap();
        let b = learner.distribution(1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_feeds_every_event() {
        let oracle = Vovk::new(small_class(), VOVK_MAX_ETA).unwrap();
        let mut learner = DaFa::new(oracle, 2.0).unwrap();
        let batch = [
            ev(0, 3, 0, 1, 1.0),
            ev(1, 2, 1, 0, 0.0),
            ev(2, 1, 0, 0, 0.0),
        ];
        learner.ingest_batch(&batch).unwrap();
        assert_eq!(learner.oracle().updates(), 3);
        assert_eq!(learner.current(), &learner.oracle().predict());
        assert_eq!(learner.last_tau(), Some(2));
    }

    #[test]
    fn unsorted_batch_rejected() {
        let oracle = Vovk::new(small_class(), VOVK_MAX_ETA).unwrap();
        let mut learner = DaFa::new(oracle, 2.0).unwrap();
        assert!(learner
            .ingest_batch(&[ev(3, 0, 0, 0, 0.0), ev(1, 2, 0, 0, 0.0)])
            .is_err());
    }

    #[test]
    fn perfect_oracle_uses_star() {
        let star = small_class().table(0);
        let mut learner = DaFa::new(PerfectOracle::new(star.clone()), 1.0).unwrap();
        learner.ingest_batch(&[ev(0, 0, 0, 0, 0.0)]).unwrap();
        assert_eq!(learner.current(), &star);
        // f⋆(0, ·) = (0, 1), γ = 1
        let p = learner.distribution(0).unwrap();
        assert!((p.get(0) - 0.618_034).abs() < 1e-6);
        let mut rng = RngStream::new(12);
        let n = 20_000;
        let zeros = (0..n)
            .filter(|_| learner.act(0, &mut rng).unwrap() == 0)
            .count();
        assert!((zeros as f64 / n as f64 - 0.618).abs() < 0.015);
    }

    #[test]
    fn constant_estimate_is_uniform() {
        let fc = Arc::new(FunctionClass::new(1, 1, 4, vec![0.4; 4], Some(0)).unwrap());
        let learner = DaFa::new(Vovk::new(fc, VOVK_MAX_ETA).unwrap(), 7.0).unwrap();
        for p in learner.distribution(0).unwrap().weights() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn kkt_certificate(values in prop::collection::vec(0.0f64..=1.0, 1..12), gamma in 0.01f64..500.0) {
            let sol = barrier_solve(&values, gamma).unwrap();
            let p = sol.dist.weights();
            let raw: f64 = values.iter().map(|f| 1.0 / (gamma * (f + sol.lambda))).sum();
            prop_assert!((raw - 1.0).abs() <= 1e-9);
            prop_assert!(stationarity_residual(p, &values, gamma) <= 1e-7);
            let k = values.len() as f64;
            let floor = 1.0 / (gamma * (1.0 + k / gamma + 1.0));
            prop_assert!(p.iter().all(|x| *x >= floor && *x > 0.0));
        }
    }
}
