//! Comparators, cross-seed aggregation and regret-bound reports.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LearnerSpec};
use super::runner::{RunRecord, RunTotals};
use crate::envs::PolicyClass;

/// Best fixed policy in hindsight over a scripted sequence; ties go to the
/// lowest index. Returns the policy and its cumulative loss.
pub fn best_policy(
    policies: &PolicyClass,
    contexts: &[usize],
    losses: &[Vec<f64>],
) -> (usize, f64) {
    let mut totals = vec![0.0; policies.len()];
    for (x, row) in contexts.iter().zip(losses) {
        for (i, total) in totals.iter_mut().enumerate() {
            *total += row[policies.action(i, *x)];
        }
    }
    let mut best = 0;
    for (i, v) in totals.iter().enumerate() {
        if *v < totals[best] {
            best = i;
        }
    }
    (best, totals[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Number of rounds played.
    pub rounds: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub formula: String,
    pub constant: f64,
    /// Bound evaluated on the mean delay statistics across seeds.
    pub bound: f64,
    pub mean_regret: f64,
    pub holds: bool,
}

/// Regret bound `C(√(KT ln N) + √(D ln N))` for EXP4-style learners.
pub fn exp4_bound(c: f64, actions: f64, horizon: f64, policies: f64, total_delay: f64) -> f64 {
    let ln_n = policies.ln();
    c * ((actions * horizon * ln_n).sqrt() + (total_delay * ln_n).sqrt())
}

/// Regret bound `C(√(KT ln|F|) + √(d_max·D·ln|F|))` for DA-FA with a
/// Hedge-based oracle.
pub fn dafa_bound(
    c: f64,
    actions: f64,
    horizon: f64,
    functions: f64,
    max_delay: f64,
    total_delay: f64,
) -> f64 {
    let ln_f = functions.ln();
    c * ((actions * horizon * ln_f).sqrt() + (max_delay * total_delay * ln_f).sqrt())
}

fn bound_check(
    config: &ExperimentConfig,
    runs: &[RunRecord],
    mean_regret: f64,
) -> Option<BoundCheck> {
    let first = &runs.first()?.totals;
    let size = first.class_size? as f64;
    let k = first.num_actions as f64;
    let t = config.horizon as f64;
    let c = config.bound_constant;
    let mean = |f: fn(&RunTotals) -> f64| {
        runs.iter().map(|r| f(&r.totals)).sum::<f64>() / runs.len() as f64
    };
    let d = mean(|r| r.total_delay as f64);
    let (formula, bound) = match &config.learner {
        LearnerSpec::Exp4dale { .. } | LearnerSpec::Exp4 { .. } => (
            "C*(sqrt(K*T*ln N) + sqrt(D*ln N))",
            exp4_bound(c, k, t, size, d),
        ),
        LearnerSpec::Dafa { .. } => (
            "C*(sqrt(K*T*ln F) + sqrt(d_max*D*ln F))",
            dafa_bound(c, k, t, size, mean(|r| r.max_delay as f64), d),
        ),
        _ => return None,
    };
    Some(BoundCheck {
        formula: formula.to_string(),
        constant: c,
        bound,
        mean_regret,
        holds: mean_regret <= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTotals {
    pub seed: u64,
    #[serde(flatten)]
    pub totals: RunTotals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub runs_schema: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub learner: String,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub regret: Stat,
    pub learner_loss: Stat,
    pub best_loss: Stat,
    pub total_delay: Stat,
    pub max_delay: Stat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_drift: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_square_loss_regret: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_kl_sum: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_sup_drift_sq_sum: Option<Stat>,
    pub chain_violations: usize,
    pub curve: Vec<CurvePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundCheck>,
    pub per_seed: Vec<SeedTotals>,
}

pub const SUMMARY_SCHEMA: &str = "summary.v1";
pub const RUNS_SCHEMA: &str = "runs.v1";

/// Number of interior checkpoints on the regret curve.
const CURVE_POINTS: usize = 20;

fn checkpoints(horizon: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=CURVE_POINTS)
        .map(|i| (horizon * i).div_ceil(CURVE_POINTS))
        .filter(|r| *r > 0)
        .collect();
    out.dedup();
    out
}

fn stat_where(runs: &[RunRecord], f: impl Fn(&RunTotals) -> Option<f64>) -> Option<Stat> {
    let values: Option<Vec<f64>> = runs.iter().map(|r| f(&r.totals)).collect();
    Stat::of(&values?)
}

pub fn aggregate(config: &ExperimentConfig, runs: &[RunRecord]) -> Summary {
    let all = |f: fn(&RunTotals) -> f64| {
        Stat::of(&runs.iter().map(|r| f(&r.totals)).collect::<Vec<_>>()).unwrap_or(Stat {
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            max: 0.0,
        })
    };
    let regret = all(|r| r.regret);
    let curve = checkpoints(config.horizon)
        .into_iter()
        .filter_map(|rounds| {
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.cumulative_regret.get(rounds - 1).copied())
                .collect();
            Stat::of(&values).map(|s| CurvePoint {
                rounds,
                mean: s.mean,
                std: s.std,
            })
        })
        .collect();
    Summary {
        schema: SUMMARY_SCHEMA.into(),
        runs_schema: RUNS_SCHEMA.into(),
        config_hash: config.hash(),
        config: config.clone(),
        learner: runs.first().map(|r| r.learner.clone()).unwrap_or_default(),
        horizon: config.horizon,
        seeds: runs.iter().map(|r| r.seed).collect(),
        regret,
        learner_loss: all(|r| r.learner_loss),
        best_loss: all(|r| r.best_loss),
        total_delay: all(|r| r.total_delay as f64),
        max_delay: all(|r| r.max_delay as f64),
        policy_drift: stat_where(runs, |r| r.policy_drift),
        oracle_square_loss_regret: stat_where(runs, |r| r.oracle.as_ref()?.square_loss_regret),
        oracle_kl_sum: stat_where(runs, |r| r.oracle.as_ref()?.kl_sum),
        oracle_sup_drift_sq_sum: stat_where(runs, |r| Some(r.oracle.as_ref()?.sup_drift_sq_sum)),
        chain_violations: runs
            .iter()
            .filter_map(|r| r.totals.oracle.as_ref())
            .map(|o| o.chain_violations)
            .sum(),
        curve,
        bound: bound_check(config, runs, regret.mean),
        per_seed: runs
            .iter()
            .map(|r| SeedTotals {
                seed: r.seed,
                totals: r.totals.clone(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_policy_breaks_ties_low() {
        let pc = PolicyClass::identity(3);
        let (i, v) = best_policy(&pc, &[0, 0], &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!((i, v), (2, 0.0));
        let (i, _) = best_policy(&pc, &[0], &[vec![0.5, 0.5, 0.5]]);
        assert_eq!(i, 0);
    }

    #[test]
    fn population_std() {
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (2.0, 1.0, 1.0, 3.0));
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn checkpoints_end_at_horizon() {
        assert_eq!(checkpoints(5), vec![1, 2, 3, 4, 5]);
        assert_eq!(*checkpoints(1000).last().unwrap(), 1000);
        assert_eq!(checkpoints(1000).len(), 20);
        assert!(checkpoints(0).is_empty());
    }

    #[test]
    fn bounds_match_hand_values() {
        let b = exp4_bound(1.0, 2.0, 8.0, std::f64::consts::E, 4.0);
        assert!((b - 6.0).abs() < 1e-12);
        let b = dafa_bound(2.0, 1.0, 1.0, std::f64::consts::E, 3.0, 3.0);
        assert!((b - 8.0).abs() < 1e-12);
    }
}
