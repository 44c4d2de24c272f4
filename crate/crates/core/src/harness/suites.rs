//! Built-in verification suites. Each check reports the measured quantity
//! next to its threshold so failures say how far off they are.

// `!(x <= bound)` so that NaN counts as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use super::config::{EnvSpec, ExperimentConfig, LearnerSpec, Tuning};
use super::instrument::Instrumented;
use super::runner::{run, RunRecord};
use crate::dafa::{barrier_objective, barrier_solve, default_gamma, stationarity_residual};
use crate::delay::{pending_counts, DelaySchedule, ScheduleSpec};
use crate::envs::{FunctionClass, PolicyClass};
use crate::exp4dale::{default_eta, Exp4Dale};
use crate::feedback::FeedbackEvent;
use crate::oracles::{OracleSpec, RegressionOracle, Vovk, VOVK_MAX_ETA};
use crate::rng::RngStream;
use crate::simplex::{SimplexDistribution, SIMPLEX_TOL};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub const SUITES: &[&str] = &[
    "unit",
    "oracle-equivalence",
    "vovk",
    "exp4dale",
    "zero-delay",
    "dafa",
    "thm3",
    "blocking",
    "all",
];

/// Runs a suite by name.
pub fn run_suite(name: &str) -> Result<Vec<CheckOutcome>> {
    Ok(match name {
        "unit" => vec![unit_checks()],
        "oracle-equivalence" => vec![oracle_equivalence()],
        "vovk" => vovk_checks()?,
        "exp4dale" => exp4dale_checks()?,
        "zero-delay" => vec![zero_delay()?],
        "dafa" => vec![dafa_check()?],
        "thm3" => vec![thm3_check()?],
        "blocking" => vec![blocking_check()?],
        "all" => {
            let mut out = vec![unit_checks(), oracle_equivalence()];
            out.extend(vovk_checks()?);
            let mut e = exp4dale_checks()?;
            let drift = e.pop();
            out.extend(e);
            out.push(zero_delay()?);
            out.extend(drift);
            out.push(dafa_check()?);
            out.push(thm3_check()?);
            out.push(blocking_check()?);
            out
        }
        other => {
            return Err(crate::Error::Config(format!(
                "unknown suite '{other}'; expected one of {}",
                SUITES.join(", ")
            )))
        }
    })
}

fn outcome(
    id: u32,
    name: &str,
    start: Instant,
    failures: Vec<String>,
    ok_detail: String,
) -> CheckOutcome {
    CheckOutcome {
        id,
        name: name.to_string(),
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            ok_detail
        } else {
            failures.join("; ")
        },
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn seeds(n: u64) -> Vec<u64> {
    (1..=n).collect()
}

fn random_values(rng: &mut RngStream, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.uniform()).collect()
}

// ---------------------------------------------------------------- criterion 1

pub fn unit_checks() -> CheckOutcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = RngStream::new(20_240_601);

    // simplex
    for _ in 0..1000 {
        let k = 1 + rng.below(12);
        let raw: Vec<f64> = (0..k).map(|_| rng.uniform() + 1e-9).collect();
        match SimplexDistribution::normalized(raw) {
            Ok(p) => {
                let sum: f64 = p.weights().iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL || p.weights().iter().any(|w| *w < 0.0) {
                    failures.push(format!("simplex sum {sum}"));
                    break;
                }
                if p.sample(&mut rng) >= k {
                    failures.push("sample out of range".into());
                    break;
                }
            }
            Err(e) => {
                failures.push(format!("normalize failed: {e}"));
                break;
            }
        }
    }
    if SimplexDistribution::new(vec![0.7, 0.7]).is_ok()
        || SimplexDistribution::new(vec![1.5, -0.5]).is_ok()
    {
        failures.push("invalid simplex accepted".into());
    }

    // FIFO validation
    if DelaySchedule::new_fifo(vec![2, 0, 0]).is_ok() {
        failures.push("non-FIFO schedule accepted".into());
    }
    if DelaySchedule::new_fifo(vec![2, 1, 0]).is_err() {
        failures.push("FIFO schedule rejected".into());
    }

    // pending-count identity
    for i in 0..100 {
        let horizon = 50 + rng.below(200);
        let max = rng.below(40);
        let sched = match DelaySchedule::fifo_random(horizon, max, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("fifo_random: {e}"));
                break;
            }
        };
        let sigma: usize = pending_counts(&sched).iter().sum();
        if !sched.is_fifo() || sigma != sched.total_delay() {
            failures.push(format!(
                "schedule {i}: sum sigma {sigma} vs D {}",
                sched.total_delay()
            ));
            break;
        }
    }

    // estimator dominance
    let mut dominance_checked = 0;
    'dominance: for _ in 0..100 {
        let contexts = 1 + rng.below(4);
        let k = 2 + rng.below(3);
        let n = 2 + rng.below(10);
        let Ok(pc) = PolicyClass::random(n, contexts, k, &mut rng) else {
            failures.push("random policy class".into());
            break;
        };
        let eta = 0.01 + rng.uniform();
        let Ok(mut learner) = Exp4Dale::new(Arc::new(pc), eta) else {
            failures.push("learner construction".into());
            break;
        };
        for round in 0..100 {
            let x = rng.below(contexts);
            let a = learner.choose(round, x, &mut rng);
            let q = learner.stored_q(round).unwrap_or(f64::NAN);
            let shift = random_values(&mut rng, n);
            learner.apply_estimates(&shift);
            let loss = rng.uniform();
            let Ok(event) = FeedbackEvent::new(round, 0, x, a, loss) else {
                failures.push("event construction".into());
                break 'dominance;
            };
            match learner.estimate(&event) {
                Ok(est) => {
                    let plain = loss / q;
                    if est.values.iter().any(|v| *v > plain) {
                        failures.push(format!("estimate exceeds {plain}"));
                        break 'dominance;
                    }
                }
                Err(e) => {
                    failures.push(format!("estimate: {e}"));
                    break 'dominance;
                }
            }
            if learner.update(&[event]).is_err() {
                failures.push("update".into());
                break 'dominance;
            }
            dominance_checked += 1;
        }
    }

    // KKT residuals
    let mut worst_kkt: f64 = 0.0;
    for i in 0..1000 {
        let k = [2, 5, 10][i % 3];
        let values = random_values(&mut rng, k);
        let gamma = 0.5 + 200.0 * rng.uniform();
        match barrier_solve(&values, gamma) {
            Ok(sol) => {
                worst_kkt =
                    worst_kkt.max(stationarity_residual(sol.dist.weights(), &values, gamma));
            }
            Err(e) => {
                failures.push(format!("barrier solve: {e}"));
                break;
            }
        }
    }
    if worst_kkt > 1e-7 {
        failures.push(format!("KKT residual {worst_kkt:.2e} > 1e-7"));
    }

    // golden-ratio example
    match barrier_solve(&[0.0, 1.0], 1.0) {
        Ok(sol) => {
            let p = sol.dist.weights();
            if (p[0] - 0.618_03).abs() > 1e-5 + 1e-6 || (p[1] - 0.381_97).abs() > 1e-5 + 1e-6 {
                failures.push(format!("golden ratio example gave {p:?}"));
            }
            let phi_inv = (5f64.sqrt() - 1.0) / 2.0;
            if (p[0] - phi_inv).abs() > 1e-6 {
                failures.push(format!("golden ratio p0 {}", p[0]));
            }
        }
        Err(e) => failures.push(format!("golden ratio: {e}")),
    }

    // Vovk hand-computed update
    let two = Arc::new(FunctionClass::new(2, 1, 1, vec![0.0, 1.0], None).expect("valid class"));
    match Vovk::new(two, VOVK_MAX_ETA).and_then(|mut o| {
        o.update(0, 0, 0.0)?;
        Ok(o.distribution().weights().to_vec())
    }) {
        Ok(q) if (q[0] - 0.51389).abs() <= 1e-5 && (q[1] - 0.48611).abs() <= 1e-5 => {}
        Ok(q) => failures.push(format!("Vovk hand update gave {q:?}")),
        Err(e) => failures.push(format!("Vovk hand update: {e}")),
    }

    // per-step chain over a 1000-round run
    match vovk_stream(16, 4, 2, 1000, 99) {
        Ok(stats) if stats.chain_violations == 0 => {}
        Ok(stats) => failures.push(format!("{} chain violations", stats.chain_violations)),
        Err(e) => failures.push(format!("chain run: {e}")),
    }

    outcome(
        1,
        "deterministic unit suite",
        start,
        failures,
        format!(
            "simplex, FIFO, 100 pending identities, {dominance_checked} dominance events, \
             worst KKT {worst_kkt:.1e}, worked examples, 1000-step chain all hold"
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Grid points per axis of each zoom level (100² = 10⁴ per level).
const GRID_AXIS: usize = 100;
const ZOOM_LEVELS: usize = 8;

/// Brute-force minimum of the barrier objective over the 3-simplex by
/// repeatedly gridding a shrinking window around the incumbent.
pub fn brute_force_barrier_k3(values: &[f64], gamma: f64) -> (f64, [f64; 3]) {
    let eval = |p0: f64, p1: f64| {
        let p2 = 1.0 - p0 - p1;
        if p0 <= 0.0 || p1 <= 0.0 || p2 <= 0.0 {
            f64::INFINITY
        } else {
            barrier_objective(&[p0, p1, p2], values, gamma)
        }
    };
    let (mut c0, mut c1, mut half) = (0.5, 0.5, 0.5);
    let mut best = (f64::INFINITY, [1.0 / 3.0; 3]);
    for _ in 0..ZOOM_LEVELS {
        let step = 2.0 * half / GRID_AXIS as f64;
        for i in 0..GRID_AXIS {
            for j in 0..GRID_AXIS {
                let p0 = c0 - half + (i as f64 + 0.5) * step;
                let p1 = c1 - half + (j as f64 + 0.5) * step;
                let v = eval(p0, p1);
                if v < best.0 {
                    best = (v, [p0, p1, 1.0 - p0 - p1]);
                }
            }
        }
        c0 = best.1[0];
        c1 = best.1[1];
        half = 2.0 * step;
    }
    best
}

pub fn oracle_equivalence() -> CheckOutcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = RngStream::new(31_415);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let values = random_values(&mut rng, 3);
        let gamma = 1.0 + 49.0 * rng.uniform();
        let sol = match barrier_solve(&values, gamma) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("instance {i}: {e}"));
                continue;
            }
        };
        let solved = barrier_objective(sol.dist.weights(), &values, gamma);
        let (brute, _) = brute_force_barrier_k3(&values, gamma);
        let gap = (solved - brute).abs();
        worst = worst.max(gap);
        if gap > 1e-6 {
            failures.push(format!("instance {i}: objective gap {gap:.2e}"));
        }
    }
    outcome(
        2,
        "barrier solve vs brute force",
        start,
        failures,
        format!("50 instances, worst objective gap {worst:.2e} <= 1e-6"),
    )
}

// ---------------------------------------------------------------- criteria 3, 4

/// Feeds a Vovk oracle `horizon` realizable Bernoulli observations at
/// uniform contexts and actions; function 0 is `f⋆`.
pub fn vovk_stream(
    functions: usize,
    contexts: usize,
    actions: usize,
    horizon: usize,
    seed: u64,
) -> Result<super::instrument::OracleStats> {
    let mut rng = RngStream::new(seed);
    let class = Arc::new(FunctionClass::random(
        functions,
        contexts,
        actions,
        Some(0),
        &mut rng,
    )?);
    let star = class.star_table();
    let mut oracle = Instrumented::new(Box::new(Vovk::new(class.clone(), VOVK_MAX_ETA)?), star);
    for _ in 0..horizon {
        let x = rng.below(contexts);
        let a = rng.below(actions);
        let y = if rng.bernoulli(class.value(0, x, a)) {
            1.0
        } else {
            0.0
        };
        oracle.update(x, a, y)?;
    }
    Ok(oracle.stats().clone())
}

pub fn vovk_checks() -> Result<Vec<CheckOutcome>> {
    let start = Instant::now();
    let stats: Vec<_> = super::parallel::map_seeds(&seeds(50), |s| vovk_stream(16, 4, 2, 5000, s))
        .into_iter()
        .collect::<Result<_>>()?;
    let ln_f = 16f64.ln();
    let sq = mean(
        stats
            .iter()
            .map(|s| s.square_loss_regret.unwrap_or(f64::NAN)),
    );
    let kl = mean(stats.iter().map(|s| s.kl_sum.unwrap_or(f64::NAN)));
    let drift = mean(stats.iter().map(|s| s.sup_drift_sq_sum));
    let mut f3 = Vec::new();
    if !(sq <= 36.0 * ln_f) {
        f3.push(format!(
            "mean square-loss regret {sq:.3} > {:.3}",
            36.0 * ln_f
        ));
    }
    let c3 = outcome(
        3,
        "Vovk regret bound",
        start,
        f3,
        format!(
            "mean square-loss regret {sq:.3} <= 36 ln 16 = {:.3}",
            36.0 * ln_f
        ),
    );
    let mut f4 = Vec::new();
    if !(kl <= ln_f) {
        f4.push(format!("mean KL sum {kl:.4} > {ln_f:.4}"));
    }
    if !(drift <= 2.0 * ln_f) {
        f4.push(format!(
            "mean sup-drift² sum {drift:.4} > {:.4}",
            2.0 * ln_f
        ));
    }
    let c4 = outcome(
        4,
        "Vovk stability bound",
        start,
        f4,
        format!(
            "mean KL sum {kl:.4} <= {ln_f:.4}, mean sup-drift² sum {drift:.4} <= {:.4}",
            2.0 * ln_f
        ),
    );
    Ok(vec![c3, c4])
}

// ---------------------------------------------------------------- criteria 5, 6, 7

pub const PLANTED_GOOD: f64 = 0.1;
pub const PLANTED_BAD: f64 = 0.9;

pub fn planted_config(
    learner: LearnerSpec,
    d: usize,
    horizon: usize,
    n_seeds: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        learner,
        environment: EnvSpec::Planted {
            contexts: 3,
            actions: 2,
            policies: None,
            good: PLANTED_GOOD,
            bad: PLANTED_BAD,
        },
        delays: ScheduleSpec::Fixed(d),
        horizon,
        seeds: seeds(n_seeds),
        output: None,
        bound_constant: 3.0,
        keep_rounds: false,
    }
}

fn exp4dale_auto() -> LearnerSpec {
    LearnerSpec::Exp4dale {
        eta: Tuning::Auto,
        total_delay: None,
    }
}

fn mean_regret(runs: &[RunRecord]) -> f64 {
    mean(runs.iter().map(|r| r.totals.regret))
}

pub fn exp4dale_checks() -> Result<Vec<CheckOutcome>> {
    let start = Instant::now();
    let (k, n, t) = (2.0f64, 8.0f64, 10_000usize);
    let mut f5 = Vec::new();
    let mut f7 = Vec::new();
    let mut d5 = Vec::new();
    let mut d7 = Vec::new();
    for d in [0usize, 10, 50] {
        let runs = run(&planted_config(exp4dale_auto(), d, t, 20))?;
        let small = run(&planted_config(exp4dale_auto(), d, t / 10, 20))?;
        let total_delay = (d * t) as f64;
        let r = mean_regret(&runs);
        let bound = 3.0 * ((k * t as f64 * n.ln()).sqrt() + (total_delay * n.ln()).sqrt());
        let ratio = (r / t as f64) / (mean_regret(&small) / (t / 10) as f64);
        if !(r <= bound) {
            f5.push(format!("d={d}: mean regret {r:.1} > {bound:.1}"));
        }
        if !(ratio < 0.5) {
            f5.push(format!("d={d}: per-round regret ratio {ratio:.3} >= 0.5"));
        }
        d5.push(format!("d={d}: R={r:.1}<={bound:.0}, ratio {ratio:.2}"));

        let eta = default_eta(n, k, t as f64, total_delay);
        let drift = mean(
            runs.iter()
                .map(|r| r.totals.policy_drift.unwrap_or(f64::NAN)),
        );
        let limit = eta * (total_delay + t as f64);
        if !(drift <= limit) {
            f7.push(format!("d={d}: mean drift {drift:.3} > {limit:.3}"));
        }
        d7.push(format!("d={d}: {drift:.3}<={limit:.1}"));
    }
    Ok(vec![
        outcome(5, "EXP4-DALE regret bound", start, f5, d5.join(", ")),
        outcome(7, "policy drift bound", start, f7, d7.join(", ")),
    ])
}

pub fn zero_delay() -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut failures = Vec::new();
    let with_rounds = |learner| {
        let mut c = planted_config(learner, 0, 2000, 5);
        c.keep_rounds = true;
        run(&c)
    };
    let a = with_rounds(exp4dale_auto())?;
    let b = with_rounds(LearnerSpec::Exp4 {
        eta: Tuning::Auto,
        total_delay: None,
    })?;
    for (x, y) in a.iter().zip(&b) {
        let same_rounds = x.rounds == y.rounds;
        let same_drift =
            x.totals.policy_drift.map(f64::to_bits) == y.totals.policy_drift.map(f64::to_bits);
        if !(same_rounds && same_drift) {
            failures.push(format!("seed {} diverges", x.seed));
        }
    }
    Ok(outcome(
        6,
        "zero-delay reduction",
        start,
        failures,
        "5 seeds bit-identical to EXP4".into(),
    ))
}

// ---------------------------------------------------------------- criterion 8

pub fn hard_class_config(d: usize, horizon: usize, n_seeds: u64) -> ExperimentConfig {
    ExperimentConfig {
        learner: LearnerSpec::Dafa {
            gamma: Tuning::Auto,
            oracle: OracleSpec::Vovk(VOVK_MAX_ETA),
        },
        environment: EnvSpec::HardClass { contexts: 4 },
        delays: ScheduleSpec::Fixed(d),
        horizon,
        seeds: seeds(n_seeds),
        output: None,
        bound_constant: 3.0,
        keep_rounds: false,
    }
}

pub fn dafa_check() -> Result<CheckOutcome> {
    let start = Instant::now();
    let (k, f, t, d) = (2.0, 16.0, 10_000usize, 20usize);
    let runs = run(&hard_class_config(d, t, 20))?;
    let small = run(&hard_class_config(d, t / 10, 20))?;
    let r = mean_regret(&runs);
    let dmax = mean(runs.iter().map(|r| r.totals.max_delay as f64));
    let total = mean(runs.iter().map(|r| r.totals.total_delay as f64));
    let bound = 3.0 * ((k * t as f64 * f64::ln(f)).sqrt() + (dmax * total * f64::ln(f)).sqrt());
    let ratio = (r / t as f64) / (mean_regret(&small) / (t / 10) as f64);
    let mut failures = Vec::new();
    if !(r <= bound) {
        failures.push(format!("mean regret {r:.2} > {bound:.1}"));
    }
    if !(ratio < 0.5) {
        failures.push(format!("per-round regret ratio {ratio:.3} >= 0.5"));
    }
    Ok(outcome(
        8,
        "DA-FA regret bound",
        start,
        failures,
        format!("mean regret {r:.2} <= {bound:.0}, per-round ratio {ratio:.3} < 0.5"),
    ))
}

// ---------------------------------------------------------------- criterion 9

pub fn thm3_config(horizon: usize, n_seeds: u64) -> ExperimentConfig {
    let t = horizon.max(1) as f64;
    ExperimentConfig {
        learner: LearnerSpec::Dafa {
            gamma: Tuning::Value(default_gamma(2.0, t, 36.0 * (t + 1.0).ln())),
            oracle: OracleSpec::ScriptedInstance,
        },
        environment: EnvSpec::Thm3,
        delays: ScheduleSpec::Fixed(1),
        horizon,
        seeds: seeds(n_seeds),
        output: None,
        bound_constant: 3.0,
        keep_rounds: false,
    }
}

pub fn thm3_check() -> Result<CheckOutcome> {
    let start = Instant::now();
    let t = 2000usize;
    let runs = run(&thm3_config(t, 20))?;
    let mut failures = Vec::new();
    for r in &runs {
        let sq = r.totals.oracle.as_ref().and_then(|o| o.square_loss_regret);
        if sq != Some(0.0) {
            failures.push(format!("seed {}: oracle square-loss regret {sq:?}", r.seed));
        }
    }
    let m = mean_regret(&runs);
    if !(m >= 0.4 * t as f64) {
        failures.push(format!("mean regret {m:.1} < {}", 0.4 * t as f64));
    }
    Ok(outcome(
        9,
        "unstable-oracle lower bound",
        start,
        failures,
        format!(
            "oracle regret 0 on all 20 seeds, mean regret {m:.1} >= {}",
            0.4 * t as f64
        ),
    ))
}

// ---------------------------------------------------------------- criterion 10

pub fn blocking_config(d: usize, experts: usize, horizon: usize, n_seeds: u64) -> ExperimentConfig {
    ExperimentConfig {
        learner: exp4dale_auto(),
        environment: EnvSpec::Blocking { d, experts },
        delays: ScheduleSpec::Blocking(d),
        horizon,
        seeds: seeds(n_seeds),
        output: None,
        bound_constant: 3.0,
        keep_rounds: false,
    }
}

pub fn blocking_check() -> Result<CheckOutcome> {
    let start = Instant::now();
    let (d, n) = (20, 16);
    let runs = run(&blocking_config(d, n, 8400, 20))?;
    let total = mean(runs.iter().map(|r| r.totals.total_delay as f64));
    let floor = 0.1 * (total * (n as f64).ln()).sqrt();
    let m = mean_regret(&runs);
    let mut failures = Vec::new();
    if !(m >= floor) {
        failures.push(format!("mean regret {m:.1} < {floor:.1}"));
    }
    Ok(outcome(
        10,
        "blocking lower bound",
        start,
        failures,
        format!("mean regret {m:.1} >= 0.1 sqrt(D ln N) = {floor:.1} (D = {total})"),
    ))
}
