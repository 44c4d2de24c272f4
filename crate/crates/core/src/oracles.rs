//! Online least-squares regression oracles.
//!
//! An oracle sees examples `((x, a), y)` one at a time and at any point can
//! report its current loss estimate `f̂` over the whole context/action grid.
//! [`Vovk`] is the Hedge-based aggregating forecaster over a finite class;
//! [`ScriptedOracle`] ignores its data and replays a fixed list of class
//! members; [`PerfectOracle`] always reports `f⋆`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envs::{FunctionClass, LossTable};
use crate::error::check_loss;
use crate::simplex::SimplexDistribution;
use crate::{Error, Result};

/// Largest step size for which the forecaster's regret and stability
/// guarantees hold.
pub const VOVK_MAX_ETA: f64 = 1.0 / 18.0;

const LOG_FLOOR: f64 = -745.0;

pub trait RegressionOracle: Send {
    fn name(&self) -> &str;

    /// Current prediction over the full grid. Pure read.
    fn predict(&self) -> LossTable;

    fn update(&mut self, context: usize, action: usize, y: f64) -> Result<()>;

    /// Number of examples consumed so far.
    fn updates(&self) -> usize;

    /// Mixture weights, for oracles that aggregate a class.
    fn weights(&self) -> Option<&SimplexDistribution> {
        None
    }
}

/// Hedge over a finite function class with square loss.
#[derive(Debug, Clone)]
pub struct Vovk {
    class: Arc<FunctionClass>,
    eta: f64,
    log_q: Vec<f64>,
    q: SimplexDistribution,
    updates: usize,
}

impl Vovk {
    pub fn new(class: Arc<FunctionClass>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= VOVK_MAX_ETA) {
            return Err(Error::Config(format!(
                "forecaster step size must be in (0, 1/18], got {eta}"
            )));
        }
        let n = class.len();
        Ok(Self {
            class,
            eta,
            log_q: vec![0.0; n],
            q: SimplexDistribution::uniform(n),
            updates: 0,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn distribution(&self) -> &SimplexDistribution {
        &self.q
    }

    pub fn class(&self) -> &FunctionClass {
        &self.class
    }

    /// `f̂(x, a) = Σ_f q(f) f(x, a)` at one point.
    pub fn predict_at(&self, context: usize, action: usize) -> f64 {
        let v: f64 = self
            .q
            .weights()
            .iter()
            .enumerate()
            .map(|(f, w)| w * self.class.value(f, context, action))
            .sum();
        v.clamp(0.0, 1.0)
    }
}

impl RegressionOracle for Vovk {
    fn name(&self) -> &str {
        "vovk"
    }

    fn predict(&self) -> LossTable {
        let contexts = self.class.num_contexts();
        let actions = self.class.num_actions();
        let mut values = vec![0.0; contexts * actions];
        for (f, w) in self.q.weights().iter().enumerate() {
            if *w > 0.0 {
                self.class.accumulate(f, *w, &mut values);
            }
        }
        for v in &mut values {
            *v = v.clamp(0.0, 1.0);
        }
        LossTable::new(contexts, actions, values).expect("mixture of [0,1] tables")
    }

    fn update(&mut self, context: usize, action: usize, y: f64) -> Result<()> {
        check_loss(y, "oracle label")?;
        for (f, l) in self.log_q.iter_mut().enumerate() {
            let r = self.class.value(f, context, action) - y;
            *l -= self.eta * r * r;
        }
        let max = self.log_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for l in &mut self.log_q {
            *l = (*l - max).max(LOG_FLOOR);
        }
        self.q = SimplexDistribution::from_log_weights(&self.log_q);
        self.updates += 1;
        Ok(())
    }

    fn updates(&self) -> usize {
        self.updates
    }

    fn weights(&self) -> Option<&SimplexDistribution> {
        Some(&self.q)
    }
}

/// Replays `script[k]` as its prediction after `k` updates, whatever the
/// data. Once the script runs out the last entry is repeated.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    class: Arc<FunctionClass>,
    script: Vec<usize>,
    updates: usize,
}

impl ScriptedOracle {
    pub fn new(class: Arc<FunctionClass>, script: Vec<usize>) -> Result<Self> {
        if script.is_empty() {
            return Err(Error::Config("empty oracle script".into()));
        }
        if let Some(f) = script.iter().find(|f| **f >= class.len()) {
            return Err(Error::Config(format!(
                "oracle script refers to function {f}, class has {}",
                class.len()
            )));
        }
        Ok(Self {
            class,
            script,
            updates: 0,
        })
    }

    pub fn current_index(&self) -> usize {
        self.script[self.updates.min(self.script.len() - 1)]
    }
}

impl RegressionOracle for ScriptedOracle {
    fn name(&self) -> &str {
        "scripted"
    }

    fn predict(&self) -> LossTable {
        self.class.table(self.current_index())
    }

    fn update(&mut self, _context: usize, _action: usize, y: f64) -> Result<()> {
        check_loss(y, "oracle label")?;
        self.updates += 1;
        Ok(())
    }

    fn updates(&self) -> usize {
        self.updates
    }
}

/// Always predicts `f⋆`.
#[derive(Debug, Clone)]
pub struct PerfectOracle {
    star: LossTable,
    updates: usize,
}

impl PerfectOracle {
    pub fn new(star: LossTable) -> Self {
        Self { star, updates: 0 }
    }
}

impl RegressionOracle for PerfectOracle {
    fn name(&self) -> &str {
        "perfect"
    }

    fn predict(&self) -> LossTable {
        self.star.clone()
    }

    fn update(&mut self, _context: usize, _action: usize, y: f64) -> Result<()> {
        check_loss(y, "oracle label")?;
        self.updates += 1;
        Ok(())
    }

    fn updates(&self) -> usize {
        self.updates
    }
}

/// `KL(q_t ‖ q_{t+1})` with `0 log 0 = 0`.
pub fn kl_increment(before: &SimplexDistribution, after: &SimplexDistribution) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::InvalidDistribution(
            "KL between distributions of different sizes".into(),
        ));
    }
    let mut kl = 0.0;
    for (p, q) in before.weights().iter().zip(after.weights()) {
        if *p == 0.0 {
            continue;
        }
        if *q == 0.0 {
            return Err(Error::InvalidDistribution(
                "KL undefined: next distribution drops support".into(),
            ));
        }
        kl += p * (p / q).ln();
    }
    // rounding can leave tiny negatives when the two are equal
    Ok(kl.max(0.0))
}

/// `max_{x,a} |f̂_t(x,a) - f̂_{t+1}(x,a)|`.
pub fn sup_drift(before: &LossTable, after: &LossTable) -> f64 {
    before.sup_distance(after)
}

/// Oracle selection in configs: `vovk`, `vovk:<eta>`, `scripted:<path>`,
/// `scripted:instance` (the environment's own script) or `perfect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OracleSpec {
    Vovk(f64),
    Scripted(String),
    ScriptedInstance,
    Perfect,
}

impl OracleSpec {
    /// Upper bound on the oracle's square-loss regret used by the automatic
    /// learning rate, for a class of `class_size` functions.
    pub fn regret_bound(&self, class_size: usize) -> f64 {
        match self {
            OracleSpec::Vovk(eta) => 2.0 * (class_size as f64).ln() / eta,
            // scripted and perfect oracles have no finite-class guarantee of
            // their own; fall back to the forecaster's at η = 1/18
            _ => 36.0 * (class_size as f64).ln(),
        }
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSpec::Vovk(eta) if *eta == VOVK_MAX_ETA => write!(f, "vovk"),
            OracleSpec::Vovk(eta) => write!(f, "vovk:{eta}"),
            OracleSpec::Scripted(p) => write!(f, "scripted:{p}"),
            OracleSpec::ScriptedInstance => write!(f, "scripted:instance"),
            OracleSpec::Perfect => write!(f, "perfect"),
        }
    }
}

fn parse_ratio(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

impl FromStr for OracleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized oracle '{s}'"));
        match s.split_once(':') {
            None if s == "vovk" => Ok(OracleSpec::Vovk(VOVK_MAX_ETA)),
            None if s == "perfect" => Ok(OracleSpec::Perfect),
            Some(("vovk", eta)) => {
                let eta = parse_ratio(eta).ok_or_else(bad)?;
                // decimal spellings of 1/18 round a hair above it
                let eta = if eta > VOVK_MAX_ETA && eta <= VOVK_MAX_ETA + 1e-6 {
                    VOVK_MAX_ETA
                } else {
                    eta
                };
                if !(eta > 0.0 && eta <= VOVK_MAX_ETA) {
                    return Err(Error::Config(format!(
                        "forecaster step size must be in (0, 1/18], got {eta}"
                    )));
                }
                Ok(OracleSpec::Vovk(eta))
            }
            Some(("scripted", "instance")) => Ok(OracleSpec::ScriptedInstance),
            Some(("scripted", path)) if !path.is_empty() => Ok(OracleSpec::Scripted(path.into())),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for OracleSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OracleSpec> for String {
    fn from(s: OracleSpec) -> Self {
        s.to_string()
    }
}
