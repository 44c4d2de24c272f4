//! Experiment configuration (JSON).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::delay::ScheduleSpec;
use crate::oracles::OracleSpec;
use crate::{Error, Result};

/// A step size that is either fixed or derived from the instance
/// (`"auto"` in JSON).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "TuningRepr", into = "TuningRepr")]
pub enum Tuning {
    Value(f64),
    #[default]
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TuningRepr {
    Num(f64),
    Str(String),
}

impl TryFrom<TuningRepr> for Tuning {
    type Error = String;

    fn try_from(r: TuningRepr) -> std::result::Result<Self, String> {
        match r {
            TuningRepr::Num(v) => Ok(Tuning::Value(v)),
            TuningRepr::Str(s) if s == "auto" => Ok(Tuning::Auto),
            TuningRepr::Str(s) => Err(format!("expected \"auto\" or a number, got \"{s}\"")),
        }
    }
}

impl From<Tuning> for TuningRepr {
    fn from(t: Tuning) -> Self {
        match t {
            Tuning::Value(v) => TuningRepr::Num(v),
            Tuning::Auto => TuningRepr::Str("auto".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerSpec {
    /// EXP4 with delay-adapted estimators. `total_delay` is the upper bound
    /// on the sum of delays handed to the learner; it defaults to the
    /// schedule's actual sum.
    Exp4dale {
        #[serde(default)]
        eta: Tuning,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        total_delay: Option<usize>,
    },
    /// Plain EXP4 with standard importance weights.
    Exp4 {
        #[serde(default)]
        eta: Tuning,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        total_delay: Option<usize>,
    },
    Dafa {
        #[serde(default)]
        gamma: Tuning,
        #[serde(default = "default_oracle")]
        oracle: OracleSpec,
    },
    Uniform,
    /// Replays the comparator's own actions; regret is zero by construction.
    Comparator,
}

fn default_oracle() -> OracleSpec {
    OracleSpec::Vovk(crate::oracles::VOVK_MAX_ETA)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Random class with i.i.d. uniform entries; `f⋆` is function 0.
    Realizable {
        functions: usize,
        contexts: usize,
        actions: usize,
    },
    /// The `2^n`-function two-action class with gap `sqrt(n / 100T)`.
    HardClass { contexts: usize },
    /// Linear-regret instance for an unstable oracle; pair with
    /// `scripted:instance` and `fixed:1`.
    Thm3,
    /// Planted-policy adversarial script over all `actions^contexts`
    /// policies (or `policies` random ones).
    Planted {
        contexts: usize,
        actions: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policies: Option<usize>,
        good: f64,
        bad: f64,
    },
    /// Block-constant Bernoulli(1/2) expert losses; needs `blocking:<d>`.
    Blocking { d: usize, experts: usize },
    /// Policy script loaded from JSON.
    Script { path: String },
    /// Realizable instance loaded from JSON (a dumped function class).
    ClassFile { path: String },
}

fn default_bound_constant() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub learner: LearnerSpec,
    pub environment: EnvSpec,
    pub delays: ScheduleSpec,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Constant `C` in the bound-check report.
    #[serde(default = "default_bound_constant")]
    pub bound_constant: f64,
    /// Store every round in the records (needed for `runs.csv`).
    #[serde(default = "default_true")]
    pub keep_rounds: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if !(self.bound_constant.is_finite() && self.bound_constant > 0.0) {
            return Err(Error::Config("bound_constant must be positive".into()));
        }
        match &self.learner {
            LearnerSpec::Exp4dale { eta, .. } | LearnerSpec::Exp4 { eta, .. } => {
                check_tuning(eta, "eta")?
            }
            LearnerSpec::Dafa { gamma, .. } => check_tuning(gamma, "gamma")?,
            _ => {}
        }
        match &self.environment {
            EnvSpec::Blocking { d, experts } => {
                if self.delays != ScheduleSpec::Blocking(*d) {
                    return Err(Error::Config(format!(
                        "blocking environment with d = {d} needs delays \"blocking:{d}\""
                    )));
                }
                if *experts == 0 {
                    return Err(Error::Config("blocking environment needs experts".into()));
                }
            }
            EnvSpec::Planted { good, bad, .. } => {
                if !(0.0..=1.0).contains(good) || !(0.0..=1.0).contains(bad) {
                    return Err(Error::Config("planted losses must lie in [0, 1]".into()));
                }
            }
            EnvSpec::HardClass { contexts } if *contexts > self.horizon => {
                return Err(Error::Config("hard class needs contexts <= horizon".into()));
            }
            _ => {}
        }
        if self.horizon > 0 {
            // surfaces bad schedule strings or explicit files before any run
            self.delays.build(self.horizon)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Applies a `name=value` override used by parameter sweeps.
    pub fn with_param(&self, name: &str, value: &str) -> Result<Self> {
        let mut json = serde_json::to_value(self)?;
        let mut slot = &mut json;
        for part in name.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
        }
        *slot = match serde_json::from_str::<serde_json::Value>(value) {
            Ok(v) => v,
            Err(_) => serde_json::Value::String(value.to_string()),
        };
        let updated: Self = serde_json::from_value(json)?;
        updated.validate()?;
        Ok(updated)
    }
}

fn check_tuning(t: &Tuning, what: &str) -> Result<()> {
    match t {
        Tuning::Value(v) if !(v.is_finite() && *v > 0.0) => {
            Err(Error::Config(format!("{what} must be positive, got {v}")))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "learner": {"kind": "exp4dale", "eta": "auto"},
            "environment": {"kind": "planted", "contexts": 3, "actions": 2, "good": 0.1, "bad": 0.9},
            "delays": "fixed:5",
            "horizon": 100,
            "seeds": [1, 2, 3]
        }"#
    }

    #[test]
    fn parses_and_hashes() {
        let c: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        c.validate().unwrap();
        assert_eq!(
            c.learner,
            LearnerSpec::Exp4dale {
                eta: Tuning::Auto,
                total_delay: None
            }
        );
        assert_eq!(c.bound_constant, 3.0);
        assert_eq!(c.hash().len(), 64);
        let again: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again.hash(), c.hash());
    }

    #[test]
    fn numeric_tuning() {
        let t: Tuning = serde_json::from_str("0.25").unwrap();
        assert_eq!(t, Tuning::Value(0.25));
        assert!(serde_json::from_str::<Tuning>("\"fast\"").is_err());
    }

    #[test]
    fn rejects_duplicate_seeds_and_bad_schedules() {
        let mut c: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        c.seeds = vec![];
        assert!(c.validate().is_err());
        c.seeds = vec![1];
        c.environment = EnvSpec::Blocking { d: 4, experts: 3 };
        assert!(c.validate().is_err());
        c.delays = ScheduleSpec::Blocking(4);
        assert!(c.validate().is_ok());
        c.horizon = 101;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_overrides() {
        let c: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        let d = c.with_param("delays", "fixed:9").unwrap();
        assert_eq!(d.delays, ScheduleSpec::Fixed(9));
        let e = c.with_param("learner.eta", "0.5").unwrap();
        assert_eq!(
            e.learner,
            LearnerSpec::Exp4dale {
                eta: Tuning::Value(0.5),
                total_delay: None
            }
        );
        let h = c.with_param("horizon", "50").unwrap();
        assert_eq!(h.horizon, 50);
        assert!(c.with_param("nope", "1").is_err());
    }
}
