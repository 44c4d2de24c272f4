//! Runs one configured experiment per seed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{EnvSpec, ExperimentConfig, LearnerSpec, Tuning};
use super::instrument::{Instrumented, OracleStats};
use super::learner::{FixedMapLearner, Learner, UniformLearner};
use super::metrics::best_policy;
use super::parallel::map_seeds;
use crate::dafa::{default_gamma, DaFa};
use crate::delay::DelaySchedule;
use crate::envs::{
    argmin_actions, make_blocking_instance, make_hard_class, make_planted_script,
    make_thm3_instance, Benchmark, ContextLaw, Environment, FunctionClass, InstanceFile,
    PolicyClass, PolicyScript, RealizableEnv, ScriptedEnv,
};
use crate::exp4dale::{default_eta, Exp4, Exp4Dale};
use crate::feedback::{FeedbackEvent, PendingQueue};
use crate::oracles::{OracleSpec, PerfectOracle, RegressionOracle, ScriptedOracle, Vovk};
use crate::rng::{streams, RngStream};
use crate::simplex::SimplexDistribution;
use crate::{Error, Result};

/// Largest policy class enumerated automatically for realizable instances.
const MAX_AUTO_POLICIES: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub context: usize,
    pub action: usize,
    pub realized_loss: f64,
    pub expected_loss: f64,
    pub best_loss: f64,
    pub regret: f64,
    /// Observations delivered at the end of this round.
    pub arrivals: usize,
    /// Observations still outstanding at the end of this round.
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub regret: f64,
    pub learner_loss: f64,
    pub best_loss: f64,
    /// Step size used (η for policy learners, γ for DA-FA).
    pub step_size: Option<f64>,
    pub num_actions: usize,
    /// Size of the learner's class (policies or functions).
    pub class_size: Option<usize>,
    pub comparator_policy: Option<usize>,
    pub total_delay: usize,
    pub max_delay: usize,
    pub fifo: bool,
    pub delivered: usize,
    pub skipped: usize,
    pub delivered_delay: usize,
    pub pending_sum: usize,
    /// `Σ_t ‖p_{t+d_t} − p_t‖₁` over delivered rounds, for policy learners.
    pub policy_drift: Option<f64>,
    pub oracle: Option<OracleStats>,
    /// Observations fed to the oracle older than one already processed.
    pub out_of_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub horizon: usize,
    pub learner: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rounds: Vec<RoundRecord>,
    /// Cumulative regret after each round.
    #[serde(skip)]
    pub cumulative_regret: Vec<f64>,
    pub totals: RunTotals,
}

/// A fully built per-seed problem.
pub struct Instance {
    pub env: Box<dyn Environment>,
    pub schedule: DelaySchedule,
    /// `π⋆` as a context → action map.
    pub comparator: Vec<usize>,
    pub comparator_policy: Option<usize>,
    /// Oracle script shipped with the instance, if any.
    pub oracle_script: Option<Vec<usize>>,
}

fn load_json<T: serde::de::DeserializeOwned>(path: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn enumerate_policies(contexts: usize, actions: usize) -> Option<PolicyClass> {
    let count = (actions as u64).checked_pow(contexts as u32)?;
    (count <= MAX_AUTO_POLICIES)
        .then(|| PolicyClass::all(contexts, actions).ok())
        .flatten()
}

fn realizable(class: FunctionClass, law: ContextLaw) -> Result<(Box<dyn Environment>, Vec<usize>)> {
    let policies = enumerate_policies(class.num_contexts(), class.num_actions());
    let mut env = RealizableEnv::new(class, law)?;
    if let Some(pc) = policies {
        env = env.with_policies(pc)?;
    }
    let comparator = argmin_actions(env.star());
    Ok((Box::new(env), comparator))
}

fn scripted(
    script: PolicyScript,
    horizon: usize,
) -> Result<(Box<dyn Environment>, Vec<usize>, usize)> {
    if script.horizon() < horizon {
        return Err(Error::Config(format!(
            "script has {} rounds, horizon is {horizon}",
            script.horizon()
        )));
    }
    let (best, _) = best_policy(
        &script.policies,
        &script.contexts[..horizon],
        &script.losses[..horizon],
    );
    let comparator = (0..script.policies.num_contexts())
        .map(|x| script.policies.action(best, x))
        .collect();
    Ok((Box::new(ScriptedEnv::new(script)), comparator, best))
}

pub fn build_instance(config: &ExperimentConfig, seed: u64) -> Result<Instance> {
    let horizon = config.horizon;
    let mut rng = RngStream::with_stream(seed, streams::INSTANCE);
    let mut schedule = config.delays.build(horizon)?;
    let mut oracle_script = None;
    let mut comparator_policy = None;
    let (env, comparator) = match &config.environment {
        EnvSpec::Realizable {
            functions,
            contexts,
            actions,
        } => {
            let class = FunctionClass::random(*functions, *contexts, *actions, Some(0), &mut rng)?;
            realizable(class, ContextLaw::Uniform)?
        }
        EnvSpec::HardClass { contexts } => realizable(
            make_hard_class(*contexts, horizon, &mut rng)?,
            ContextLaw::Uniform,
        )?,
        EnvSpec::Thm3 => {
            let inst = make_thm3_instance(horizon, &mut rng)?;
            oracle_script = Some(inst.script);
            let env = RealizableEnv::new(inst.class, ContextLaw::Sequence(inst.contexts))?;
            let comparator = argmin_actions(env.star());
            (Box::new(env) as Box<dyn Environment>, comparator)
        }
        EnvSpec::Planted {
            contexts,
            actions,
            policies,
            good,
            bad,
        } => {
            let pc = match policies {
                Some(n) => PolicyClass::random(*n, *contexts, *actions, &mut rng)?,
                None => PolicyClass::all(*contexts, *actions)?,
            };
            let script = make_planted_script(pc, horizon, *good, *bad, &mut rng)?;
            let (env, comparator, best) = scripted(script, horizon)?;
            comparator_policy = Some(best);
            (env, comparator)
        }
        EnvSpec::Blocking { d, experts } => {
            let (script, sched) = make_blocking_instance(horizon, *d, *experts, &mut rng)?;
            schedule = sched;
            let (env, comparator, best) = scripted(script, horizon)?;
            comparator_policy = Some(best);
            (env, comparator)
        }
        EnvSpec::Script { path } => {
            let (env, comparator, best) = scripted(PolicyScript::load_json(path)?, horizon)?;
            comparator_policy = Some(best);
            (env, comparator)
        }
        EnvSpec::ClassFile { path } => {
            let file: InstanceFile = load_json(path)?;
            let file = file.validated()?;
            oracle_script = file.script;
            let law = file
                .contexts
                .map_or(ContextLaw::Uniform, ContextLaw::Sequence);
            realizable(file.class, law)?
        }
    };
    Ok(Instance {
        env,
        schedule,
        comparator,
        comparator_policy,
        oracle_script,
    })
}

enum AnyLearner {
    Plain(Box<dyn Learner>),
    Dafa(Box<DaFa<Instrumented>>),
}

impl AnyLearner {
    fn as_learner(&mut self) -> &mut dyn Learner {
        match self {
            AnyLearner::Plain(l) => l.as_mut(),
            AnyLearner::Dafa(l) => l.as_mut(),
        }
    }

    fn policy_distribution(&self) -> Option<&SimplexDistribution> {
        match self {
            AnyLearner::Plain(l) => l.policy_distribution(),
            AnyLearner::Dafa(_) => None,
        }
    }
}

fn policy_learner_parts(
    instance: &Instance,
    eta: &Tuning,
    total_delay: Option<usize>,
    horizon: usize,
) -> Result<(Arc<PolicyClass>, f64)> {
    let pc = instance.env.policy_class().cloned().ok_or_else(|| {
        Error::Config("policy-class learner needs an environment with a policy class".into())
    })?;
    let d = total_delay.unwrap_or_else(|| instance.schedule.total_delay());
    let eta = match eta {
        Tuning::Value(v) => *v,
        Tuning::Auto => default_eta(
            pc.len() as f64,
            pc.num_actions() as f64,
            horizon.max(1) as f64,
            d as f64,
        ),
    };
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Config(format!(
            "automatic step size is {eta}; a class of one policy has nothing to learn"
        )));
    }
    Ok((Arc::new(pc), eta))
}

fn build_learner(
    config: &ExperimentConfig,
    instance: &Instance,
) -> Result<(AnyLearner, Option<f64>, Option<usize>)> {
    let horizon = config.horizon;
    Ok(match &config.learner {
        LearnerSpec::Exp4dale { eta, total_delay } => {
            let (pc, eta) = policy_learner_parts(instance, eta, *total_delay, horizon)?;
            let n = pc.len();
            (
                AnyLearner::Plain(Box::new(Exp4Dale::new(pc, eta)?)),
                Some(eta),
                Some(n),
            )
        }
        LearnerSpec::Exp4 { eta, total_delay } => {
            let (pc, eta) = policy_learner_parts(instance, eta, *total_delay, horizon)?;
            let n = pc.len();
            (
                AnyLearner::Plain(Box::new(Exp4::new(pc, eta)?)),
                Some(eta),
                Some(n),
            )
        }
        LearnerSpec::Dafa { gamma, oracle } => {
            let class = instance.env.function_class().cloned().ok_or_else(|| {
                Error::Config("DA-FA needs an environment with a function class".into())
            })?;
            let star = class.star_table();
            let size = class.len();
            let class = Arc::new(class);
            let inner: Box<dyn RegressionOracle> = match oracle {
                OracleSpec::Vovk(eta) => Box::new(Vovk::new(class.clone(), *eta)?),
                OracleSpec::Perfect => {
                    Box::new(PerfectOracle::new(star.clone().ok_or_else(|| {
                        Error::Config("perfect oracle needs a realizable instance".into())
                    })?))
                }
                OracleSpec::Scripted(path) => {
                    Box::new(ScriptedOracle::new(class.clone(), load_json(path)?)?)
                }
                OracleSpec::ScriptedInstance => {
                    let script = instance.oracle_script.clone().ok_or_else(|| {
                        Error::Config("environment ships no oracle script".into())
                    })?;
                    Box::new(ScriptedOracle::new(class.clone(), script)?)
                }
            };
            let gamma = match gamma {
                Tuning::Value(v) => *v,
                Tuning::Auto => default_gamma(
                    class.num_actions() as f64,
                    horizon.max(1) as f64,
                    oracle.regret_bound(size.max(2)),
                ),
            };
            let learner = DaFa::new(Instrumented::new(inner, star), gamma)?;
            (AnyLearner::Dafa(Box::new(learner)), Some(gamma), Some(size))
        }
        LearnerSpec::Uniform => (
            AnyLearner::Plain(Box::new(UniformLearner::new(instance.env.num_actions()))),
            None,
            None,
        ),
        LearnerSpec::Comparator => (
            AnyLearner::Plain(Box::new(FixedMapLearner::new(instance.comparator.clone()))),
            None,
            None,
        ),
    })
}

/// Runs a single seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let mut instance = build_instance(config, seed)?;
    let (mut learner, step_size, class_size) = build_learner(config, &instance)?;
    let horizon = config.horizon;
    let schedule = instance.schedule.clone();
    let mut env_rng = RngStream::with_stream(seed, streams::ENVIRONMENT);
    let mut learner_rng = RngStream::with_stream(seed, streams::LEARNER);
    let mut queue = PendingQueue::new(horizon);

    let mut rounds = Vec::with_capacity(if config.keep_rounds { horizon } else { 0 });
    let mut cumulative = Vec::with_capacity(horizon);
    let mut snapshots: Vec<SimplexDistribution> = Vec::new();
    let (mut regret, mut learner_loss, mut best_loss) = (0.0, 0.0, 0.0);
    let mut pending_sum = 0;
    let name = learner.as_learner().name().to_string();

    for t in 0..horizon {
        let step = instance.env.step(t, &mut env_rng)?;
        if let Some(p) = learner.policy_distribution() {
            snapshots.push(p.clone());
        }
        let action = learner
            .as_learner()
            .choose(t, step.context, &mut learner_rng)?;
        if action >= step.losses.len() {
            return Err(Error::Contract(format!(
                "learner chose invalid action {action}"
            )));
        }
        queue.push(FeedbackEvent::new(
            t,
            schedule.delay(t),
            step.context,
            action,
            step.losses[action],
        )?);
        let batch = queue.deliver(t)?;
        learner.as_learner().receive_feedback(t, &batch)?;

        let expected = step.expected[action];
        let best = step.expected[instance.comparator[step.context]];
        regret += expected - best;
        learner_loss += expected;
        best_loss += best;
        pending_sum += queue.pending();
        cumulative.push(regret);
        if config.keep_rounds {
            rounds.push(RoundRecord {
                t,
                context: step.context,
                action,
                realized_loss: step.losses[action],
                expected_loss: expected,
                best_loss: best,
                regret: expected - best,
                arrivals: batch.len(),
                pending: queue.pending(),
            });
        }
    }

    let policy_drift = (!snapshots.is_empty()).then(|| {
        (0..horizon)
            .filter(|t| schedule.is_delivered(*t))
            .map(|t| snapshots[schedule.arrival(t)].l1_distance(&snapshots[t]))
            .sum()
    });
    let (oracle, out_of_order) = match &learner {
        AnyLearner::Dafa(l) => (Some(l.oracle().stats().clone()), l.out_of_order()),
        AnyLearner::Plain(_) => (None, 0),
    };

    Ok(RunRecord {
        seed,
        horizon,
        learner: name,
        rounds,
        cumulative_regret: cumulative,
        totals: RunTotals {
            regret,
            learner_loss,
            best_loss,
            step_size,
            num_actions: instance.env.num_actions(),
            class_size,
            comparator_policy: instance.comparator_policy,
            total_delay: schedule.total_delay(),
            max_delay: schedule.max_delay(),
            fifo: schedule.is_fifo(),
            delivered: queue.delivered(),
            skipped: queue.skipped(),
            delivered_delay: queue.delivered_delay(),
            pending_sum,
            policy_drift,
            oracle,
            out_of_order,
        },
    })
}

/// Runs every seed of `config` (in parallel when enabled); records come back
/// in the config's seed order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    map_seeds(&config.seeds, |seed| run_seed(config, seed))
        .into_iter()
        .collect()
}

/// Oracle outputs observed by a DA-FA learner: the update count at which
/// each batch finished and the prediction it left behind.
pub fn dafa_trajectory<O: RegressionOracle>(
    learner: &mut DaFa<O>,
    batches: &[Vec<FeedbackEvent>],
) -> Result<Vec<(usize, crate::envs::LossTable)>> {
    let mut out = Vec::new();
    for batch in batches {
        if batch.is_empty() {
            continue;
        }
        learner.ingest_batch(batch)?;
        out.push((learner.oracle().updates(), learner.current().clone()));
    }
    Ok(out)
}

/// Benchmark kind of a config's environment.
pub fn benchmark_of(config: &ExperimentConfig, seed: u64) -> Result<Benchmark> {
    Ok(build_instance(config, seed)?.env.benchmark())
}
