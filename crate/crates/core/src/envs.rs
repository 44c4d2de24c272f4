//! Environments: realizable stochastic instances, scripted adversarial
//! instances over a policy class, and the lower-bound constructions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::delay::DelaySchedule;
use crate::error::check_loss;
use crate::rng::RngStream;
use crate::simplex::argmin;
use crate::{Error, Result};

/// A loss function over a finite `contexts × actions` grid, stored row-major
/// by context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    contexts: usize,
    actions: usize,
    values: Vec<f64>,
}

impl LossTable {
    pub fn new(contexts: usize, actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != contexts * actions {
            return Err(Error::InvalidInstance(format!(
                "loss table has {} values, expected {contexts}x{actions}",
                values.len()
            )));
        }
        for v in &values {
            check_loss(*v, "loss table")?;
        }
        Ok(Self {
            contexts,
            actions,
            values,
        })
    }

    pub fn constant(contexts: usize, actions: usize, value: f64) -> Self {
        Self {
            contexts,
            actions,
            values: vec![value; contexts * actions],
        }
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, context: usize, action: usize) -> f64 {
        self.values[context * self.actions + action]
    }

    /// Losses of every action at `context`.
    pub fn row(&self, context: usize) -> &[f64] {
        &self.values[context * self.actions..(context + 1) * self.actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sup-norm distance over the whole grid.
    pub fn sup_distance(&self, other: &LossTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Finite policy class: `table[i][x]` is policy `i`'s action at context `x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyClass {
    actions: usize,
    table: Vec<Vec<usize>>,
}

impl PolicyClass {
    pub fn new(actions: usize, table: Vec<Vec<usize>>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::InvalidInstance("empty policy class".into()));
        }
        let contexts = table[0].len();
        for (i, row) in table.iter().enumerate() {
            if row.len() != contexts {
                return Err(Error::InvalidInstance(format!(
                    "policy {i} covers {} contexts, expected {contexts}",
                    row.len()
                )));
            }
            if let Some(a) = row.iter().find(|a| **a >= actions) {
                return Err(Error::InvalidInstance(format!(
                    "policy {i} uses action {a} but K = {actions}"
                )));
            }
        }
        Ok(Self { actions, table })
    }

    /// Every deterministic map from `contexts` contexts to `actions` actions.
    /// Policy `i` plays the `x`-th base-`actions` digit of `i` at context `x`.
    pub fn all(contexts: usize, actions: usize) -> Result<Self> {
        let count = (actions as u64)
            .checked_pow(contexts as u32)
            .filter(|c| *c <= 1 << 20)
            .ok_or_else(|| Error::InvalidInstance("policy class too large to enumerate".into()))?;
        let table = (0..count)
            .map(|mut i| {
                (0..contexts)
                    .map(|_| {
                        let a = (i % actions as u64) as usize;
                        i /= actions as u64;
                        a
                    })
                    .collect()
            })
            .collect();
        Self::new(actions, table)
    }

    /// One context, policy `i` always plays action `i`.
    pub fn identity(actions: usize) -> Self {
        Self {
            actions,
            table: (0..actions).map(|a| vec![a]).collect(),
        }
    }

    pub fn random(
        count: usize,
        contexts: usize,
        actions: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let table = (0..count)
            .map(|_| (0..contexts).map(|_| rng.below(actions)).collect())
            .collect();
        Self::new(actions, table)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn num_contexts(&self) -> usize {
        self.table[0].len()
    }

    pub fn action(&self, policy: usize, context: usize) -> usize {
        self.table[policy][context]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ClassValues {
    Dense(Vec<f64>),
    /// One bit per entry; set bits are loss 1.
    Binary(Vec<u64>),
}

/// Finite loss-function class over a `contexts × actions` grid, optionally
/// carrying the index of the true function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClass {
    functions: usize,
    contexts: usize,
    actions: usize,
    values: ClassValues,
    star: Option<usize>,
}

impl FunctionClass {
    /// `values` is laid out `[function][context][action]`.
    pub fn new(
        functions: usize,
        contexts: usize,
        actions: usize,
        values: Vec<f64>,
        star: Option<usize>,
    ) -> Result<Self> {
        if functions == 0 || contexts == 0 || actions == 0 {
            return Err(Error::InvalidInstance("empty function class".into()));
        }
        if values.len() != functions * contexts * actions {
            return Err(Error::InvalidInstance(format!(
                "function class has {} values, expected {functions}x{contexts}x{actions}",
                values.len()
            )));
        }
        for v in &values {
            check_loss(*v, "function class")?;
        }
        let class = Self {
            functions,
            contexts,
            actions,
            values: ClassValues::Dense(values),
            star: None,
        };
        class.with_star(star)
    }

    fn binary(functions: usize, contexts: usize, actions: usize, bits: Vec<u64>) -> Self {
        Self {
            functions,
            contexts,
            actions,
            values: ClassValues::Binary(bits),
            star: None,
        }
    }

    pub fn with_star(mut self, star: Option<usize>) -> Result<Self> {
        if let Some(s) = star {
            if s >= self.functions {
                return Err(Error::InvalidInstance(format!(
                    "star index {s} out of range for {} functions",
                    self.functions
                )));
            }
        }
        self.star = star;
        Ok(self)
    }

    /// Class of `functions` tables with i.i.d. uniform entries.
    pub fn random(
        functions: usize,
        contexts: usize,
        actions: usize,
        star: Option<usize>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let values = (0..functions * contexts * actions)
            .map(|_| rng.uniform())
            .collect();
        Self::new(functions, contexts, actions, values, star)
    }

    pub fn len(&self) -> usize {
        self.functions
    }

    pub fn is_empty(&self) -> bool {
        self.functions == 0
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn star_index(&self) -> Option<usize> {
        self.star
    }

    pub fn value(&self, f: usize, context: usize, action: usize) -> f64 {
        let i = (f * self.contexts + context) * self.actions + action;
        match &self.values {
            ClassValues::Dense(v) => v[i],
            ClassValues::Binary(bits) => ((bits[i / 64] >> (i % 64)) & 1) as f64,
        }
    }

    /// `f(context, ·)`.
    pub fn row(&self, f: usize, context: usize) -> Vec<f64> {
        (0..self.actions)
            .map(|a| self.value(f, context, a))
            .collect()
    }

    pub fn table(&self, f: usize) -> LossTable {
        let values = (0..self.contexts)
            .flat_map(|x| (0..self.actions).map(move |a| (x, a)))
            .map(|(x, a)| self.value(f, x, a))
            .collect();
        LossTable {
            contexts: self.contexts,
            actions: self.actions,
            values,
        }
    }

    /// Adds `weight * f` into `out`, entry by entry.
    pub fn accumulate(&self, f: usize, weight: f64, out: &mut [f64]) {
        let stride = self.contexts * self.actions;
        match &self.values {
            ClassValues::Dense(v) => {
                for (o, x) in out.iter_mut().zip(&v[f * stride..(f + 1) * stride]) {
                    *o += weight * x;
                }
            }
            ClassValues::Binary(_) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += weight * self.value(f, j / self.actions, j % self.actions);
                }
            }
        }
    }

    pub fn star_table(&self) -> Option<LossTable> {
        self.star.map(|s| self.table(s))
    }
}

/// Where contexts come from in a realizable environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextLaw {
    Uniform,
    Sequence(Vec<usize>),
}

/// One round of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentStep {
    pub context: usize,
    /// Realized losses of every action; the learner sees only the chosen
    /// entry, and only once its delay has elapsed.
    pub losses: Vec<f64>,
    /// Expected losses `ℓ(x_t, ·)` used for regret.
    pub expected: Vec<f64>,
}

/// How regret's comparator is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    /// `π⋆(x) = argmin_a f⋆(x, a)`.
    PerContextArgmin,
    /// Best fixed policy of the class in hindsight.
    BestPolicy,
}

pub trait Environment: Send {
    fn num_contexts(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn step(&mut self, round: usize, rng: &mut RngStream) -> Result<EnvironmentStep>;
    fn benchmark(&self) -> Benchmark;

    fn function_class(&self) -> Option<&FunctionClass> {
        None
    }

    fn policy_class(&self) -> Option<&PolicyClass> {
        None
    }
}

/// Bernoulli losses drawn from `f⋆` of a realizable class.
#[derive(Debug, Clone)]
pub struct RealizableEnv {
    class: FunctionClass,
    star: LossTable,
    law: ContextLaw,
    policies: Option<PolicyClass>,
}

impl RealizableEnv {
    pub fn new(class: FunctionClass, law: ContextLaw) -> Result<Self> {
        let star = class.star_table().ok_or_else(|| {
            Error::InvalidInstance("realizable environment needs a star function".into())
        })?;
        if let ContextLaw::Sequence(seq) = &law {
            if let Some(x) = seq.iter().find(|x| **x >= class.num_contexts()) {
                return Err(Error::InvalidInstance(format!("context {x} out of range")));
            }
        }
        Ok(Self {
            class,
            star,
            law,
            policies: None,
        })
    }

    /// Attaches a policy class so policy-class learners can run here too.
    pub fn with_policies(mut self, policies: PolicyClass) -> Result<Self> {
        if policies.num_contexts() != self.class.num_contexts()
            || policies.num_actions() != self.class.num_actions()
        {
            return Err(Error::InvalidInstance(
                "policy class does not match the function class grid".into(),
            ));
        }
        self.policies = Some(policies);
        Ok(self)
    }

    pub fn star(&self) -> &LossTable {
        &self.star
    }
}

impl Environment for RealizableEnv {
    fn num_contexts(&self) -> usize {
        self.class.num_contexts()
    }

    fn num_actions(&self) -> usize {
        self.class.num_actions()
    }

    fn step(&mut self, round: usize, rng: &mut RngStream) -> Result<EnvironmentStep> {
        let context = match &self.law {
            ContextLaw::Uniform => rng.below(self.class.num_contexts()),
            ContextLaw::Sequence(seq) => *seq.get(round).ok_or_else(|| {
                Error::Config(format!("context sequence ends before round {round}"))
            })?,
        };
        let expected = self.star.row(context).to_vec();
        let losses = expected
            .iter()
            .map(|p| if rng.bernoulli(*p) { 1.0 } else { 0.0 })
            .collect();
        Ok(EnvironmentStep {
            context,
            losses,
            expected,
        })
    }

    fn benchmark(&self) -> Benchmark {
        Benchmark::PerContextArgmin
    }

    fn function_class(&self) -> Option<&FunctionClass> {
        Some(&self.class)
    }

    fn policy_class(&self) -> Option<&PolicyClass> {
        self.policies.as_ref()
    }
}

pub fn realizable_env(class: FunctionClass, law: ContextLaw) -> Result<RealizableEnv> {
    RealizableEnv::new(class, law)
}

/// Scripted contexts and loss vectors over a policy class; losses are both
/// realized and expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScript {
    pub policies: PolicyClass,
    pub contexts: Vec<usize>,
    pub losses: Vec<Vec<f64>>,
}

impl PolicyScript {
    pub fn new(policies: PolicyClass, contexts: Vec<usize>, losses: Vec<Vec<f64>>) -> Result<Self> {
        if contexts.len() != losses.len() {
            return Err(Error::InvalidInstance(format!(
                "{} contexts but {} loss rows",
                contexts.len(),
                losses.len()
            )));
        }
        let k = policies.num_actions();
        for (t, row) in losses.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidInstance(format!(
                    "loss row {t} has {} entries, K = {k}",
                    row.len()
                )));
            }
            for v in row {
                check_loss(*v, "loss script")?;
            }
        }
        if let Some(x) = contexts.iter().find(|x| **x >= policies.num_contexts()) {
            return Err(Error::InvalidInstance(format!("context {x} out of range")));
        }
        Ok(Self {
            policies,
            contexts,
            losses,
        })
    }

    pub fn horizon(&self) -> usize {
        self.contexts.len()
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: PolicyScript = serde_json::from_str(&text)?;
        // re-validate: deserialization alone skips the range checks
        let policies = PolicyClass::new(raw.policies.actions, raw.policies.table)?;
        Self::new(policies, raw.contexts, raw.losses)
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedEnv {
    script: PolicyScript,
}

impl ScriptedEnv {
    pub fn new(script: PolicyScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &PolicyScript {
        &self.script
    }
}

impl Environment for ScriptedEnv {
    fn num_contexts(&self) -> usize {
        self.script.policies.num_contexts()
    }

    fn num_actions(&self) -> usize {
        self.script.policies.num_actions()
    }

    fn step(&mut self, round: usize, _rng: &mut RngStream) -> Result<EnvironmentStep> {
        let context = *self
            .script
            .contexts
            .get(round)
            .ok_or_else(|| Error::Config(format!("script ends before round {round}")))?;
        let losses = self.script.losses[round].clone();
        Ok(EnvironmentStep {
            context,
            expected: losses.clone(),
            losses,
        })
    }

    fn benchmark(&self) -> Benchmark {
        Benchmark::BestPolicy
    }

    fn policy_class(&self) -> Option<&PolicyClass> {
        Some(&self.script.policies)
    }
}

pub fn adversarial_policy_env(
    policies: PolicyClass,
    losses: Vec<Vec<f64>>,
    contexts: Vec<usize>,
) -> Result<ScriptedEnv> {
    Ok(ScriptedEnv::new(PolicyScript::new(
        policies, contexts, losses,
    )?))
}

/// Gap of the hard class: `sqrt(n / (100 T))`.
pub fn hard_class_epsilon(contexts: usize, horizon: usize) -> f64 {
    (contexts as f64 / (100.0 * horizon as f64)).sqrt()
}

/// The `2^n`-function class with two actions: function `f` makes action
/// `(f >> x) & 1` optimal at context `x`, with loss `1/2 - ε` against `1/2`
/// for the other action. `f⋆` is drawn uniformly.
pub fn make_hard_class(
    contexts: usize,
    horizon: usize,
    rng: &mut RngStream,
) -> Result<FunctionClass> {
    if contexts == 0 || contexts > horizon {
        return Err(Error::InvalidInstance(format!(
            "hard class needs 1 <= n <= T, got n = {contexts}, T = {horizon}"
        )));
    }
    if contexts > 16 {
        return Err(Error::InvalidInstance(format!(
            "hard class with n = {contexts} has too many functions to enumerate"
        )));
    }
    let eps = hard_class_epsilon(contexts, horizon);
    let functions = 1usize << contexts;
    let mut values = Vec::with_capacity(functions * contexts * 2);
    for f in 0..functions {
        for x in 0..contexts {
            let best = (f >> x) & 1;
            for a in 0..2 {
                values.push(if a == best { 0.5 - eps } else { 0.5 });
            }
        }
    }
    let star = rng.below(functions);
    FunctionClass::new(functions, contexts, 2, values, Some(star))
}

/// Linear-regret instance for a delay-1 learner driven by an unstable
/// oracle: contexts are visited in order, and the scripted oracle's `t`-th
/// output agrees with `f⋆` exactly on the context it is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm3Instance {
    pub class: FunctionClass,
    /// Oracle output index after `k` updates.
    pub script: Vec<usize>,
    pub contexts: Vec<usize>,
}

impl Thm3Instance {
    pub fn schedule(&self) -> DelaySchedule {
        DelaySchedule::fixed(self.contexts.len(), 1).expect("delay 1 fits any horizon >= 1")
    }
}

pub fn make_thm3_instance(horizon: usize, rng: &mut RngStream) -> Result<Thm3Instance> {
    if horizon == 0 {
        return Err(Error::InvalidInstance("empty horizon".into()));
    }
    let functions = horizon + 1;
    let star = horizon;
    let entries = functions * horizon * 2;
    let mut bits = vec![0u64; entries.div_ceil(64)];
    let mut set = |f: usize, x: usize, a: usize, v: bool| {
        let i = (f * horizon + x) * 2 + a;
        if v {
            bits[i / 64] |= 1 << (i % 64);
        }
    };
    let star_first: Vec<bool> = (0..horizon).map(|_| rng.bernoulli(0.5)).collect();
    for (x, first) in star_first.iter().enumerate() {
        set(star, x, 0, *first);
        set(star, x, 1, !*first);
    }
    for f in 0..horizon {
        for (x, first) in star_first.iter().enumerate() {
            if x == f {
                set(f, x, 0, *first);
                set(f, x, 1, !*first);
            } else {
                set(f, x, 0, rng.bernoulli(0.5));
                set(f, x, 1, rng.bernoulli(0.5));
            }
        }
    }
    let class = FunctionClass::binary(functions, horizon, 2, bits).with_star(Some(star))?;
    Ok(Thm3Instance {
        class,
        script: (0..horizon).collect(),
        contexts: (0..horizon).collect(),
    })
}

/// A planted-policy script: contexts uniform, the target policy's action
/// draws Bernoulli(`good`) losses and every other action Bernoulli(`bad`).
pub fn make_planted_script(
    policies: PolicyClass,
    horizon: usize,
    good: f64,
    bad: f64,
    rng: &mut RngStream,
) -> Result<PolicyScript> {
    check_loss(good, "planted good loss")?;
    check_loss(bad, "planted bad loss")?;
    let target = rng.below(policies.len());
    let k = policies.num_actions();
    let mut contexts = Vec::with_capacity(horizon);
    let mut losses = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let x = rng.below(policies.num_contexts());
        let best = policies.action(target, x);
        let row = (0..k)
            .map(|a| {
                let p = if a == best { good } else { bad };
                if rng.bernoulli(p) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        contexts.push(x);
        losses.push(row);
    }
    PolicyScript::new(policies, contexts, losses)
}

/// Blocking lower-bound instance: `N` identity policies over `N` actions,
/// per-block Bernoulli(1/2) losses held constant across each block of
/// `d + 1` rounds, and the matching blocking delay schedule.
pub fn make_blocking_instance(
    horizon: usize,
    d: usize,
    experts: usize,
    rng: &mut RngStream,
) -> Result<(PolicyScript, DelaySchedule)> {
    let schedule = DelaySchedule::blocking(horizon, d)?;
    let block = d + 1;
    let mut losses = Vec::with_capacity(horizon);
    let mut current = Vec::new();
    for t in 0..horizon {
        if t % block == 0 {
            current = (0..experts)
                .map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 })
                .collect();
        }
        losses.push(current.clone());
    }
    let script = PolicyScript::new(PolicyClass::identity(experts), vec![0; horizon], losses)?;
    Ok((script, schedule))
}

/// Realizable instance on disk: a class with `star` set, an optional
/// context sequence and an optional oracle script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub class: FunctionClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contexts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Vec<usize>>,
}

impl InstanceFile {
    /// Re-checks what deserialization cannot: grid sizes, the star index
    /// and index ranges.
    pub fn validated(self) -> Result<Self> {
        let c = &self.class;
        let expected = c.functions * c.contexts * c.actions;
        let ok = c.functions > 0
            && c.contexts > 0
            && c.actions > 0
            && match &c.values {
                ClassValues::Dense(v) => {
                    v.len() == expected && v.iter().all(|x| (0.0..=1.0).contains(x))
                }
                ClassValues::Binary(b) => b.len() == expected.div_ceil(64),
            };
        if !ok {
            return Err(Error::InvalidInstance("malformed function class".into()));
        }
        if c.star.is_none_or(|s| s >= c.functions) {
            return Err(Error::InvalidInstance(
                "instance needs a valid star index".into(),
            ));
        }
        if let Some(x) = self.contexts.iter().flatten().find(|x| **x >= c.contexts) {
            return Err(Error::InvalidInstance(format!("context {x} out of range")));
        }
        if let Some(f) = self.script.iter().flatten().find(|f| **f >= c.functions) {
            return Err(Error::InvalidInstance(format!(
                "script function {f} out of range"
            )));
        }
        Ok(self)
    }
}

impl From<Thm3Instance> for InstanceFile {
    fn from(i: Thm3Instance) -> Self {
        Self {
            class: i.class,
            contexts: Some(i.contexts),
            script: Some(i.script),
        }
    }
}

/// Per-context argmin of a loss table; ties to the lowest action.
pub fn argmin_actions(table: &LossTable) -> Vec<usize> {
    (0..table.contexts())
        .map(|x| argmin(table.row(x)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_class() -> FunctionClass {
        FunctionClass::new(1, 3, 2, vec![0.5; 6], Some(0)).unwrap()
    }

    #[test]
    fn zero_star_gives_zero_losses() {
        let fc = FunctionClass::new(1, 2, 3, vec![0.0; 6], Some(0)).unwrap();
        let mut env = realizable_env(fc, ContextLaw::Uniform).unwrap();
        let mut rng = RngStream::new(1);
        for t in 0..500 {
            let s = env.step(t, &mut rng).unwrap();
            assert!(s.losses.iter().all(|l| *l == 0.0));
        }
    }

    #[test]
    fn half_star_empirical_mean() {
        // std error 0.005 at T = 1e4; 0.02 is 4 sigma
        let mut env = realizable_env(half_class(), ContextLaw::Uniform).unwrap();
        let mut rng = RngStream::new(3);
        let t_max = 10_000;
        let total: f64 = (0..t_max)
            .map(|t| env.step(t, &mut rng).unwrap().losses[0])
            .sum();
        let mean = total / t_max as f64;
        assert!((mean - 0.5).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn realizable_needs_star() {
        let fc = FunctionClass::new(1, 1, 2, vec![0.1, 0.2], None).unwrap();
        assert!(realizable_env(fc, ContextLaw::Uniform).is_err());
    }

    #[test]
    fn sequence_law_replays_contexts() {
        let mut env = realizable_env(half_class(), ContextLaw::Sequence(vec![2, 0, 1])).unwrap();
        let mut rng = RngStream::new(0);
        let xs: Vec<usize> = (0..3)
            .map(|t| env.step(t, &mut rng).unwrap().context)
            .collect();
        assert_eq!(xs, vec![2, 0, 1]);
        assert!(env.step(3, &mut rng).is_err());
    }

    #[test]
    fn hard_class_epsilon_values() {
        assert!((hard_class_epsilon(4, 1000) - 0.006_324_555).abs() < 1e-8);
        assert!((hard_class_epsilon(3, 900) - 0.005_773_503).abs() < 1e-8);
    }

    #[test]
    fn hard_class_structure() {
        let mut rng = RngStream::new(0);
        let one = make_hard_class(1, 100, &mut rng).unwrap();
        assert_eq!(one.len(), 2);
        assert_ne!(argmin(&one.row(0, 0)), argmin(&one.row(1, 0)));

        let fc = make_hard_class(3, 900, &mut rng).unwrap();
        assert_eq!(fc.len(), 8);
        let eps = hard_class_epsilon(3, 900);
        let mut patterns = std::collections::HashSet::new();
        for f in 0..fc.len() {
            let mut pattern = Vec::new();
            for x in 0..3 {
                let row = fc.row(f, x);
                for v in &row {
                    assert!(*v == 0.5 || (*v - (0.5 - eps)).abs() < 1e-15);
                }
                assert_eq!(row.iter().filter(|v| **v < 0.5).count(), 1);
                pattern.push(argmin(&row));
            }
            patterns.insert(pattern);
        }
        assert_eq!(patterns.len(), 8);
        assert!(make_hard_class(5, 4, &mut rng).is_err());
    }

    #[test]
    fn thm3_instance_properties() {
        let inst = make_thm3_instance(50, &mut RngStream::new(9)).unwrap();
        let fc = &inst.class;
        let star = fc.star_index().unwrap();
        assert_eq!(fc.len(), 51);
        for t in 0..50 {
            let x = inst.contexts[t];
            assert_eq!(x, t);
            let s = fc.row(star, x);
            assert_eq!(s[0] + s[1], 1.0);
            assert_eq!(fc.row(inst.script[t], x), s);
        }
        // off-diagonal entries are fair coins
        let ones: f64 = (0..50)
            .flat_map(|f| (0..50).filter(move |x| *x != f).map(move |x| (f, x)))
            .map(|(f, x)| fc.value(f, x, 0))
            .sum();
        let mean = ones / (50.0 * 49.0);
        assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
        assert_eq!(inst.schedule().delays(), &[1; 50]);
    }

    #[test]
    fn scripted_env_replays_and_validates() {
        let pc = PolicyClass::new(2, vec![vec![0], vec![1]]).unwrap();
        let losses = vec![vec![0.0, 1.0]; 5];
        let mut env = adversarial_policy_env(pc.clone(), losses, vec![0; 5]).unwrap();
        let s = env.step(2, &mut RngStream::new(0)).unwrap();
        assert_eq!(s.losses, vec![0.0, 1.0]);
        assert_eq!(s.expected, s.losses);
        assert!(adversarial_policy_env(pc.clone(), vec![vec![0.0, 1.2]], vec![0]).is_err());
        assert!(adversarial_policy_env(pc, vec![vec![0.0, 1.0]], vec![3]).is_err());
    }

    #[test]
    fn blocking_instance_rows_constant_per_block() {
        let (script, sched) = make_blocking_instance(12, 3, 5, &mut RngStream::new(4)).unwrap();
        assert_eq!(sched.delays()[..4], [3, 2, 1, 0]);
        for b in 0..3 {
            let first = &script.losses[b * 4];
            for r in 1..4 {
                assert_eq!(&script.losses[b * 4 + r], first);
            }
            // aggregate block loss of each policy is (d+1) * ℓ_b(π)
            for (i, l) in first.iter().enumerate() {
                let agg: f64 = (0..4).map(|r| script.losses[b * 4 + r][i]).sum();
                assert_eq!(agg, 4.0 * l);
            }
        }
    }

    #[test]
    fn policy_class_enumeration() {
        let pc = PolicyClass::all(3, 2).unwrap();
        assert_eq!(pc.len(), 8);
        assert_eq!(pc.action(5, 0), 1);
        assert_eq!(pc.action(5, 1), 0);
        assert_eq!(pc.action(5, 2), 1);
        assert!(PolicyClass::new(2, vec![vec![0, 2]]).is_err());
    }

    #[test]
    fn script_json_roundtrip() {
        let mut rng = RngStream::new(2);
        let script =
            make_planted_script(PolicyClass::all(2, 2).unwrap(), 20, 0.2, 0.8, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, serde_json::to_string(&script).unwrap()).unwrap();
        assert_eq!(PolicyScript::load_json(&path).unwrap(), script);
    }
}
