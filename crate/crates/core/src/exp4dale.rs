//! EXP4 with delay-adapted loss estimators.
//!
//! Multiplicative weights over a finite policy class. When the observation
//! from round `s` arrives at round `t`, its importance weight uses
//! `max(Q_s, Q̃_t)`: the probability of the played action under the play-time
//! distribution `p_s` and under the current distribution `p_t`. Taking the
//! larger of the two biases the estimate downward, never upward.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::envs::PolicyClass;
use crate::feedback::FeedbackEvent;
use crate::harness::Learner;
use crate::rng::RngStream;
use crate::simplex::SimplexDistribution;
use crate::{Error, Result};

/// `sqrt(ln N / (K T + D))`.
pub fn default_eta(policies: f64, actions: f64, horizon: f64, total_delay: f64) -> f64 {
    (policies.ln() / (actions * horizon + total_delay)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Play {
    context: usize,
    action: usize,
    q: f64,
}

/// Delay-adapted estimator for one arriving observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// `ĉ_{s,i}` for every policy.
    pub values: Vec<f64>,
    /// `Q_{s,a_s}` recorded at play time.
    pub q_play: f64,
    /// `Q̃^t_{s,a_s}` under the current distribution.
    pub q_now: f64,
}

impl Estimate {
    pub fn denominator(&self) -> f64 {
        self.q_play.max(self.q_now)
    }
}

#[derive(Debug, Clone)]
pub struct Exp4Dale {
    policies: Arc<PolicyClass>,
    eta: f64,
    log_weights: Vec<f64>,
    dist: SimplexDistribution,
    stored: BTreeMap<usize, Play>,
}

impl Exp4Dale {
    pub fn new(policies: Arc<PolicyClass>, eta: f64) -> Result<Self> {
        let n = policies.len();
        Self::from_distribution(policies, eta, SimplexDistribution::uniform(n))
    }

    /// Starts from an arbitrary distribution instead of uniform.
    pub fn from_distribution(
        policies: Arc<PolicyClass>,
        eta: f64,
        dist: SimplexDistribution,
    ) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Config(format!(
                "step size must be positive, got {eta}"
            )));
        }
        if dist.len() != policies.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} weights for {} policies",
                dist.len(),
                policies.len()
            )));
        }
        let log_weights = dist.weights().iter().map(|w| w.ln().max(-745.0)).collect();
        Ok(Self {
            policies,
            eta,
            log_weights,
            dist,
            stored: BTreeMap::new(),
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn distribution(&self) -> &SimplexDistribution {
        &self.dist
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Rounds whose feedback is still outstanding.
    pub fn outstanding(&self) -> usize {
        self.stored.len()
    }

    /// `Σ_i p_i 1[π_i(x) = a]` under the current distribution.
    pub fn action_mass(&self, context: usize, action: usize) -> f64 {
        self.dist
            .weights()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.policies.action(*i, context) == action)
            .map(|(_, p)| p)
            .sum()
    }

    /// Samples a policy, plays its action and remembers `Q_{t,a_t}`.
    pub fn choose(&mut self, round: usize, context: usize, rng: &mut RngStream) -> usize {
        let i = self.dist.sample(rng);
        let action = self.policies.action(i, context);
        let q = self.action_mass(context, action);
        self.stored.insert(round, Play { context, action, q });
        action
    }

    /// `Q_{s,a_s}` recorded when round `s` was played.
    pub fn stored_q(&self, origin_round: usize) -> Option<f64> {
        self.stored.get(&origin_round).map(|p| p.q)
    }

    fn play_for(&self, event: &FeedbackEvent) -> Result<Play> {
        let play = *self.stored.get(&event.origin_round).ok_or_else(|| {
            Error::Contract(format!(
                "feedback for round {} that was never played (or already consumed)",
                event.origin_round
            ))
        })?;
        if play.context != event.context || play.action != event.action {
            return Err(Error::Contract(format!(
                "feedback for round {} does not match the recorded play",
                event.origin_round
            )));
        }
        Ok(play)
    }

    /// Delay-adapted estimator for `event` against the current distribution.
    /// Fails if the estimate would exceed the plain importance-weighted one.
    pub fn estimate(&self, event: &FeedbackEvent) -> Result<Estimate> {
        let play = self.play_for(event)?;
        let q_now = self.action_mass(play.context, play.action);
        let denom = play.q.max(q_now);
        let values: Vec<f64> = (0..self.policies.len())
            .map(|i| {
                if self.policies.action(i, play.context) == play.action {
                    event.loss / denom
                } else {
                    0.0
                }
            })
            .collect();
        let plain = event.loss / play.q;
        if let Some(v) = values.iter().find(|v| **v > plain) {
            return Err(Error::Contract(format!(
                "delay-adapted estimate {v} exceeds importance-weighted {plain}"
            )));
        }
        Ok(Estimate {
            values,
            q_play: play.q,
            q_now,
        })
    }

    /// The same estimator indexed by action rather than policy.
    pub fn action_estimates(&self, event: &FeedbackEvent) -> Result<Vec<f64>> {
        let play = self.play_for(event)?;
        let denom = play.q.max(self.action_mass(play.context, play.action));
        Ok((0..self.policies.num_actions())
            .map(|a| {
                if a == play.action {
                    event.loss / denom
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// `log w_i -= η ĉ_i`, then renormalize.
    pub fn apply_estimates(&mut self, total: &[f64]) {
        for (w, c) in self.log_weights.iter_mut().zip(total) {
            *w -= self.eta * c;
        }
        recenter(&mut self.log_weights);
        self.dist = SimplexDistribution::from_log_weights(&self.log_weights);
    }

    /// Builds every estimator of the batch against the pre-update
    /// distribution, then applies their sum in one step.
    pub fn update(&mut self, batch: &[FeedbackEvent]) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut total = vec![0.0; self.policies.len()];
        for event in batch {
            let est = self.estimate(event)?;
            for (t, v) in total.iter_mut().zip(&est.values) {
                *t += v;
            }
        }
        for event in batch {
            self.stored.remove(&event.origin_round);
        }
        self.apply_estimates(&total);
        Ok(())
    }
}

/// Shift so the largest log weight is 0 and clamp the floor.
fn recenter(log_weights: &mut [f64]) {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    for w in log_weights.iter_mut() {
        *w = (*w - max).max(-745.0);
    }
}

impl Learner for Exp4Dale {
    fn name(&self) -> &str {
        "exp4dale"
    }

    fn choose(&mut self, round: usize, context: usize, rng: &mut RngStream) -> Result<usize> {
        Ok(Exp4Dale::choose(self, round, context, rng))
    }

    fn receive_feedback(&mut self, _round: usize, batch: &[FeedbackEvent]) -> Result<()> {
        self.update(batch)
    }

    fn policy_distribution(&self) -> Option<&SimplexDistribution> {
        Some(&self.dist)
    }
}

/// Plain EXP4 with standard importance weighting `L / Q_{s,a_s}`; delayed
/// observations are applied on arrival with their play-time probability.
#[derive(Debug, Clone)]
pub struct Exp4 {
    policies: Arc<PolicyClass>,
    eta: f64,
    log_weights: Vec<f64>,
    dist: SimplexDistribution,
    plays: BTreeMap<usize, (usize, usize, f64)>,
}

impl Exp4 {
    pub fn new(policies: Arc<PolicyClass>, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Config(format!(
                "step size must be positive, got {eta}"
            )));
        }
        let n = policies.len();
        Ok(Self {
            policies,
            eta,
            log_weights: vec![(1.0 / n as f64).ln(); n],
            dist: SimplexDistribution::uniform(n),
            plays: BTreeMap::new(),
        })
    }

    pub fn distribution(&self) -> &SimplexDistribution {
        &self.dist
    }
}

impl Learner for Exp4 {
    fn name(&self) -> &str {
        "exp4"
    }

    fn choose(&mut self, round: usize, context: usize, rng: &mut RngStream) -> Result<usize> {
        let i = self.dist.sample(rng);
        let action = self.policies.action(i, context);
        let mut q = 0.0;
        for (j, p) in self.dist.weights().iter().enumerate() {
            if self.policies.action(j, context) == action {
                q += p;
            }
        }
        self.plays.insert(round, (context, action, q));
        Ok(action)
    }

    fn receive_feedback(&mut self, _round: usize, batch: &[FeedbackEvent]) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut total = vec![0.0; self.policies.len()];
        for e in batch {
            let (context, action, q) = self.plays.remove(&e.origin_round).ok_or_else(|| {
                Error::Contract(format!("no play recorded for round {}", e.origin_round))
            })?;
            for (i, t) in total.iter_mut().enumerate() {
                if self.policies.action(i, context) == action {
                    *t += e.loss / q;
                }
            }
        }
        for (w, c) in self.log_weights.iter_mut().zip(&total) {
            *w -= self.eta * c;
        }
        recenter(&mut self.log_weights);
        self.dist = SimplexDistribution::from_log_weights(&self.log_weights);
        Ok(())
    }

    fn policy_distribution(&self) -> Option<&SimplexDistribution> {
        Some(&self.dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_policies() -> Arc<PolicyClass> {
        Arc::new(PolicyClass::new(2, vec![vec![0], vec![1]]).unwrap())
    }

    fn event(s: usize, t: usize, action: usize, loss: f64) -> FeedbackEvent {
        FeedbackEvent::new(s, t - s, 0, action, loss).unwrap()
    }

    #[test]
    fn default_eta_values() {
        assert!((default_eta(std::f64::consts::E, 1.0, 1.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((default_eta(8.0, 2.0, 1e4, 0.0) - 0.010_197).abs() < 1e-6);
        assert!((default_eta(8.0, 2.0, 1e4, 2e4) - 0.007_210).abs() < 1e-6);
    }

    #[test]
    fn point_mass_plays_its_policy() {
        let pc = Arc::new(PolicyClass::new(3, vec![vec![2, 0], vec![2, 1], vec![0, 1]]).unwrap());
        let dist = SimplexDistribution::point_mass(3, 0);
        let mut learner = Exp4Dale::from_distribution(pc, 0.1, dist).unwrap();
        let mut rng = RngStream::new(0);
        for t in 0..20 {
            assert_eq!(learner.choose(t, 0, &mut rng), 2);
            assert_eq!(learner.stored_q(t), Some(1.0));
        }
    }

    #[test]
    fn split_mass_q_is_half() {
        let mut learner = Exp4Dale::new(two_policies(), 0.1).unwrap();
        let mut rng = RngStream::new(5);
        for t in 0..10 {
            learner.choose(t, 0, &mut rng);
            assert_eq!(learner.stored_q(t), Some(0.5));
        }
    }

    #[test]
    fn identical_policies_q_is_one() {
        let pc = Arc::new(PolicyClass::new(2, vec![vec![1, 0]; 4]).unwrap());
        let mut learner = Exp4Dale::new(pc, 0.1).unwrap();
        let mut rng = RngStream::new(5);
        for t in 0..10 {
            learner.choose(t, t % 2, &mut rng);
            assert!((learner.stored_q(t).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn max_denominator_example() {
        // Q at play = 0.5, current mass on matching policies = 0.8
        let pc = Arc::new(PolicyClass::new(2, vec![vec![0], vec![1], vec![0]]).unwrap());
        let play_dist = SimplexDistribution::new(vec![0.25, 0.5, 0.25]).unwrap();
        let mut learner = Exp4Dale::from_distribution(pc.clone(), 0.1, play_dist).unwrap();
        // force action 0 by trying seeds
        let mut t = 0;
        loop {
            let a = learner.choose(t, 0, &mut RngStream::new(t as u64));
            if a == 0 {
                break;
            }
            learner.stored.remove(&t);
            t += 1;
        }
        assert_eq!(learner.stored_q(t), Some(0.5));
        let stored = learner.stored.clone();
        let now = SimplexDistribution::new(vec![0.4, 0.2, 0.4]).unwrap();
        let mut later = Exp4Dale::from_distribution(pc, 0.1, now).unwrap();
        later.stored = stored;
        let est = later.estimate(&event(t, t + 3, 0, 1.0)).unwrap();
        assert!((est.q_now - 0.8).abs() < 1e-12);
        assert!((est.values[0] - 1.25).abs() < 1e-12);
        assert_eq!(est.values[1], 0.0);
        assert!((est.values[2] - 1.25).abs() < 1e-12);
        assert!(2.0 >= est.values[0]);
    }

    #[test]
    fn zero_delay_is_plain_importance_weighting() {
        let mut learner = Exp4Dale::new(two_policies(), 0.1).unwrap();
        let a = learner.choose(0, 0, &mut RngStream::new(1));
        let est = learner.estimate(&event(0, 0, a, 0.7)).unwrap();
        assert_eq!(est.q_now, est.q_play);
        assert!((est.values[a] - 0.7 / 0.5).abs() < 1e-15);
        assert_eq!(est.values[1 - a], 0.0);
        let per_action = learner.action_estimates(&event(0, 0, a, 0.7)).unwrap();
        assert_eq!(per_action[a], est.values[a]);
    }

    #[test]
    fn unknown_round_fails_fast() {
        let learner = Exp4Dale::new(two_policies(), 0.1).unwrap();
        assert!(learner.estimate(&event(3, 5, 0, 1.0)).is_err());
    }

    #[test]
    fn empty_batch_keeps_distribution() {
        let mut learner = Exp4Dale::new(two_policies(), 0.1).unwrap();
        let before = learner.distribution().clone();
        learner.update(&[]).unwrap();
        assert_eq!(learner.distribution(), &before);
    }

    #[test]
    fn softmax_update_example() {
        let mut learner = Exp4Dale::new(two_policies(), 0.1).unwrap();
        learner.apply_estimates(&[1.0, 0.0]);
        let e = (-0.1f64).exp();
        let p = learner.distribution().weights();
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-12);
        assert!((p[0] - 0.47502).abs() < 1e-5);
        assert!((p[1] - 0.52498).abs() < 1e-5);
    }

    #[test]
    fn uniform_shift_is_invisible() {
        let pc = Arc::new(PolicyClass::all(2, 2).unwrap());
        let dist = SimplexDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut a = Exp4Dale::from_distribution(pc.clone(), 0.3, dist.clone()).unwrap();
        let mut b = Exp4Dale::from_distribution(pc, 0.3, dist).unwrap();
        a.apply_estimates(&[0.5, 1.0, 0.0, 2.0]);
        b.apply_estimates(&[1.5, 2.0, 1.0, 3.0]);
        for (x, y) in a
            .distribution()
            .weights()
            .iter()
            .zip(b.distribution().weights())
        {
            assert!((x - y).abs() < 1e-12);
        }
        let mut c = Exp4Dale::new(Arc::new(PolicyClass::all(2, 2).unwrap()), 0.3).unwrap();
        c.apply_estimates(&[0.7; 4]);
        for w in c.distribution().weights() {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_uses_pre_update_distribution() {
        let pc = Arc::new(PolicyClass::all(2, 2).unwrap());
        let mut learner = Exp4Dale::new(pc.clone(), 0.5).unwrap();
        let mut rng = RngStream::new(3);
        let a0 = learner.choose(0, 0, &mut rng);
        let a1 = learner.choose(1, 1, &mut rng);
        let batch = vec![
            FeedbackEvent::new(0, 2, 0, a0, 1.0).unwrap(),
            FeedbackEvent::new(1, 1, 1, a1, 0.5).unwrap(),
        ];
        let e0 = learner.estimate(&batch[0]).unwrap();
        let e1 = learner.estimate(&batch[1]).unwrap();
        let total: Vec<f64> = e0
            .values
            .iter()
            .zip(&e1.values)
            .map(|(x, y)| x + y)
            .collect();
        let mut manual = learner.clone();
        manual.apply_estimates(&total);
        learner.update(&batch).unwrap();
        assert_eq!(learner.distribution(), manual.distribution());
        assert_eq!(learner.outstanding(), 0);
    }

    #[test]
    fn conditional_under_bias() {
        // frozen 3-policy instance: p_s at play, p_t at arrival
        let pc = Arc::new(PolicyClass::new(3, vec![vec![0], vec![1], vec![0]]).unwrap());
        let losses = [0.9, 0.4, 0.0];
        let p_play = SimplexDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let p_now = SimplexDistribution::new(vec![0.6, 0.1, 0.3]).unwrap();
        let replays = 100_000;
        let mut sums = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let mut rng = RngStream::new(17);
        for r in 0..replays {
            let mut play = Exp4Dale::from_distribution(pc.clone(), 0.1, p_play.clone()).unwrap();
            let a = play.choose(r, 0, &mut rng);
            let mut now = Exp4Dale::from_distribution(pc.clone(), 0.1, p_now.clone()).unwrap();
            now.stored = play.stored;
            let ev = FeedbackEvent::new(r, 4, 0, a, losses[a]).unwrap();
            let est = now.estimate(&ev).unwrap();
            for i in 0..3 {
                sums[i] += est.values[i];
                sq[i] += est.values[i] * est.values[i];
            }
        }
        for i in 0..3 {
            let c = losses[pc.action(i, 0)];
            let mean = sums[i] / replays as f64;
            let var = sq[i] / replays as f64 - mean * mean;
            let se = (var / replays as f64).sqrt();
            assert!(mean <= c + 3.0 * se, "policy {i}: mean {mean} vs c {c}");
        }
        // policies on action 0 are strictly under-estimated: Q_play = 0.5 < Q_now = 0.9
        let expected0 = 0.9 * 0.5 / 0.9;
        assert!((sums[0] / replays as f64 - expected0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn estimates_never_exceed_importance_weighting(
            raw_play in prop::collection::vec(0.01f64..1.0, 4),
            raw_now in prop::collection::vec(0.01f64..1.0, 4),
            loss in 0.0f64..=1.0,
            context in 0usize..2,
            seed in any::<u64>(),
        ) {
            let pc = Arc::new(PolicyClass::all(2, 2).unwrap());
            let p_play = SimplexDistribution::normalized(raw_play).unwrap();
            let p_now = SimplexDistribution::normalized(raw_now).unwrap();
            let mut play = Exp4Dale::from_distribution(pc.clone(), 0.2, p_play).unwrap();
            let a = play.choose(0, context, &mut RngStream::new(seed));
            let q = play.stored_q(0).unwrap();
            let mut now = Exp4Dale::from_distribution(pc.clone(), 0.2, p_now).unwrap();
            now.stored = play.stored;
            let ev = FeedbackEvent::new(0, 3, context, a, loss).unwrap();
            let est = now.estimate(&ev).unwrap();
            for (i, v) in est.values.iter().enumerate() {
                prop_assert!(*v >= 0.0);
                let plain = if pc.action(i, context) == a { loss / q } else { 0.0 };
                prop_assert!(*v <= plain + 1e-15);
            }
        }
    }
}
