use crate::feedback::FeedbackEvent;
use crate::rng::RngStream;
use crate::simplex::SimplexDistribution;
use crate::Result;

/// Per-round protocol a learner follows inside the runner: `choose` sees the
/// context and returns an action, then `receive_feedback` gets every
/// observation arriving at the end of that same round (possibly none).
pub trait Learner: Send {
    fn name(&self) -> &str;

    fn choose(&mut self, round: usize, context: usize, rng: &mut RngStream) -> Result<usize>;

    fn receive_feedback(&mut self, round: usize, batch: &[FeedbackEvent]) -> Result<()>;

    /// Current distribution over the policy class, for learners that keep one.
    fn policy_distribution(&self) -> Option<&SimplexDistribution> {
        None
    }

    /// Action distribution used in the most recent `choose`.
    fn last_action_distribution(&self) -> Option<&SimplexDistribution> {
        None
    }
}

/// Debug learner replaying a fixed per-context action map (for example the
/// comparator's own choices).
#[derive(Debug, Clone)]
pub struct FixedMapLearner {
    actions: Vec<usize>,
}

impl FixedMapLearner {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }
}

impl Learner for FixedMapLearner {
    fn name(&self) -> &str {
        "fixed-map"
    }

    fn choose(&mut self, _round: usize, context: usize, _rng: &mut RngStream) -> Result<usize> {
        Ok(self.actions[context])
    }

    fn receive_feedback(&mut self, _round: usize, _batch: &[FeedbackEvent]) -> Result<()> {
        Ok(())
    }
}

/// Plays uniformly at random and ignores feedback.
#[derive(Debug, Clone)]
pub struct UniformLearner {
    dist: SimplexDistribution,
}

impl UniformLearner {
    pub fn new(actions: usize) -> Self {
        Self {
            dist: SimplexDistribution::uniform(actions),
        }
    }
}

impl Learner for UniformLearner {
    fn name(&self) -> &str {
        "uniform"
    }

    fn choose(&mut self, _round: usize, _context: usize, rng: &mut RngStream) -> Result<usize> {
        Ok(self.dist.sample(rng))
    }

    fn receive_feedback(&mut self, _round: usize, _batch: &[FeedbackEvent]) -> Result<()> {
        Ok(())
    }

    fn last_action_distribution(&self) -> Option<&SimplexDistribution> {
        Some(&self.dist)
    }
}
