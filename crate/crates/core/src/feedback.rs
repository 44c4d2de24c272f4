//! Delayed observations and the pending-feedback queue.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::check_loss;
use crate::{Error, Result};

/// A loss observation from round `origin_round`, delivered at the end of
/// round `arrival_round`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub origin_round: usize,
    pub context: usize,
    pub action: usize,
    pub loss: f64,
    pub arrival_round: usize,
}

impl FeedbackEvent {
    pub fn new(
        origin_round: usize,
        delay: usize,
        context: usize,
        action: usize,
        loss: f64,
    ) -> Result<Self> {
        check_loss(loss, "feedback event")?;
        Ok(Self {
            origin_round,
            context,
            action,
            loss,
            arrival_round: origin_round + delay,
        })
    }

    pub fn delay(&self) -> usize {
        self.arrival_round - self.origin_round
    }
}

/// Buffers events until their arrival round. Events scheduled past the
/// horizon are counted and dropped.
#[derive(Debug, Clone)]
pub struct PendingQueue {
    horizon: usize,
    buckets: BTreeMap<usize, Vec<FeedbackEvent>>,
    enqueued: usize,
    delivered: usize,
    skipped: usize,
    delivered_delay: usize,
}

impl PendingQueue {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            buckets: BTreeMap::new(),
            enqueued: 0,
            delivered: 0,
            skipped: 0,
            delivered_delay: 0,
        }
    }

    pub fn push(&mut self, event: FeedbackEvent) {
        self.enqueued += 1;
        if event.arrival_round >= self.horizon {
            self.skipped += 1;
            return;
        }
        self.buckets
            .entry(event.arrival_round)
            .or_default()
            .push(event);
    }

    /// Removes and returns every event arriving at `round`, sorted by
    /// origin round. Rounds must be polled in increasing order; an event
    /// left behind in an earlier bucket is a contract violation.
    pub fn deliver(&mut self, round: usize) -> Result<Vec<FeedbackEvent>> {
        if let Some((&first, _)) = self.buckets.first_key_value() {
            if first < round {
                return Err(Error::Contract(format!(
                    "events for round {first} were never delivered (now at round {round})"
                )));
            }
        }
        let mut batch = self.buckets.remove(&round).unwrap_or_default();
        batch.sort_by_key(|e| e.origin_round);
        self.delivered += batch.len();
        self.delivered_delay += batch.iter().map(FeedbackEvent::delay).sum::<usize>();
        Ok(batch)
    }

    /// Events currently waiting.
    pub fn pending(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn enqueued(&self) -> usize {
        self.enqueued
    }

    pub fn delivered(&self) -> usize {
        self.delivered
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Sum of delays over delivered events.
    pub fn delivered_delay(&self) -> usize {
        self.delivered_delay
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelaySchedule;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn event(s: usize, d: usize) -> FeedbackEvent {
        FeedbackEvent::new(s, d, 0, 0, 0.5).unwrap()
    }

    #[test]
    fn rejects_bad_loss() {
        assert!(FeedbackEvent::new(0, 0, 0, 0, 1.5).is_err());
        assert!(FeedbackEvent::new(0, 0, 0, 0, -0.1).is_err());
    }

    #[test]
    fn batches_sorted_by_origin() {
        let mut q = PendingQueue::new(10);
        q.push(event(3, 2));
        q.push(event(1, 4));
        q.push(event(5, 0));
        assert!(q.deliver(4).unwrap().is_empty());
        let batch = q.deliver(5).unwrap();
        let origins: Vec<usize> = batch.iter().map(|e| e.origin_round).collect();
        assert_eq!(origins, vec![1, 3, 5]);
    }

    #[test]
    fn late_events_are_skipped() {
        let mut q = PendingQueue::new(3);
        q.push(event(2, 1));
        q.push(event(0, 1));
        assert_eq!(q.skipped(), 1);
        assert_eq!(q.pending(), 1);
    }

    #[test]
    fn missed_round_is_an_error() {
        let mut q = PendingQueue::new(5);
        q.push(event(0, 1));
        assert!(q.deliver(2).is_err());
    }

    proptest! {
        #[test]
        fn every_event_delivered_once(seed in any::<u64>(), n in 1usize..200, max in 0usize..30) {
            let sched = DelaySchedule::uniform_random(n, max, &mut RngStream::new(seed)).unwrap();
            let mut q = PendingQueue::new(n);
            let mut seen = vec![0usize; n];
            let pending = sched.pending_counts();
            for (t, expected) in pending.iter().enumerate() {
                q.push(FeedbackEvent::new(t, sched.delay(t), 0, 0, 0.0).unwrap());
                for e in q.deliver(t).unwrap() {
                    prop_assert_eq!(e.arrival_round, t);
                    seen[e.origin_round] += 1;
                }
                prop_assert_eq!(q.pending(), *expected);
            }
            for (s, count) in seen.iter().enumerate() {
                prop_assert_eq!(*count, usize::from(sched.is_delivered(s)));
            }
            prop_assert_eq!(q.delivered() + q.skipped(), n);
            prop_assert_eq!(q.skipped(), sched.skipped());
            prop_assert_eq!(q.delivered_delay(), sched.delivered_delay());
        }
    }
}
