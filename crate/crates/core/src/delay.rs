//! Delay schedules.
//!
//! Rounds are 0-indexed. The observation from round `s` arrives at the end
//! of round `s + d_s`; if that is past the last round it is never delivered
//! ("skipped").

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DelaySchedule {
    delays: Vec<usize>,
}

impl DelaySchedule {
    /// Accepts any delays with `d_t <= T`.
    pub fn new(delays: Vec<usize>) -> Result<Self> {
        let horizon = delays.len();
        if let Some((t, d)) = delays.iter().enumerate().find(|(_, d)| **d > horizon) {
            return Err(Error::InvalidSchedule(format!(
                "delay {d} at round {t} exceeds horizon {horizon}"
            )));
        }
        Ok(Self { delays })
    }

    /// Like [`DelaySchedule::new`] but also requires FIFO arrivals.
    pub fn new_fifo(delays: Vec<usize>) -> Result<Self> {
        let sched = Self::new(delays)?;
        if let Some(t) = sched.first_fifo_violation() {
            return Err(Error::InvalidSchedule(format!(
                "arrival of round {t} precedes an earlier round's arrival"
            )));
        }
        Ok(sched)
    }

    /// Constant delay `d` on every round.
    pub fn fixed(horizon: usize, d: usize) -> Result<Self> {
        Self::new(vec![d; horizon])
    }

    /// Blocks of `d + 1` rounds whose delays run `d, d-1, ..., 0`, so every
    /// block's feedback arrives together at the block's last round.
    pub fn blocking(horizon: usize, d: usize) -> Result<Self> {
        let block = d + 1;
        if !horizon.is_multiple_of(block) {
            return Err(Error::InvalidSchedule(format!(
                "horizon {horizon} is not a multiple of block length {block}"
            )));
        }
        let delays = (0..horizon).map(|t| d - t % block).collect();
        Self::new(delays)
    }

    /// Random FIFO schedule with every arrival inside the horizon. Arrival
    /// times are `max(previous arrival, t + u_t)` with `u_t` uniform on
    /// `0..=max_delay`, clamped to the last round.
    pub fn fifo_random(horizon: usize, max_delay: usize, rng: &mut RngStream) -> Result<Self> {
        let mut delays = Vec::with_capacity(horizon);
        let mut last_arrival = 0usize;
        for t in 0..horizon {
            let proposed = t + rng.below(max_delay + 1);
            let arrival = proposed.max(last_arrival).min(horizon - 1);
            last_arrival = arrival;
            delays.push(arrival - t);
        }
        Self::new(delays)
    }

    /// Independent uniform delays on `0..=max_delay`; generally not FIFO.
    pub fn uniform_random(horizon: usize, max_delay: usize, rng: &mut RngStream) -> Result<Self> {
        let max_delay = max_delay.min(horizon);
        Self::new((0..horizon).map(|_| rng.below(max_delay + 1)).collect())
    }

    pub fn horizon(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn delay(&self, t: usize) -> usize {
        self.delays[t]
    }

    pub fn arrival(&self, t: usize) -> usize {
        t + self.delays[t]
    }

    pub fn is_delivered(&self, t: usize) -> bool {
        self.arrival(t) < self.horizon()
    }

    /// `D`, the sum of all delays.
    pub fn total_delay(&self) -> usize {
        self.delays.iter().sum()
    }

    /// Sum of delays over rounds whose feedback arrives within the horizon.
    pub fn delivered_delay(&self) -> usize {
        (0..self.horizon())
            .filter(|t| self.is_delivered(*t))
            .map(|t| self.delays[t])
            .sum()
    }

    pub fn skipped(&self) -> usize {
        (0..self.horizon())
            .filter(|t| !self.is_delivered(*t))
            .count()
    }

    pub fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    /// O(T) check using the running maximum of arrival times.
    pub fn is_fifo(&self) -> bool {
        self.first_fifo_violation().is_none()
    }

    fn first_fifo_violation(&self) -> Option<usize> {
        let mut latest = 0usize;
        for t in 0..self.horizon() {
            let a = self.arrival(t);
            if a < latest {
                return Some(t);
            }
            latest = a;
        }
        None
    }

    /// Number of observations arriving at the end of each round (`α`).
    pub fn arrival_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.horizon()];
        for t in 0..self.horizon() {
            if self.is_delivered(t) {
                counts[self.arrival(t)] += 1;
            }
        }
        counts
    }

    /// `σ_t`: rounds `s <= t` whose feedback is still outstanding at the end
    /// of round `t`, counting only observations that do eventually arrive.
    pub fn pending_counts(&self) -> Vec<usize> {
        let n = self.horizon();
        // difference array: +1 at s, -1 at arrival
        let mut diff = vec![0isize; n + 1];
        for s in 0..n {
            if self.is_delivered(s) {
                diff[s] += 1;
                diff[self.arrival(s)] -= 1;
            }
        }
        let mut pending = Vec::with_capacity(n);
        let mut running = 0isize;
        for d in diff.iter().take(n) {
            running += d;
            pending.push(running as usize);
        }
        pending
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl TryFrom<Vec<usize>> for DelaySchedule {
    type Error = Error;

    fn try_from(delays: Vec<usize>) -> Result<Self> {
        Self::new(delays)
    }
}

impl From<DelaySchedule> for Vec<usize> {
    fn from(s: DelaySchedule) -> Self {
        s.delays
    }
}

/// `σ_t` for every round of `sched`.
pub fn pending_counts(sched: &DelaySchedule) -> Vec<usize> {
    sched.pending_counts()
}

pub fn make_blocking_schedule(horizon: usize, d: usize) -> Result<DelaySchedule> {
    DelaySchedule::blocking(horizon, d)
}

/// Textual schedule description used in configs and on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScheduleSpec {
    /// `fixed:<d>`
    Fixed(usize),
    /// `blocking:<d>`
    Blocking(usize),
    /// `fifo-random:<seed>` or `fifo-random:<seed>:<max delay>`; the max
    /// delay defaults to `ceil(sqrt(T))`.
    FifoRandom { seed: u64, max_delay: Option<usize> },
    /// `uniform-random:<seed>:<max delay>`, not FIFO in general.
    UniformRandom { seed: u64, max_delay: usize },
    /// `explicit:<path>` pointing at a JSON array of delays.
    Explicit(String),
}

impl ScheduleSpec {
    pub fn build(&self, horizon: usize) -> Result<DelaySchedule> {
        let sched = match self {
            ScheduleSpec::Fixed(d) => DelaySchedule::fixed(horizon, *d)?,
            ScheduleSpec::Blocking(d) => DelaySchedule::blocking(horizon, *d)?,
            ScheduleSpec::FifoRandom { seed, max_delay } => {
                let max = max_delay.unwrap_or_else(|| (horizon as f64).sqrt().ceil() as usize);
                DelaySchedule::fifo_random(horizon, max, &mut RngStream::new(*seed))?
            }
            ScheduleSpec::UniformRandom { seed, max_delay } => {
                DelaySchedule::uniform_random(horizon, *max_delay, &mut RngStream::new(*seed))?
            }
            ScheduleSpec::Explicit(path) => DelaySchedule::load_json(path)?,
        };
        if sched.horizon() != horizon {
            return Err(Error::Config(format!(
                "schedule {self} has {} rounds, horizon is {horizon}",
                sched.horizon()
            )));
        }
        Ok(sched)
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Fixed(d) => write!(f, "fixed:{d}"),
            ScheduleSpec::Blocking(d) => write!(f, "blocking:{d}"),
            ScheduleSpec::FifoRandom {
                seed,
                max_delay: None,
            } => write!(f, "fifo-random:{seed}"),
            ScheduleSpec::FifoRandom {
                seed,
                max_delay: Some(m),
            } => write!(f, "fifo-random:{seed}:{m}"),
            ScheduleSpec::UniformRandom { seed, max_delay } => {
                write!(f, "uniform-random:{seed}:{max_delay}")
            }
            ScheduleSpec::Explicit(p) => write!(f, "explicit:{p}"),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized delay schedule '{s}'"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let num = |v: &str| v.parse::<u64>().map_err(|_| bad());
        match kind {
            "fixed" => Ok(ScheduleSpec::Fixed(num(rest)? as usize)),
            "blocking" => Ok(ScheduleSpec::Blocking(num(rest)? as usize)),
            "fifo-random" => match rest.split_once(':') {
                Some((seed, max)) => Ok(ScheduleSpec::FifoRandom {
                    seed: num(seed)?,
                    max_delay: Some(num(max)? as usize),
                }),
                None => Ok(ScheduleSpec::FifoRandom {
                    seed: num(rest)?,
                    max_delay: None,
                }),
            },
            "uniform-random" => {
                let (seed, max) = rest.split_once(':').ok_or_else(bad)?;
                Ok(ScheduleSpec::UniformRandom {
                    seed: num(seed)?,
                    max_delay: num(max)? as usize,
                })
            }
            "explicit" if !rest.is_empty() => Ok(ScheduleSpec::Explicit(rest.to_string())),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for ScheduleSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScheduleSpec> for String {
    fn from(s: ScheduleSpec) -> Self {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct count of `{s <= t : s + d_s > t}` over delivered rounds.
    fn pending_brute(delays: &[usize]) -> Vec<usize> {
        let n = delays.len();
        (0..n)
            .map(|t| {
                (0..=t)
                    .filter(|&s| s + delays[s] < n && s + delays[s] > t)
                    .count()
            })
            .collect()
    }

    #[test]
    fn pending_examples() {
        let s = DelaySchedule::new(vec![0, 0, 0]).unwrap();
        assert_eq!(s.pending_counts(), vec![0, 0, 0]);

        let s = DelaySchedule::new(vec![1, 1, 0]).unwrap();
        assert_eq!(s.pending_counts(), vec![1, 1, 0]);
        assert_eq!(s.total_delay(), 2);
        assert_eq!(s.pending_counts().iter().sum::<usize>(), 2);
    }

    #[test]
    fn blocking_examples() {
        let s = make_blocking_schedule(6, 2).unwrap();
        assert_eq!(s.delays(), &[2, 1, 0, 2, 1, 0]);
        assert_eq!(s.total_delay(), 6);
        assert!(s.is_fifo());
        assert_eq!(s.skipped(), 0);

        let s = make_blocking_schedule(4, 0).unwrap();
        assert_eq!(s.delays(), &[0, 0, 0, 0]);

        let s = make_blocking_schedule(8, 3).unwrap();
        assert_eq!(s.delays(), &[3, 2, 1, 0, 3, 2, 1, 0]);
        assert_eq!(s.total_delay(), 12);

        assert!(make_blocking_schedule(7, 2).is_err());
    }

    #[test]
    fn blocking_arrivals_land_on_block_end() {
        let s = make_blocking_schedule(12, 3).unwrap();
        let counts = s.arrival_counts();
        assert_eq!(counts, vec![0, 0, 0, 4, 0, 0, 0, 4, 0, 0, 0, 4]);
    }

    #[test]
    fn rejects_oversized_delay() {
        assert!(DelaySchedule::new(vec![0, 3]).is_err());
        assert!(DelaySchedule::new(vec![0, 2]).is_ok());
    }

    #[test]
    fn fifo_validation() {
        assert!(DelaySchedule::new_fifo(vec![2, 0, 0]).is_err());
        assert!(DelaySchedule::new_fifo(vec![2, 1, 0]).is_ok());
        assert!(!DelaySchedule::new(vec![3, 0, 0, 0]).unwrap().is_fifo());
        assert!(DelaySchedule::fixed(10, 4).unwrap().is_fifo());
    }

    #[test]
    fn fixed_delay_skips_tail() {
        let s = DelaySchedule::fixed(10, 3).unwrap();
        assert_eq!(s.skipped(), 3);
        assert_eq!(s.delivered_delay(), 21);
        assert_eq!(s.pending_counts().iter().sum::<usize>(), 21);
    }

    #[test]
    fn spec_strings_roundtrip() {
        for text in [
            "fixed:3",
            "blocking:20",
            "fifo-random:9",
            "fifo-random:9:4",
            "uniform-random:1:5",
            "explicit:/tmp/d.json",
        ] {
            let spec: ScheduleSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert!("fixed".parse::<ScheduleSpec>().is_err());
        assert!("wobbly:3".parse::<ScheduleSpec>().is_err());
        assert!("fixed:-1".parse::<ScheduleSpec>().is_err());
    }

    #[test]
    fn explicit_schedule_from_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        std::fs::write(&path, "[1, 0, 0]").unwrap();
        let spec = ScheduleSpec::Explicit(path.display().to_string());
        assert_eq!(spec.build(3).unwrap().delays(), &[1, 0, 0]);
        assert!(spec.build(4).is_err());
    }

    proptest! {
        #[test]
        fn pending_matches_definition(delays in prop::collection::vec(0usize..12, 1..40)) {
            let n = delays.len();
            let delays: Vec<usize> = delays.into_iter().map(|d| d.min(n)).collect();
            let s = DelaySchedule::new(delays.clone()).unwrap();
            let pending = s.pending_counts();
            prop_assert_eq!(&pending, &pending_brute(&delays));
            prop_assert_eq!(pending.iter().sum::<usize>(), s.delivered_delay());
            prop_assert!(pending.iter().all(|p| *p <= s.max_delay()));
        }

        #[test]
        fn fifo_check_matches_pairwise(delays in prop::collection::vec(0usize..6, 1..30)) {
            let n = delays.len();
            let delays: Vec<usize> = delays.into_iter().map(|d| d.min(n)).collect();
            let s = DelaySchedule::new(delays.clone()).unwrap();
            let pairwise = (0..n).all(|t| (0..=t).all(|u| u + delays[u] <= t + delays[t]));
            prop_assert_eq!(s.is_fifo(), pairwise);
        }

        #[test]
        fn fifo_random_max_delay_vs_total(seed in any::<u64>(), n in 1usize..300, max in 0usize..40) {
            let s = DelaySchedule::fifo_random(n, max, &mut RngStream::new(seed)).unwrap();
            prop_assert!(s.is_fifo());
            prop_assert_eq!(s.skipped(), 0);
            let dmax = s.max_delay();
            let total = s.total_delay();
            prop_assert!(total >= dmax * (dmax + 1) / 2);
            prop_assert!(dmax as f64 <= (2.0 * total as f64).sqrt().ceil() + 1.0);
        }
    }
}
