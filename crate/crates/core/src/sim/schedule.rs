//! Schedules: which process takes the next step, and who crashes when.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::history::ProcessId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Order {
    /// Exactly these processes, in order; entries for processes that cannot
    /// move are skipped.
    Explicit(Vec<ProcessId>),
    /// Seeded weighted choice. A chosen process keeps the processor for a
    /// burst of 1 to `max_burst` steps, which produces long delays for others.
    Random { seed: u64, weights: Vec<u32>, max_burst: u32 },
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub order: Order,
    /// A process takes no step at or after its crash step.
    pub crashes: BTreeMap<ProcessId, u64>,
    /// Continue round-robin once an explicit order is exhausted.
    pub fair_tail: bool,
}

impl Schedule {
    pub fn explicit(order: Vec<ProcessId>) -> Self {
        Schedule {
            order: Order::Explicit(order),
            crashes: BTreeMap::new(),
            fair_tail: false,
        }
    }

    /// Explicit order given as `(process index, number of steps)` segments.
    pub fn segments(segments: &[(u32, usize)]) -> Self {
        let order = segments
            .iter()
            .flat_map(|&(p, k)| std::iter::repeat_n(ProcessId::new(p), k))
            .collect();
        Schedule::explicit(order)
    }

    pub fn random(seed: u64) -> Self {
        Schedule {
            order: Order::Random {
                seed,
                weights: Vec::new(),
                max_burst: 1,
            },
            crashes: BTreeMap::new(),
            fair_tail: false,
        }
    }

    /// Seeded schedule with bursts, favouring some processes over others.
    pub fn bursty(seed: u64, weights: Vec<u32>, max_burst: u32) -> Self {
        Schedule {
            order: Order::Random {
                seed,
                weights,
                max_burst: max_burst.max(1),
            },
            crashes: BTreeMap::new(),
            fair_tail: false,
        }
    }

    pub fn round_robin() -> Self {
        Schedule {
            order: Order::RoundRobin,
            crashes: BTreeMap::new(),
            fair_tail: false,
        }
    }

    pub fn with_fair_tail(mut self) -> Self {
        self.fair_tail = true;
        self
    }

    pub fn with_crash(mut self, p: ProcessId, at_step: u64) -> Self {
        self.crashes.insert(p, at_step);
        self
    }

    pub fn is_crashed(&self, p: ProcessId, step: u64) -> bool {
        self.crashes.get(&p).is_some_and(|&at| step >= at)
    }

    /// Parses whitespace-separated process indices (`3` or `p3`), the
    /// directive `crash <p> <step>` and the word `fair-tail`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Schedule, ScheduleParseError> {
        let mut order = Vec::new();
        let mut schedule = Schedule::explicit(Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let mut tokens = content.split_whitespace();
            while let Some(tok) = tokens.next() {
                match tok {
                    "crash" => {
                        let p = tokens.next().and_then(parse_process).ok_or(ScheduleParseError {
                            line,
                            message: "crash needs a process".into(),
                        })?;
                        let at = tokens.next().and_then(|t| t.parse().ok()).ok_or(ScheduleParseError {
                            line,
                            message: "crash needs a step index".into(),
                        })?;
                        schedule.crashes.insert(p, at);
                    }
                    "fair-tail" => schedule.fair_tail = true,
                    other => order.push(parse_process(other).ok_or_else(|| ScheduleParseError {
                        line,
                        message: format!("`{other}` is not a process index"),
                    })?),
                }
            }
        }
        schedule.order = Order::Explicit(order);
        Ok(schedule)
    }
}

fn parse_process(tok: &str) -> Option<ProcessId> {
    let digits = tok.strip_prefix('p').unwrap_or(tok);
    digits.parse::<u32>().ok().filter(|&i| i >= 1).map(ProcessId::new)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schedule line {line}: {message}")]
pub struct ScheduleParseError {
    pub line: usize,
    pub message: String,
}

pub(crate) enum Next {
    Pick(ProcessId),
    Stop,
}

/// Iteration state over a [`Schedule`].
pub(crate) struct Cursor {
    pos: usize,
    rng: Option<ChaCha8Rng>,
    burst: Option<(ProcessId, u32)>,
    last: Option<ProcessId>,
}

impl Cursor {
    pub(crate) fn new(schedule: &Schedule) -> Self {
        let rng = match &schedule.order {
            Order::Random { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        Cursor {
            pos: 0,
            rng,
            burst: None,
            last: None,
        }
    }

    /// Next process to move; `runnable` is sorted and non-empty.
    pub(crate) fn next(&mut self, schedule: &Schedule, runnable: &[ProcessId]) -> Next {
        let pick = match &schedule.order {
            Order::Explicit(order) => {
                if let Some(&p) = order.get(self.pos) {
                    self.pos += 1;
                    p
                } else if schedule.fair_tail {
                    self.round_robin(runnable)
                } else {
                    return Next::Stop;
                }
            }
            Order::RoundRobin => self.round_robin(runnable),
            Order::Random { weights, max_burst, .. } => {
                let rng = self.rng.as_mut().expect("random order has an rng");
                match self.burst {
                    Some((p, left)) if left > 0 && runnable.contains(&p) => {
                        self.burst = Some((p, left - 1));
                        p
                    }
                    _ => {
                        let w: Vec<u32> = runnable
                            .iter()
                            .map(|p| weights.get(p.slot()).copied().unwrap_or(1).max(1))
                            .collect();
                        let dist = WeightedIndex::new(&w).expect("positive weights");
                        let p = runnable[dist.sample(rng)];
                        let len = rng.gen_range(1..=*max_burst);
                        self.burst = Some((p, len - 1));
                        p
                    }
                }
            }
        };
        self.last = Some(pick);
        Next::Pick(pick)
    }

    fn round_robin(&mut self, runnable: &[ProcessId]) -> ProcessId {
        match self.last {
            Some(last) => runnable.iter().copied().find(|p| *p > last).unwrap_or(runnable[0]),
            None => runnable[0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_directives() {
        let s = Schedule::parse("1 2 p1 # comment\ncrash 2 7\nfair-tail\n").unwrap();
        assert_eq!(
            s.order,
            Order::Explicit(vec![ProcessId::new(1), ProcessId::new(2), ProcessId::new(1)])
        );
        assert!(s.is_crashed(ProcessId::new(2), 7));
        assert!(!s.is_crashed(ProcessId::new(2), 6));
        assert!(s.fair_tail);
        let err = Schedule::parse("1\n2 x\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(Schedule::parse("crash 1").is_err());
    }

    #[test]
    fn round_robin_cycles() {
        let s = Schedule::round_robin();
        let mut c = Cursor::new(&s);
        let runnable = [ProcessId::new(1), ProcessId::new(3)];
        let picks: Vec<u32> = (0..4)
            .map(|_| match c.next(&s, &runnable) {
                Next::Pick(p) => p.index(),
                Next::Stop => 0,
            })
            .collect();
        assert_eq!(picks, [1, 3, 1, 3]);
    }
}
