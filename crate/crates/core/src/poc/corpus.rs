use std::cell::Cell;
use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use super::{PoC, PocId};
use crate::oracle::PoCResult;

pub trait Clock {
    /// Time elapsed since the clock was started.
    fn elapsed(&self) -> Duration;
}

pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn start() -> Self {
        SystemClock {
            start: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }
}

/// A clock that only moves when told to.
#[derive(Default)]
pub struct ManualClock {
    now: Cell<Duration>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        self.now.set(self.now.get() + by);
    }

    pub fn set(&self, to: Duration) {
        self.now.set(to);
    }
}

impl Clock for ManualClock {
    fn elapsed(&self) -> Duration {
        self.now.get()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub wall_clock: Duration,
    pub max_generation: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            wall_clock: Duration::from_secs(30 * 60),
            max_generation: 8,
        }
    }
}

#[derive(Debug)]
pub enum Next {
    Poc(PoC),
    Exhausted,
    BudgetExpired,
}

/// FIFO queue of pending PoCs with content-hash deduplication.
#[derive(Debug, Default)]
pub struct Corpus {
    queue: VecDeque<PocId>,
    store: BTreeMap<PocId, PoC>,
    results: BTreeMap<PocId, PoCResult>,
    budget: Budget,
}

impl Corpus {
    pub fn new(budget: Budget) -> Self {
        Corpus {
            budget,
            ..Default::default()
        }
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    /// Queues `poc` unless an identical one was seen before or it exceeds
    /// the generation cap.
    pub fn enqueue(&mut self, poc: PoC) -> bool {
        if poc.meta.generation > self.budget.max_generation || self.store.contains_key(&poc.id()) {
            return false;
        }
        self.queue.push_back(poc.id());
        self.store.insert(poc.id(), poc);
        true
    }

    pub fn next(&mut self, clock: &dyn Clock) -> Next {
        if clock.elapsed() >= self.budget.wall_clock {
            return Next::BudgetExpired;
        }
        match self.queue.pop_front() {
            Some(id) => Next::Poc(self.store[&id].clone()),
            None => Next::Exhausted,
        }
    }

    pub fn record(&mut self, result: PoCResult) {
        self.results.insert(result.poc_id, result);
    }

    pub fn get(&self, id: &PocId) -> Option<&PoC> {
        self.store.get(id)
    }

    pub fn result(&self, id: &PocId) -> Option<&PoCResult> {
        self.results.get(id)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn stored(&self) -> usize {
        self.store.len()
    }
}
