//! Concurrency cap plus a sliding-window request budget, shared by every
//! in-flight query against one endpoint.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug)]
struct State {
    in_flight: usize,
    recent: VecDeque<Instant>,
}

#[derive(Debug)]
pub struct RateLimiter {
    max_in_flight: usize,
    budget: Option<usize>,
    period: Duration,
    state: Mutex<State>,
    cv: Condvar,
}

/// Held while a request is in flight; releases its slot on drop.
#[must_use]
pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl RateLimiter {
    /// `per_minute = None` disables the budget.
    pub fn new(max_in_flight: usize, per_minute: Option<usize>) -> Self {
        Self::with_period(max_in_flight, per_minute, Duration::from_secs(60))
    }

    pub fn with_period(max_in_flight: usize, budget: Option<usize>, period: Duration) -> Self {
        Self {
            max_in_flight: max_in_flight.max(1),
            budget: budget.filter(|&b| b > 0),
            period,
            state: Mutex::new(State {
                in_flight: 0,
                recent: VecDeque::new(),
            }),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().unwrap();
        loop {
            let now = Instant::now();
            while state
                .recent
                .front()
                .is_some_and(|&t| now.duration_since(t) >= self.period)
            {
                state.recent.pop_front();
            }
            let budget_ok = self.budget.is_none_or(|b| state.recent.len() < b);
            if state.in_flight < self.max_in_flight && budget_ok {
                state.in_flight += 1;
                state.recent.push_back(now);
                return Permit { limiter: self };
            }
            state = if budget_ok {
                self.cv.wait(state).unwrap()
            } else {
                let oldest = *state
                    .recent
                    .front()
                    .expect("budget exhausted implies history");
                let wait = self.period.saturating_sub(now.duration_since(oldest));
                self.cv.wait_timeout(state, wait).unwrap().0
            };
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap().in_flight
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().unwrap();
        state.in_flight -= 1;
        drop(state);
        self.limiter.cv.notify_all();
    }
}
