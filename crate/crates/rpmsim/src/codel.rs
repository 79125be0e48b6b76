//! CoDel queue-delay controller (RFC 8289), in decision form.
//!
//! The controller is evaluated once per dequeued packet with that packet's
//! sojourn time. Instead of dropping, it returns a [`CodelDecision`]: `Signal`
//! corresponds to the point where stock CoDel would drop (or ECN-mark) the
//! packet. What a `Signal` does to the packet is up to the caller: CE-mark or
//! drop in forward-marking mode, increment the congestion state register in
//! reverse-marking mode.

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CodelParams {
    pub target: SimTime,
    pub interval: SimTime,
}

impl Default for CodelParams {
    fn default() -> Self {
        CodelParams {
            target: SimTime::from_millis(1),
            interval: SimTime::from_millis(20),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CodelDecision {
    Forward,
    Signal,
}

/// Per-port CoDel state.
#[derive(Clone, Debug)]
pub struct CodelState {
    params: CodelParams,
    first_above_time: Option<SimTime>,
    drop_next: SimTime,
    count: u32,
    lastcount: u32,
    dropping: bool,
}

impl CodelState {
    pub fn new(params: CodelParams) -> Self {
        CodelState {
            params,
            first_above_time: None,
            drop_next: SimTime::ZERO,
            count: 0,
            lastcount: 0,
            dropping: false,
        }
    }

    pub fn params(&self) -> CodelParams {
        self.params
    }

    pub fn in_dropping(&self) -> bool {
        self.dropping
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    /// Whether the standing delay has been above target for a full interval.
    fn ok_to_signal(&mut self, sojourn: SimTime, now: SimTime) -> bool {
        if sojourn < self.params.target {
            self.first_above_time = None;
            return false;
        }
        match self.first_above_time {
            None => {
                self.first_above_time = Some(now + self.params.interval);
                false
            }
            Some(t) => now >= t,
        }
    }

    /// One evaluation per dequeued packet.
    pub fn evaluate(&mut self, sojourn: SimTime, now: SimTime) -> CodelDecision {
        let ok = self.ok_to_signal(sojourn, now);
        if self.dropping {
            if !ok {
                self.dropping = false;
                return CodelDecision::Forward;
            }
            if now >= self.drop_next {
                self.count += 1;
                self.drop_next = control_law(self.drop_next, self.count, self.params.interval);
                return CodelDecision::Signal;
            }
            CodelDecision::Forward
        } else if ok {
            self.dropping = true;
            // Restart close to the previous rate if we left dropping state
            // only recently, per the RFC's count re-seeding.
            let delta = self.count.saturating_sub(self.lastcount);
            self.count = if delta > 1
                && now.checked_sub(self.drop_next).is_some_and(|dt| {
                    dt < SimTime::from_nanos(16 * self.params.interval.as_nanos())
                }) {
                delta
            } else {
                1
            };
            self.drop_next = control_law(now, self.count, self.params.interval);
            self.lastcount = self.count;
            CodelDecision::Signal
        } else {
            CodelDecision::Forward
        }
    }
}

/// Next signal instant: `drop_next + interval / sqrt(count)`, rounded half up
/// to whole nanoseconds.
pub fn control_law(drop_next: SimTime, count: u32, interval: SimTime) -> SimTime {
    assert!(count >= 1, "control_law requires count >= 1");
    let spacing = interval.as_nanos() as f64 / (count as f64).sqrt();
    drop_next + SimTime::from_nanos((spacing + 0.5).floor() as u64)
}
