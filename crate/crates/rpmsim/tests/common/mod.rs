#![allow(dead_code)]

//! Shared test support: the independent CoDel decision oracle, used both by
//! the dedicated oracle suite and by the acceptance gate.
//!
//! The oracle is a straight-line transcription of the RFC 8289 reference
//! pseudocode, kept deliberately different in structure from the library
//! implementation (sentinel times instead of `Option`, one flat function
//! instead of helper methods). Decisions are compared packet by packet on
//! synthetic sojourn traces.

use rpmsim::codel::{CodelDecision, CodelParams, CodelState};
use rpmsim::time::SimTime;

/// Sentinel-time transcription of the RFC 8289 deque pseudocode in decision
/// form: `true` corresponds to the instant stock CoDel would drop/mark.
pub struct Oracle {
    target_ns: u64,
    interval_ns: u64,
    first_above_ns: u64, // 0 = unset
    drop_next_ns: u64,
    count: u32,
    lastcount: u32,
    dropping: bool,
}

impl Oracle {
    pub fn new(target_ns: u64, interval_ns: u64) -> Oracle {
        Oracle {
            target_ns,
            interval_ns,
            first_above_ns: 0,
            drop_next_ns: 0,
            count: 0,
            lastcount: 0,
            dropping: false,
        }
    }

    pub fn next_signal_instant(&self, from_ns: u64, count: u32) -> u64 {
        // interval / sqrt(count), half-up rounding to integer nanoseconds.
        let spacing = self.interval_ns as f64 / (count as f64).sqrt();
        from_ns + (spacing + 0.5).floor() as u64
    }

    pub fn decide(&mut self, sojourn_ns: u64, now_ns: u64) -> bool {
        // shouldDrop / ok_to_drop
        let ok;
        if sojourn_ns < self.target_ns {
            self.first_above_ns = 0;
            ok = false;
        } else if self.first_above_ns == 0 {
            self.first_above_ns = now_ns + self.interval_ns;
            ok = false;
        } else {
            ok = now_ns >= self.first_above_ns;
        }

        if self.dropping {
            if !ok {
                self.dropping = false;
                return false;
            }
            if now_ns >= self.drop_next_ns {
                self.count += 1;
                self.drop_next_ns = self.next_signal_instant(self.drop_next_ns, self.count);
                return true;
            }
            false
        } else if ok {
            self.dropping = true;
            let delta = self.count.wrapping_sub(self.lastcount);
            self.count = if self.count > self.lastcount
                && delta > 1
                && now_ns >= self.drop_next_ns
                && now_ns - self.drop_next_ns < 16 * self.interval_ns
            {
                delta
            } else {
                1
            };
            self.drop_next_ns = self.next_signal_instant(now_ns, self.count);
            self.lastcount = self.count;
            true
        } else {
            false
        }
    }
}

/// Runs both implementations over `(sojourn, now)` samples and compares every
/// decision. Returns the number of signals.
pub fn compare_trace(params: CodelParams, trace: &[(u64, u64)]) -> usize {
    let mut dut = CodelState::new(params);
    let mut oracle = Oracle::new(params.target.as_nanos(), params.interval.as_nanos());
    let mut signals = 0;
    for (i, &(sojourn_ns, now_ns)) in trace.iter().enumerate() {
        let got = dut.evaluate(SimTime::from_nanos(sojourn_ns), SimTime::from_nanos(now_ns));
        let want = oracle.decide(sojourn_ns, now_ns);
        assert_eq!(
            got == CodelDecision::Signal,
            want,
            "decision mismatch at packet {i} (sojourn {sojourn_ns} ns, t {now_ns} ns)"
        );
        if want {
            signals += 1;
        }
    }
    signals
}

/// The 1 ms target / 20 ms interval operating point used throughout.
pub fn section_params() -> CodelParams {
    CodelParams {
        target: SimTime::from_millis(1),
        interval: SimTime::from_millis(20),
    }
}

use num_complex::Complex64;
use rpmsim::stability::{char_residual, FluidParams, SearchRegion};

/// Splits a `(c, d, d_s)` tuple into propagation pieces consistent with the
/// two loop delays; the queueing share is pinned at `d/10`.
pub fn params_for(c: f64, d: f64, d_s: f64, eta: f64) -> FluidParams {
    FluidParams {
        a: 1.0,
        b: 0.5,
        c,
        tau_f: d_s / 2.0,
        tau_r: d - d_s / 2.0 - d / 10.0,
        tau_rs: d_s / 2.0,
        tau_q: d / 10.0,
        x_star: 0.0,
        eta,
    }
}

/// Argument-principle root count: winding number of char(s) around a
/// rectangle covering the search region and its conjugate mirror.
pub fn winding_count(eta: f64, params: &FluidParams, region: &SearchRegion) -> i64 {
    let n = 40_000usize;
    let (x0, x1) = (region.re_min, region.re_max);
    let (y0, y1) = (-region.im_max, region.im_max);
    let mut pts = Vec::with_capacity(4 * n);
    for k in 0..n {
        let t = k as f64 / n as f64;
        pts.push(Complex64::new(x0 + (x1 - x0) * t, y0));
    }
    for k in 0..n {
        let t = k as f64 / n as f64;
        pts.push(Complex64::new(x1, y0 + (y1 - y0) * t));
    }
    for k in 0..n {
        let t = k as f64 / n as f64;
        pts.push(Complex64::new(x1 - (x1 - x0) * t, y1));
    }
    for k in 0..n {
        let t = k as f64 / n as f64;
        pts.push(Complex64::new(x0, y1 - (y1 - y0) * t));
    }
    let mut total = 0.0f64;
    let mut prev = char_residual(pts[0], eta, params).arg();
    for k in 1..=4 * n {
        let z = pts[k % (4 * n)];
        let a = char_residual(z, eta, params).arg();
        let mut da = a - prev;
        while da > std::f64::consts::PI {
            da -= 2.0 * std::f64::consts::PI;
        }
        while da < -std::f64::consts::PI {
            da += 2.0 * std::f64::consts::PI;
        }
        total += da;
        prev = a;
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}
