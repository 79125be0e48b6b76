//! Fluid model of the reverse-marked AIMD control loop and its stability.
//!
//! The sender window obeys a delay differential equation driven by the queue
//! excess at the bottleneck; reverse marking gives the decrease term a much
//! shorter delay (`d_s`) than the full round trip (`d`). Linearizing yields a
//! quasi-polynomial characteristic function; the normalization factor `eta`
//! computed for any real `s < s_star < 0` places a real root at `s` and keeps
//! the dominant roots in the left half plane.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("non-positive parameter: {0}")]
    NonPositive(&'static str),
    #[error("degenerate delays: d equals d_s")]
    DegenerateDelays,
    #[error("negative discriminant in s_star: {0}")]
    NegativeDiscriminant(f64),
    #[error("s_star must be negative, got {0}")]
    NonNegativeSStar(f64),
    #[error("integration step too large: step {step}, min delay {min_delay}")]
    StepTooLarge { step: f64, min_delay: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
}

/// All model parameters. Delays in seconds, capacity in packets per second,
/// queue lengths in packets.
#[derive(Clone, Copy, Debug)]
pub struct FluidParams {
    /// Additive increase parameter.
    pub a: f64,
    /// Multiplicative decrease factor.
    pub b: f64,
    /// Bottleneck capacity, packets/second.
    pub c: f64,
    /// Forward propagation delay to the bottleneck switch.
    pub tau_f: f64,
    /// Propagation delay of the rest of the loop (switch -> receiver ->
    /// sender).
    pub tau_r: f64,
    /// Reverse-mark propagation delay (switch -> sender).
    pub tau_rs: f64,
    /// Queueing delay at the bottleneck port.
    pub tau_q: f64,
    /// AQM target queue length, packets.
    pub x_star: f64,
    /// Marking normalization factor.
    pub eta: f64,
}

impl FluidParams {
    /// Full round-trip delay `d`.
    pub fn d(&self) -> f64 {
        self.tau_f + self.tau_r + self.tau_q
    }

    /// Short (reverse-marked) round-trip delay `d_s`.
    pub fn d_s(&self) -> f64 {
        self.tau_f + self.tau_rs
    }

    pub fn validate(&self) -> Result<(), StabilityError> {
        if self.a <= 0.0 {
            return Err(StabilityError::NonPositive("a"));
        }
        if self.b <= 0.0 || self.b >= 1.0 {
            return Err(StabilityError::NonPositive("b in (0,1)"));
        }
        if self.c <= 0.0 {
            return Err(StabilityError::NonPositive("c"));
        }
        if self.d_s() <= 0.0 {
            return Err(StabilityError::NonPositive("d_s"));
        }
        if self.d() <= self.d_s() {
            return Err(StabilityError::NonPositive("d - d_s"));
        }
        if self.eta < 0.0 {
            return Err(StabilityError::NonPositive("eta"));
        }
        Ok(())
    }

    /// Derived coefficients of the linearized loop.
    pub fn derived(&self) -> DerivedCoeffs {
        let d = self.d();
        DerivedCoeffs {
            gamma: gamma(self.a, self.b, self.c, d).expect("validated params"),
            alpha: self.eta * self.a / (d * d),
            omega: self.b * self.c * self.c * self.eta,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DerivedCoeffs {
    pub gamma: f64,
    pub alpha: f64,
    pub omega: f64,
}

/// `gamma = a*b*c / (a + b*c^2*d^2)`.
pub fn gamma(a: f64, b: f64, c: f64, d: f64) -> Result<f64, StabilityError> {
    if a <= 0.0 {
        return Err(StabilityError::NonPositive("a"));
    }
    if b <= 0.0 {
        return Err(StabilityError::NonPositive("b"));
    }
    if c <= 0.0 {
        return Err(StabilityError::NonPositive("c"));
    }
    if d <= 0.0 {
        return Err(StabilityError::NonPositive("d"));
    }
    Ok(a * b * c / (a + b * c * c * d * d))
}

/// Normalization factor placing a real characteristic root at `s`, for the
/// classical AIMD parameters a = 1, b = 1/2:
///
/// `eta = ((e^{-s d} - e^{-s d_s} - 2) s gamma - s^2)
///        / (e^{-s d}/d^2 + c^2 e^{-s d_s}/2)`.
pub fn eta_for(s: f64, d: f64, d_s: f64, c: f64, gamma: f64) -> f64 {
    let esd = (-s * d).exp();
    let esds = (-s * d_s).exp();
    let numer = (esd - esds - 2.0) * s * gamma - s * s;
    let denom = esd / (d * d) + c * c * esds / 2.0;
    numer / denom
}

/// The negative real bound `s_star`.
///
/// `s_star` is the negative root of the quadratic obtained by expanding the
/// exponentials in the `eta > 0` condition to second order:
///
/// `q(s) = (gamma (d^2 - d_s^2)/2) s^2 - (gamma (d - d_s) + 1) s - 2 gamma`,
///
/// whose discriminant expands to
/// `5 d^2 g^2 - 2 d g^2 d_s + 2 d g - 3 g^2 d_s^2 - 2 g d_s + 1` (g = gamma).
/// Real `s` in the open band `(s_star, 0)` yield a positive `eta` (to the
/// accuracy of the expansion); [`eta_for`] places an exact real root there
/// either way, so the Lemma identity holds for any `s`.
pub fn s_star(gamma: f64, d: f64, d_s: f64) -> Result<f64, StabilityError> {
    if gamma <= 0.0 {
        return Err(StabilityError::NonPositive("gamma"));
    }
    if d <= 0.0 || d_s <= 0.0 {
        return Err(StabilityError::NonPositive("delays"));
    }
    if d == d_s {
        return Err(StabilityError::DegenerateDelays);
    }
    let disc = 5.0 * d * d * gamma * gamma - 2.0 * d * gamma * gamma * d_s + 2.0 * d * gamma
        - 3.0 * gamma * gamma * d_s * d_s
        - 2.0 * gamma * d_s
        + 1.0;
    if disc < 0.0 {
        return Err(StabilityError::NegativeDiscriminant(disc));
    }
    let s = (d * gamma - gamma * d_s + 1.0 - disc.sqrt()) / (gamma * (d * d - d_s * d_s));
    if s >= 0.0 {
        return Err(StabilityError::NonNegativeSStar(s));
    }
    Ok(s)
}

/// Characteristic function of the linearized loop:
/// `s^2 + (2 - e^{-s d} + e^{-s d_s}) gamma s + alpha e^{-s d} + omega e^{-s d_s}`.
pub fn char_residual(s: Complex64, eta: f64, params: &FluidParams) -> Complex64 {
    let p = FluidParams { eta, ..*params };
    let co = p.derived();
    let d = p.d();
    let d_s = p.d_s();
    let esd = (-s * d).exp();
    let esds = (-s * d_s).exp();
    s * s + (Complex64::new(2.0, 0.0) - esd + esds) * co.gamma * s + co.alpha * esd
        + co.omega * esds
}

fn char_derivative(s: Complex64, eta: f64, params: &FluidParams) -> Complex64 {
    let p = FluidParams { eta, ..*params };
    let co = p.derived();
    let d = p.d();
    let d_s = p.d_s();
    let esd = (-s * d).exp();
    let esds = (-s * d_s).exp();
    2.0 * s
        + co.gamma * (Complex64::new(2.0, 0.0) - esd + esds)
        + co.gamma * s * (d * esd - d_s * esds)
        - co.alpha * d * esd
        - co.omega * d_s * esds
}

/// Rectangular search window in the complex plane; only `Im >= 0` is scanned
/// (conjugate symmetry).
#[derive(Clone, Copy, Debug)]
pub struct SearchRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
}

impl SearchRegion {
    /// The default window used by the stability report: `Re` in
    /// `[-5/d, 0.5/d]`, `Im` in `[0, 20/d]`.
    pub fn default_for(d: f64) -> SearchRegion {
        SearchRegion {
            re_min: -5.0 / d,
            re_max: 0.5 / d,
            im_max: 20.0 / d,
        }
    }

    fn contains(&self, s: Complex64, slack: f64) -> bool {
        s.re >= self.re_min - slack
            && s.re <= self.re_max + slack
            && s.im >= -slack
            && s.im <= self.im_max + slack
    }
}

/// Locates roots of the characteristic function inside `region` by grid
/// seeding plus damped Newton iterations, deduplicated within 1e-8. Seeds
/// that fail to converge are skipped.
pub fn find_dominant_roots(
    eta: f64,
    params: &FluidParams,
    region: &SearchRegion,
) -> Vec<Complex64> {
    const GRID_RE: usize = 40;
    const GRID_IM: usize = 40;
    const TOL: f64 = 1e-11;
    const DEDUP: f64 = 1e-8;
    let d = params.d();
    let scale = 1.0 / d; // natural frequency scale for tolerances
    let mut roots: Vec<Complex64> = Vec::new();
    for i in 0..=GRID_RE {
        for j in 0..=GRID_IM {
            let re = region.re_min
                + (region.re_max - region.re_min) * i as f64 / GRID_RE as f64;
            let im = region.im_max * j as f64 / GRID_IM as f64;
            let mut s = Complex64::new(re, im);
            let mut converged = false;
            for _ in 0..120 {
                let f = char_residual(s, eta, params);
                if f.norm() < TOL * scale * scale {
                    converged = true;
                }
                let df = char_derivative(s, eta, params);
                if df.norm() == 0.0 {
                    break;
                }
                let mut step = f / df;
                // damp oversized steps
                let max_step = 2.0 * scale;
                if step.norm() > max_step {
                    step *= max_step / step.norm();
                }
                s -= step;
                if !s.re.is_finite() || !s.im.is_finite() {
                    break;
                }
                // A small residual alone can stop anywhere in a flat valley
                // between two close roots; polish until the Newton step
                // itself is negligible so duplicates collapse exactly.
                if converged && step.norm() <= 1e-12 * scale.max(s.norm()) {
                    break;
                }
            }
            if !converged {
                continue;
            }
            // fold conjugates into the upper half plane
            if s.im < 0.0 {
                s = s.conj();
            }
            if s.im.abs() < DEDUP {
                s.im = 0.0;
            }
            if !region.contains(s, DEDUP * scale.max(1.0)) {
                continue;
            }
            if roots.iter().all(|r| (r - s).norm() > DEDUP * scale.max(1.0)) {
                roots.push(s);
            }
        }
    }
    roots.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    roots
}

/// Window/queue trajectory from fixed-step integration.
#[derive(Clone, Debug)]
pub struct FluidTrajectory {
    pub step: f64,
    pub times: Vec<f64>,
    pub window: Vec<f64>,
    pub rate: Vec<f64>,
    pub queue: Vec<f64>,
}

impl FluidTrajectory {
    pub fn final_window(&self) -> f64 {
        *self.window.last().unwrap()
    }

    pub fn final_queue(&self) -> f64 {
        *self.queue.last().unwrap()
    }

    pub fn max_queue(&self) -> f64 {
        self.queue.iter().cloned().fold(0.0, f64::max)
    }
}

/// History buffer with linear interpolation for delayed-term lookups.
struct History {
    step: f64,
    offset: usize, // index of t = 0
    w: Vec<f64>,
    x: Vec<f64>,
}

impl History {
    fn at(&self, t: f64, filled: usize) -> (f64, f64) {
        let pos = t / self.step + self.offset as f64;
        let last = (filled - 1) as f64;
        let pos = pos.clamp(0.0, last);
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if frac == 0.0 || i + 1 >= filled {
            (self.w[i], self.x[i])
        } else {
            (
                self.w[i] * (1.0 - frac) + self.w[i + 1] * frac,
                self.x[i] * (1.0 - frac) + self.x[i + 1] * frac,
            )
        }
    }
}

/// Integrates the window/queue system with a classical 4th-order scheme and
/// linear interpolation of the delayed terms. History on `[-d, 0]` is held
/// constant at the initial condition `w = 1`, `x = 0`; the rate closure is
/// `r(t) = w(t)/d`.
pub fn integrate_fluid(
    params: &FluidParams,
    horizon: f64,
    step: f64,
) -> Result<FluidTrajectory, StabilityError> {
    params.validate()?;
    let d = params.d();
    let d_s = params.d_s();
    let min_delay = d.min(d_s);
    if step > min_delay / 50.0 {
        return Err(StabilityError::StepTooLarge { step, min_delay });
    }
    let a = params.a;
    let b = params.b;
    let c = params.c;
    let eta = params.eta;
    let x_star = params.x_star;
    let tau_rq = params.tau_r + params.tau_q; // queue delay in the increase term
    let tau_rs = params.tau_rs;
    let tau_f = params.tau_f;

    let n_steps = (horizon / step).ceil() as usize;
    let n_hist = (d / step).ceil() as usize + 2;
    let total = n_hist + n_steps + 1;
    let mut hist = History {
        step,
        offset: n_hist,
        w: vec![1.0; total],
        x: vec![0.0; total],
    };
    let rate = |w: f64| w / d;

    // dw, dx at time t given current (w, x)
    let deriv = |t: f64, w: f64, x: f64, filled: usize, hist: &History| -> (f64, f64) {
        let (w_d, _) = hist.at(t - d, filled);
        let (w_ds, _) = hist.at(t - d_s, filled);
        let (_, x_rq) = hist.at(t - tau_rq, filled);
        let (_, x_rs) = hist.at(t - tau_rs, filled);
        let (w_f, _) = hist.at(t - tau_f, filled);
        let excess_rq = (x_rq - x_star).max(0.0);
        let excess_rs = (x_rs - x_star).max(0.0);
        let dw = a / w * rate(w_d) * (1.0 - eta * excess_rq)
            - b * w * rate(w_ds) * eta * excess_rs;
        let inflow = rate(w_f);
        let dx = if x > 0.0 {
            inflow - c
        } else {
            (inflow - c).max(0.0)
        };
        (dw, dx)
    };

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut window = Vec::with_capacity(n_steps + 1);
    let mut rate_out = Vec::with_capacity(n_steps + 1);
    let mut queue = Vec::with_capacity(n_steps + 1);

    for k in 0..=n_steps {
        let idx = n_hist + k;
        let t = k as f64 * step;
        let w = hist.w[idx];
        let x = hist.x[idx];
        times.push(t);
        window.push(w);
        rate_out.push(rate(w));
        queue.push(x);
        if !w.is_finite() || !x.is_finite() {
            return Err(StabilityError::NonFinite(t));
        }
        if k == n_steps {
            break;
        }
        let filled = idx + 1;
        let h = step;
        let (k1w, k1x) = deriv(t, w, x, filled, &hist);
        let (k2w, k2x) = deriv(t + h / 2.0, w + h / 2.0 * k1w, x + h / 2.0 * k1x, filled, &hist);
        let (k3w, k3x) = deriv(t + h / 2.0, w + h / 2.0 * k2w, x + h / 2.0 * k2x, filled, &hist);
        let (k4w, k4x) = deriv(t + h, w + h * k3w, x + h * k3x, filled, &hist);
        let mut w_next = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        let mut x_next = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        w_next = w_next.max(1.0);
        x_next = x_next.max(0.0);
        hist.w[idx + 1] = w_next;
        hist.x[idx + 1] = x_next;
    }

    Ok(FluidTrajectory {
        step,
        times,
        window,
        rate: rate_out,
        queue,
    })
}

/// One stability verdict row.
#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub d_s: f64,
    pub s: f64,
    pub gamma: f64,
    pub eta: f64,
    pub alpha: f64,
    pub omega: f64,
    pub s_star: f64,
    pub max_root_re: f64,
    pub stable: bool,
}

impl StabilityReport {
    pub const CSV_HEADER: &'static str =
        "a,b,c,d,d_s,s,gamma,eta,alpha,omega,s_star,max_root_re,verdict";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.a,
            self.b,
            self.c,
            self.d,
            self.d_s,
            self.s,
            self.gamma,
            self.eta,
            self.alpha,
            self.omega,
            self.s_star,
            self.max_root_re,
            if self.stable { "stable" } else { "unstable" }
        )
    }
}

/// Computes gamma, s_star, the stabilizing eta at `s = s_factor * s_star`,
/// the derived coefficients and the dominant characteristic roots, and a
/// verdict. `s_factor` in (0, 1) places `s` inside the positive-eta band
/// `(s_star, 0)`; the CLI default is 0.5 (mid-band).
pub fn stability_report(c: f64, d: f64, d_s: f64, s_factor: f64) -> Result<StabilityReport, StabilityError> {
    let a = 1.0;
    let b = 0.5;
    let g = gamma(a, b, c, d)?;
    let s_bound = s_star(g, d, d_s)?;
    let s = s_factor * s_bound;
    let eta = eta_for(s, d, d_s, c, g);
    // split d into propagation pieces consistent with (d, d_s)
    let params = FluidParams {
        a,
        b,
        c,
        tau_f: d_s / 2.0,
        tau_r: d - d_s / 2.0 - d / 10.0,
        tau_rs: d_s / 2.0,
        tau_q: d / 10.0,
        x_star: 0.0,
        eta,
    };
    let co = params.derived();
    let region = SearchRegion::default_for(d);
    let roots = find_dominant_roots(eta, &params, &region);
    let max_root_re = roots
        .iter()
        .map(|r| r.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        a,
        b,
        c,
        d,
        d_s,
        s,
        gamma: g,
        eta,
        alpha: co.alpha,
        omega: co.omega,
        s_star: s_bound,
        max_root_re,
        stable: max_root_re < 0.0,
    })
}
