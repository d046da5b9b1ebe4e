//! Periodic piecewise-quintic trajectories through key events.

use serde::{Deserialize, Serialize};

use crate::data::types::JointChannel;
use crate::events::{KeyEvent, KeyEventSet, Signal, Waveform, MIN_EVENT_SEPARATION};
use crate::error::{GaitError, Result};

/// Scan points per cycle used when extracting events from a spline.
pub const SPLINE_SCAN_POINTS: usize = 2000;

/// Degree-5 polynomial in the local time `s = (t - t0) / (t1 - t0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuinticSegment {
    /// Start, % of cycle.
    pub t0: f64,
    /// End, % of cycle; above 100 for the segment that wraps.
    pub t1: f64,
    pub coefficients: [f64; 6],
}

impl QuinticSegment {
    /// The quintic matching value and first two derivatives (per unit of
    /// local time) at both ends.
    pub fn hermite(t0: f64, t1: f64, start: [f64; 3], end: [f64; 3]) -> QuinticSegment {
        let [y0, v0, a0] = start;
        let [y1, v1, a1] = end;
        let dy = y1 - y0;
        QuinticSegment {
            t0,
            t1,
            coefficients: [
                y0,
                v0,
                0.5 * a0,
                10.0 * dy - 6.0 * v0 - 4.0 * v1 - 0.5 * (3.0 * a0 - a1),
                -15.0 * dy + 8.0 * v0 + 7.0 * v1 + 0.5 * (3.0 * a0 - 2.0 * a1),
                6.0 * dy - 3.0 * v0 - 3.0 * v1 - 0.5 * (a0 - a1),
            ],
        }
    }

    pub fn span(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Value and derivatives up to third order with respect to `s`.
    pub fn local(&self, s: f64) -> [f64; 4] {
        let c = &self.coefficients;
        let p = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
        let d1 = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
        let d2 = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
        let d3 = 6.0 * c[3] + s * (24.0 * c[4] + s * 60.0 * c[5]);
        [p, d1, d2, d3]
    }
}

/// Periodic C² trajectory of one channel: one quintic per consecutive pair
/// of events, the last connecting back to the first one cycle later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpline {
    pub channel: JointChannel,
    /// Seconds; sets the conversion between % of cycle and real time.
    pub cycle_time: f64,
    /// The interpolated events, sorted by time.
    pub knots: Vec<KeyEvent>,
    pub segments: Vec<QuinticSegment>,
}

/// Builds the interpolating spline. Derivatives are converted from unit/s
/// to unit per local segment time through the cycle time.
pub fn build_spline(events: &KeyEventSet) -> Result<TrajectorySpline> {
    let n = events.events.len();
    if n == 0 {
        return Err(GaitError::EmptyInput(format!("{}: no events", events.channel)));
    }
    if !(events.cycle_time > 0.0 && events.cycle_time.is_finite()) {
        return Err(GaitError::InvariantViolation(format!(
            "cycle time {} s must be positive",
            events.cycle_time
        )));
    }
    let mut segments = Vec::with_capacity(n);
    for k in 0..n {
        let a = &events.events[k];
        let b = &events.events[(k + 1) % n];
        let t1 = if k + 1 < n { b.t } else { b.t + 100.0 };
        let span = t1 - a.t;
        if !(span >= MIN_EVENT_SEPARATION - 1e-9) {
            return Err(GaitError::IllConditionedSegment(format!(
                "{}: segment {} -> {} spans {span:.4}% (minimum {MIN_EVENT_SEPARATION}%)",
                events.channel, a.detector_id, b.detector_id
            )));
        }
        let secs = span * events.cycle_time / 100.0;
        segments.push(QuinticSegment::hermite(
            a.t,
            t1,
            [a.y, a.ydot * secs, a.yddot * secs * secs],
            [b.y, b.ydot * secs, b.yddot * secs * secs],
        ));
    }
    Ok(TrajectorySpline {
        channel: events.channel,
        cycle_time: events.cycle_time,
        knots: events.events.clone(),
        segments,
    })
}

impl TrajectorySpline {
    /// Same %-domain shape played back with another cycle time.
    pub fn with_cycle_time(&self, cycle_time: f64) -> TrajectorySpline {
        TrajectorySpline {
            cycle_time,
            ..self.clone()
        }
    }

    fn segment_at(&self, t: f64) -> (&QuinticSegment, f64) {
        let first = self.segments[0].t0;
        let mut t = t.rem_euclid(100.0);
        if t < first {
            t += 100.0;
        }
        let k = self
            .segments
            .partition_point(|s| s.t1 <= t)
            .min(self.segments.len() - 1);
        let seg = &self.segments[k];
        (seg, (t - seg.t0) / seg.span())
    }

    /// Value and time derivatives up to third order at `t` % (unit, unit/s,
    /// unit/s², unit/s³).
    pub fn eval_full(&self, t: f64) -> [f64; 4] {
        let (seg, s) = self.segment_at(t);
        let secs = seg.span() * self.cycle_time / 100.0;
        let [p, d1, d2, d3] = seg.local(s);
        [p, d1 / secs, d2 / (secs * secs), d3 / (secs * secs * secs)]
    }

    /// Position, velocity and acceleration at `t` %.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let [p, v, a, _] = self.eval_full(t);
        [p, v, a]
    }

    /// Positions on a grid of `n` points over 0..=100 %.
    pub fn sample_grid(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.eval(100.0 * i as f64 / (n - 1) as f64)[0])
            .collect()
    }

    /// Root of the derivative of `signal` near `t`, bracketed by `[lo, hi]`,
    /// by Newton steps safeguarded with bisection.
    fn stationary_point(&self, signal: Signal, mut lo: f64, mut hi: f64, t: f64) -> f64 {
        let (g, dg) = match signal {
            Signal::Position => (1, 2),
            Signal::Velocity => (2, 3),
        };
        let f = |t: f64| {
            let e = self.eval_full(t);
            (e[g], e[dg])
        };
        let (flo, fhi) = (f(lo).0, f(hi).0);
        if flo == 0.0 {
            return lo;
        }
        if fhi == 0.0 || flo.signum() == fhi.signum() {
            return if fhi == 0.0 { hi } else { t };
        }
        let rising = flo < 0.0;
        let mut x = t;
        for _ in 0..100 {
            let (fx, dfx) = f(x);
            if fx == 0.0 {
                break;
            }
            if (fx < 0.0) == rising {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - fx / dfx;
            let next = if dfx != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() < 1e-13 * (1.0 + x.abs()) {
                x = next;
                break;
            }
            x = next;
        }
        x
    }
}

impl Waveform for TrajectorySpline {
    fn cycle_time(&self) -> f64 {
        self.cycle_time
    }

    fn scan_len(&self) -> usize {
        SPLINE_SCAN_POINTS
    }

    fn scan_value(&self, signal: Signal, i: usize) -> f64 {
        let e = self.eval(100.0 * i as f64 / SPLINE_SCAN_POINTS as f64);
        match signal {
            Signal::Position => e[0],
            Signal::Velocity => e[1],
        }
    }

    fn state(&self, t: f64) -> [f64; 3] {
        self.eval(t)
    }

    fn refine(&self, signal: Signal, i: usize) -> f64 {
        let h = 100.0 / SPLINE_SCAN_POINTS as f64;
        let t = i as f64 * h;
        self.stationary_point(signal, t - h, t + h, t).rem_euclid(100.0)
    }
}
