//! Sparse key events of a gait cycle: timing (% of cycle), value, velocity
//! and acceleration at heel strike and at the extrema picked by a template.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::resample::PeriodicCubic;
use crate::data::types::{GaitCycle, JointChannel, Side};
use crate::error::{GaitError, Result};

/// Minimum spacing between consecutive events, % of cycle.
pub const MIN_EVENT_SEPARATION: f64 = 1.0;
/// Default stance/swing boundary, % of cycle.
pub const STANCE_END: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Position,
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Max,
    Min,
}

impl Extremum {
    fn sign(self) -> f64 {
        match self {
            Extremum::Max => 1.0,
            Extremum::Min => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeConstraint {
    #[default]
    None,
    VelocityZero,
    AccelerationZero,
}

/// The four regressed quantities of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    T,
    Y,
    Ydot,
    Yddot,
}

impl Parameter {
    pub const ALL: [Parameter; 4] = [Parameter::T, Parameter::Y, Parameter::Ydot, Parameter::Yddot];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::T => "t",
            Parameter::Y => "y",
            Parameter::Ydot => "ydot",
            Parameter::Yddot => "yddot",
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDetector {
    pub id: String,
    pub signal: Signal,
    /// Absent for pinned detectors.
    #[serde(default)]
    pub extremum: Option<Extremum>,
    /// Search window `[lo, hi]`, % of cycle.
    pub window: [f64; 2],
    #[serde(default)]
    pub pinned_time: Option<f64>,
    #[serde(default)]
    pub constraint: DerivativeConstraint,
}

impl EventDetector {
    pub fn pinned(id: &str, t: f64) -> EventDetector {
        EventDetector {
            id: id.into(),
            signal: Signal::Position,
            extremum: None,
            window: [0.0, 100.0],
            pinned_time: Some(t),
            constraint: DerivativeConstraint::None,
        }
    }

    /// Extremum detector with the natural constraint: zero velocity at a
    /// position extremum, zero acceleration at a velocity extremum.
    pub fn extremum(id: &str, signal: Signal, extremum: Extremum, lo: f64, hi: f64) -> EventDetector {
        EventDetector {
            id: id.into(),
            signal,
            extremum: Some(extremum),
            window: [lo, hi],
            pinned_time: None,
            constraint: match signal {
                Signal::Position => DerivativeConstraint::VelocityZero,
                Signal::Velocity => DerivativeConstraint::AccelerationZero,
            },
        }
    }

    /// Where the detector sits on the cycle, used to order a template.
    pub fn anchor(&self) -> f64 {
        self.pinned_time
            .unwrap_or(0.5 * (self.window[0] + self.window[1]))
    }

    /// Parameters fixed to zero by construction rather than regressed.
    pub fn fixed_parameters(&self) -> Vec<Parameter> {
        let mut fixed = Vec::new();
        if self.pinned_time.is_some() {
            fixed.push(Parameter::T);
        }
        match self.constraint {
            DerivativeConstraint::None => {}
            DerivativeConstraint::VelocityZero => fixed.push(Parameter::Ydot),
            DerivativeConstraint::AccelerationZero => fixed.push(Parameter::Yddot),
        }
        fixed
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.window;
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(GaitError::Config(format!(
                "detector {}: window [{lo}, {hi}] must satisfy 0 <= lo < hi <= 100",
                self.id
            )));
        }
        match (self.pinned_time, self.extremum) {
            (Some(t), None) if (0.0..100.0).contains(&t) => Ok(()),
            (Some(t), None) => Err(GaitError::Config(format!(
                "detector {}: pinned time {t} outside [0, 100)",
                self.id
            ))),
            (Some(_), Some(_)) => Err(GaitError::Config(format!(
                "detector {}: a pinned detector has no extremum",
                self.id
            ))),
            (None, None) => Err(GaitError::Config(format!(
                "detector {}: needs an extremum or a pinned time",
                self.id
            ))),
            (None, Some(_)) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyEventTemplate {
    pub channel: JointChannel,
    #[serde(rename = "detector")]
    pub detectors: Vec<EventDetector>,
}

impl KeyEventTemplate {
    pub fn expected_count(channel: JointChannel) -> usize {
        if channel.has_heel_strike_event() {
            6
        } else {
            4
        }
    }

    pub fn detector(&self, id: &str) -> Option<&EventDetector> {
        self.detectors.iter().find(|d| d.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = Self::expected_count(self.channel);
        if self.detectors.len() != expected {
            return Err(GaitError::Config(format!(
                "{} template has {} detectors, expected {expected}",
                self.channel,
                self.detectors.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for d in &self.detectors {
            d.validate()?;
            if !ids.insert(d.id.as_str()) {
                return Err(GaitError::Config(format!(
                    "{} template: duplicate detector id {}",
                    self.channel, d.id
                )));
            }
        }
        if self.detectors.windows(2).any(|w| w[1].anchor() < w[0].anchor()) {
            return Err(GaitError::Config(format!(
                "{} template: detectors not ordered by window midpoint",
                self.channel
            )));
        }
        if self.channel.has_heel_strike_event() && self.detectors[0].pinned_time != Some(0.0) {
            return Err(GaitError::Config(format!(
                "{} template: first detector must be heel strike pinned at 0",
                self.channel
            )));
        }
        Ok(())
    }
}

pub type Templates = BTreeMap<JointChannel, KeyEventTemplate>;

/// Built-in templates: heel strike plus stance/swing extrema for the joint
/// channels and the four full-cycle extrema for the pelvis.
pub fn default_templates() -> Templates {
    use Extremum::{Max, Min};
    use Signal::{Position as P, Velocity as V};
    let s = STANCE_END;
    let hs = || EventDetector::pinned("heel_strike", 0.0);
    let det = EventDetector::extremum;
    let templates = [
        KeyEventTemplate {
            channel: JointChannel::HipAbAd,
            detectors: vec![
                hs(),
                det("stance_vel_max", V, Max, 0.0, s),
                det("stance_pos_max", P, Max, 0.0, s),
                det("midstance_pos_min", P, Min, 20.0, 50.0),
                det("swing_pos_min", P, Min, s, 100.0),
                det("swing_vel_max", V, Max, s, 100.0),
            ],
        },
        KeyEventTemplate {
            channel: JointChannel::HipFlexExt,
            detectors: vec![
                hs(),
                det("stance_vel_min", V, Min, 0.0, s),
                det("stance_pos_min", P, Min, 0.0, s),
                det("swing_vel_max", V, Max, s, 100.0),
                det("swing_pos_max", P, Max, s, 100.0),
                det("terminal_vel_min", V, Min, 85.0, 100.0),
            ],
        },
        KeyEventTemplate {
            channel: JointChannel::KneeFlexExt,
            detectors: vec![
                hs(),
                det("stance_pos_max", P, Max, 0.0, s),
                det("stance_vel_min", V, Min, 0.0, s),
                det("pos_min", P, Min, 0.0, 100.0),
                det("swing_pos_max", P, Max, s, 100.0),
                det("swing_vel_min", V, Min, s, 100.0),
            ],
        },
        KeyEventTemplate {
            channel: JointChannel::PelvisLateral,
            detectors: vec![
                det("pos_max", P, Max, 0.0, 100.0),
                det("pos_min", P, Min, 0.0, 100.0),
                det("vel_max", V, Max, 0.0, 100.0),
                det("vel_min", V, Min, 0.0, 100.0),
            ],
        },
    ];
    templates.into_iter().map(|t| (t.channel, t)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    #[serde(rename = "template")]
    templates: Vec<KeyEventTemplate>,
}

/// Parses a template file and checks that every channel is covered.
pub fn templates_from_toml(text: &str) -> Result<Templates> {
    let file: TemplateFile =
        toml::from_str(text).map_err(|e| GaitError::Config(format!("templates: {e}")))?;
    let mut out = Templates::new();
    for t in file.templates {
        t.validate()?;
        if out.insert(t.channel, t.clone()).is_some() {
            return Err(GaitError::Config(format!("templates: {} defined twice", t.channel)));
        }
    }
    if let Some(missing) = JointChannel::ALL.iter().find(|c| !out.contains_key(c)) {
        return Err(GaitError::Config(format!("templates: no template for {missing}")));
    }
    Ok(out)
}

pub fn load_templates(path: &Path) -> Result<Templates> {
    let text =
        std::fs::read_to_string(path).map_err(|_| GaitError::MissingFile(path.to_path_buf()))?;
    templates_from_toml(&text)
}

pub fn templates_to_toml(templates: &Templates) -> String {
    let file = TemplateFile {
        templates: templates.values().cloned().collect(),
    };
    toml::to_string(&file).expect("templates serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEvent {
    /// % of cycle, in [0, 100).
    pub t: f64,
    /// deg or mm.
    pub y: f64,
    /// unit/s.
    pub ydot: f64,
    /// unit/s².
    pub yddot: f64,
    pub detector_id: String,
}

impl KeyEvent {
    pub fn get(&self, p: Parameter) -> f64 {
        match p {
            Parameter::T => self.t,
            Parameter::Y => self.y,
            Parameter::Ydot => self.ydot,
            Parameter::Yddot => self.yddot,
        }
    }

    pub fn set(&mut self, p: Parameter, value: f64) {
        match p {
            Parameter::T => self.t = value,
            Parameter::Y => self.y = value,
            Parameter::Ydot => self.ydot = value,
            Parameter::Yddot => self.yddot = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEventSet {
    pub channel: JointChannel,
    pub side: Side,
    /// Sorted by `t`.
    pub events: Vec<KeyEvent>,
    /// Seconds.
    pub cycle_time: f64,
}

impl KeyEventSet {
    pub fn event(&self, detector_id: &str) -> Option<&KeyEvent> {
        self.events.iter().find(|e| e.detector_id == detector_id)
    }

    /// Checks ordering, the 1 % spacing (wrap included) and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(GaitError::EmptyInput(format!("{}: no events", self.channel)));
        }
        if !(self.cycle_time > 0.0 && self.cycle_time.is_finite()) {
            return Err(GaitError::InvariantViolation(format!(
                "{}: cycle time {} s must be positive",
                self.channel, self.cycle_time
            )));
        }
        for e in &self.events {
            if !(0.0..100.0).contains(&e.t) || ![e.y, e.ydot, e.yddot].iter().all(|v| v.is_finite()) {
                return Err(GaitError::InvariantViolation(format!(
                    "{}: event {} has t={} y={} ydot={} yddot={}",
                    self.channel, e.detector_id, e.t, e.y, e.ydot, e.yddot
                )));
            }
        }
        check_separation(self.channel, &self.events)
    }
}

/// Fails with `OrderingViolation` unless sorted events are at least 1 % apart, wrap included.
pub fn check_separation(channel: JointChannel, events: &[KeyEvent]) -> Result<()> {
    let n = events.len();
    for k in 0..n {
        let a = &events[k];
        let b = &events[(k + 1) % n];
        let gap = if k + 1 < n { b.t - a.t } else { b.t + 100.0 - a.t };
        if n > 1 && gap < MIN_EVENT_SEPARATION - 1e-9 {
            return Err(GaitError::OrderingViolation(format!(
                "{channel}: events {} at {:.3}% and {} at {:.3}% are {gap:.3}% apart",
                a.detector_id, a.t, b.detector_id, b.t
            )));
        }
    }
    Ok(())
}

/// Periodic fourth-order central differences of a cycle, in unit/s and unit/s².
///
/// The returned series have the cycle's length; the last sample repeats the first.
pub fn differentiate_cycle(c: &GaitCycle, cycle_time: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    c.validate()?;
    if !(cycle_time > 0.0 && cycle_time.is_finite()) {
        return Err(GaitError::InvariantViolation(format!(
            "cycle time {cycle_time} s must be positive"
        )));
    }
    Ok(differentiate_periodic(&c.samples[..c.samples.len() - 1], cycle_time))
}

fn differentiate_periodic(f: &[f64], cycle_time: f64) -> (Vec<f64>, Vec<f64>) {
    let m = f.len();
    // Grid step in seconds.
    let h = cycle_time / m as f64;
    let at = |i: usize, k: isize| f[(i as isize + k).rem_euclid(m as isize) as usize];
    let mut vel: Vec<f64> = (0..m)
        .map(|i| (-at(i, 2) + 8.0 * at(i, 1) - 8.0 * at(i, -1) + at(i, -2)) / (12.0 * h))
        .collect();
    let mut acc: Vec<f64> = (0..m)
        .map(|i| {
            (-at(i, 2) + 16.0 * at(i, 1) - 30.0 * at(i, 0) + 16.0 * at(i, -1) - at(i, -2))
                / (12.0 * h * h)
        })
        .collect();
    vel.push(vel[0]);
    acc.push(acc[0]);
    (vel, acc)
}

/// A periodic signal that events can be extracted from.
pub trait Waveform {
    fn cycle_time(&self) -> f64;
    /// Number of uniformly spaced scan points per cycle.
    fn scan_len(&self) -> usize;
    /// Value of `signal` at scan point `i`.
    fn scan_value(&self, signal: Signal, i: usize) -> f64;
    /// Position, velocity (unit/s) and acceleration (unit/s²) at `t` %.
    fn state(&self, t: f64) -> [f64; 3];

    /// Sub-sample location (%) of the extremum of `signal` found at scan
    /// point `i`. Defaults to the vertex of the parabola through `i - 1`,
    /// `i`, `i + 1`.
    fn refine(&self, signal: Signal, i: usize) -> f64 {
        let m = self.scan_len();
        let a = self.scan_value(signal, (i + m - 1) % m);
        let b = self.scan_value(signal, i);
        let c = self.scan_value(signal, (i + 1) % m);
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > f64::EPSILON * (a.abs() + b.abs() + c.abs()) {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        ((i as f64 + delta) * 100.0 / m as f64).rem_euclid(100.0)
    }
}

/// A grid-sampled cycle with its finite-difference derivatives, interpolated
/// between grid points by periodic cubics.
#[derive(Debug, Clone)]
pub struct SampledWaveform {
    cycle_time: f64,
    series: [Vec<f64>; 3],
    interp: [PeriodicCubic; 3],
}

impl SampledWaveform {
    pub fn new(c: &GaitCycle, cycle_time: f64) -> Result<SampledWaveform> {
        let (vel, acc) = differentiate_cycle(c, cycle_time)?;
        let m = c.samples.len() - 1;
        let series = [c.samples[..m].to_vec(), vel[..m].to_vec(), acc[..m].to_vec()];
        let interp = [
            PeriodicCubic::new(&series[0])?,
            PeriodicCubic::new(&series[1])?,
            PeriodicCubic::new(&series[2])?,
        ];
        Ok(SampledWaveform {
            cycle_time,
            series,
            interp,
        })
    }
}

impl Waveform for SampledWaveform {
    fn cycle_time(&self) -> f64 {
        self.cycle_time
    }

    fn scan_len(&self) -> usize {
        self.series[0].len()
    }

    fn scan_value(&self, signal: Signal, i: usize) -> f64 {
        match signal {
            Signal::Position => self.series[0][i],
            Signal::Velocity => self.series[1][i],
        }
    }

    fn state(&self, t: f64) -> [f64; 3] {
        let u = t * self.scan_len() as f64 / 100.0;
        [self.interp[0].eval(u), self.interp[1].eval(u), self.interp[2].eval(u)]
    }
}

/// Applies one detector to a waveform. The returned event carries the
/// refined, unconstrained derivatives; constraints are applied by
/// [`extract_events_from`].
pub fn detect<W: Waveform + ?Sized>(w: &W, d: &EventDetector) -> Result<KeyEvent> {
    let t = match (d.pinned_time, d.extremum) {
        (Some(t), _) => t,
        (None, Some(extremum)) => {
            let i = locate_extremum(w, d.signal, extremum, d.window).ok_or_else(|| {
                GaitError::NoExtremumInWindow {
                    detector: d.id.clone(),
                    what: format!(
                        "{} {}",
                        match d.signal {
                            Signal::Position => "position",
                            Signal::Velocity => "velocity",
                        },
                        match extremum {
                            Extremum::Max => "maximum",
                            Extremum::Min => "minimum",
                        }
                    ),
                    lo: d.window[0],
                    hi: d.window[1],
                }
            })?;
            w.refine(d.signal, i)
        }
        (None, None) => return Err(GaitError::Config(format!("detector {} has no target", d.id))),
    };
    let [y, ydot, yddot] = w.state(t);
    Ok(KeyEvent {
        t,
        y,
        ydot,
        yddot,
        detector_id: d.id.clone(),
    })
}

/// Scan index of the strongest local extremum inside the window, judged
/// against periodic neighbours.
fn locate_extremum<W: Waveform + ?Sized>(
    w: &W,
    signal: Signal,
    extremum: Extremum,
    [lo, hi]: [f64; 2],
) -> Option<usize> {
    let m = w.scan_len();
    let sign = extremum.sign();
    let value = |i: usize| sign * w.scan_value(signal, i % m);
    let mut best: Option<(usize, f64)> = None;
    for i in 0..m {
        let t = 100.0 * i as f64 / m as f64;
        if t < lo - 1e-9 || t > hi + 1e-9 {
            continue;
        }
        let v = value(i);
        if v > value(i + m - 1) && v >= value(i + 1) && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Runs every detector of the template and returns the events sorted by time.
pub fn extract_events_from<W: Waveform + ?Sized>(
    w: &W,
    channel: JointChannel,
    side: Side,
    tmpl: &KeyEventTemplate,
) -> Result<KeyEventSet> {
    if tmpl.channel != channel {
        return Err(GaitError::Config(format!(
            "template for {} applied to {channel}",
            tmpl.channel
        )));
    }
    let mut events = Vec::with_capacity(tmpl.detectors.len());
    for d in &tmpl.detectors {
        let mut e = detect(w, d)?;
        match d.constraint {
            DerivativeConstraint::None => {}
            DerivativeConstraint::VelocityZero => e.ydot = 0.0,
            DerivativeConstraint::AccelerationZero => e.yddot = 0.0,
        }
        events.push(e);
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    check_separation(channel, &events)?;
    Ok(KeyEventSet {
        channel,
        side,
        events,
        cycle_time: w.cycle_time(),
    })
}

/// Extracts the template's events from a grid-sampled cycle.
pub fn extract_events(c: &GaitCycle, tmpl: &KeyEventTemplate, cycle_time: f64) -> Result<KeyEventSet> {
    let w = SampledWaveform::new(c, cycle_time)?;
    extract_events_from(&w, c.channel, c.side, tmpl)
}
