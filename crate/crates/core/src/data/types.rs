use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use exo_kinematics::Side;

use crate::error::{GaitError, Result};

/// Default number of samples over one gait cycle, 0..=100 % inclusive.
pub const DEFAULT_GRID_SIZE: usize = 101;
pub const MIN_GRID_SIZE: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    /// Regression coding: female −1, male +1.
    pub fn code(self) -> f64 {
        match self {
            Gender::Female => -1.0,
            Gender::Male => 1.0,
        }
    }
}

impl FromStr for Gender {
    type Err = GaitError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" | "-1" => Ok(Gender::Female),
            "m" | "male" | "1" | "+1" => Ok(Gender::Male),
            other => Err(GaitError::Config(format!("unknown gender {other:?}"))),
        }
    }
}

/// Anthropometric and demographic record of one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    /// Years.
    pub age: f64,
    /// Meters.
    pub height: f64,
    /// Kilograms.
    pub mass: f64,
    pub gender: Gender,
    /// Comfortable walking speed, km/h.
    pub self_selected_speed: f64,
}

impl Subject {
    pub fn validate(&self) -> Result<()> {
        let fail = |what: String| {
            Err(GaitError::InvariantViolation(format!(
                "subject {}: {what}",
                self.id
            )))
        };
        if !(self.age > 0.0 && self.age.is_finite()) {
            return fail(format!("age {} must be positive", self.age));
        }
        if !(self.height > 1.0 && self.height < 2.5) {
            return fail(format!("height {} m outside (1.0, 2.5)", self.height));
        }
        if !(self.mass > 20.0 && self.mass < 200.0) {
            return fail(format!("mass {} kg outside (20, 200)", self.mass));
        }
        if !(self.self_selected_speed > 0.0 && self.self_selected_speed.is_finite()) {
            return fail(format!(
                "self-selected speed {} km/h must be positive",
                self.self_selected_speed
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointChannel {
    HipAbAd,
    HipFlexExt,
    KneeFlexExt,
    PelvisLateral,
}

impl JointChannel {
    pub const ALL: [JointChannel; 4] = [
        JointChannel::HipAbAd,
        JointChannel::HipFlexExt,
        JointChannel::KneeFlexExt,
        JointChannel::PelvisLateral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JointChannel::HipAbAd => "hip_ab_ad",
            JointChannel::HipFlexExt => "hip_flex_ext",
            JointChannel::KneeFlexExt => "knee_flex_ext",
            JointChannel::PelvisLateral => "pelvis_lateral",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            JointChannel::PelvisLateral => "mm",
            _ => "deg",
        }
    }

    /// Row label in the human-readable report.
    pub fn label(self) -> &'static str {
        match self {
            JointChannel::HipAbAd => "Hip abd/add (deg)",
            JointChannel::HipFlexExt => "Hip flex/ext (deg)",
            JointChannel::KneeFlexExt => "Knee flex/ext (deg)",
            JointChannel::PelvisLateral => "Pelvis lateral (mm)",
        }
    }

    /// Frontal-plane channels whose left-side signals are sign-flipped into
    /// the right-side convention before pooling.
    pub fn mirrors_on_left(self) -> bool {
        matches!(self, JointChannel::HipAbAd | JointChannel::PelvisLateral)
    }

    /// Hip and knee cycles start with a pinned heel-strike event.
    pub fn has_heel_strike_event(self) -> bool {
        !matches!(self, JointChannel::PelvisLateral)
    }
}

impl fmt::Display for JointChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointChannel {
    type Err = GaitError;

    fn from_str(s: &str) -> Result<Self> {
        JointChannel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| GaitError::Config(format!("unknown channel {s:?}")))
    }
}

pub fn parse_side(s: &str) -> Result<Side> {
    match s.trim().to_ascii_lowercase().as_str() {
        "l" | "left" => Ok(Side::Left),
        "r" | "right" => Ok(Side::Right),
        other => Err(GaitError::Config(format!("unknown side {other:?}"))),
    }
}

pub fn side_name(side: Side) -> &'static str {
    match side {
        Side::Left => "left",
        Side::Right => "right",
    }
}

/// The three treadmill speed levels used for training, as fractions of the
/// self-selected speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeedLevel {
    L1,
    L2,
    L3,
}

impl SpeedLevel {
    pub const ALL: [SpeedLevel; 3] = [SpeedLevel::L1, SpeedLevel::L2, SpeedLevel::L3];

    pub fn percent(self) -> u16 {
        match self {
            SpeedLevel::L1 => 40,
            SpeedLevel::L2 => 55,
            SpeedLevel::L3 => 70,
        }
    }

    pub fn from_percent(percent: u16) -> Option<SpeedLevel> {
        SpeedLevel::ALL.into_iter().find(|l| l.percent() == percent)
    }
}

impl fmt::Display for SpeedLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpeedLevel::L1 => "L1",
            SpeedLevel::L2 => "L2",
            SpeedLevel::L3 => "L3",
        };
        f.write_str(s)
    }
}

/// Label of a trial's speed in exported files: `L1`..`L3` for the training
/// levels, `P<percent>` otherwise.
pub fn speed_label(percent: u16) -> String {
    match SpeedLevel::from_percent(percent) {
        Some(level) => level.to_string(),
        None => format!("P{percent}"),
    }
}

pub fn parse_speed_label(s: &str) -> Result<u16> {
    match s {
        "L1" => Ok(40),
        "L2" => Ok(55),
        "L3" => Ok(70),
        _ => s
            .strip_prefix('P')
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| GaitError::Config(format!("bad speed level label {s:?}"))),
    }
}

/// Relative tolerance between a cycle's speed and its nominal level speed.
pub const SPEED_BAND: f64 = 0.10;

/// Percent of the gait cycle at grid index `i`.
pub fn grid_percent(i: usize, grid_size: usize) -> f64 {
    100.0 * i as f64 / (grid_size - 1) as f64
}

/// One time-normalized cycle of one channel for one side at one speed.
///
/// `samples` cover 0..=100 % inclusive; sample 0 is heel strike and the last
/// sample is the start of the next cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitCycle {
    pub subject_id: String,
    pub channel: JointChannel,
    pub side: Side,
    /// Treadmill speed as a percentage of the self-selected speed.
    pub percent: u16,
    /// km/h.
    pub speed: f64,
    /// Seconds.
    pub cycle_time: f64,
    pub samples: Vec<f64>,
}

impl GaitCycle {
    pub fn level(&self) -> Option<SpeedLevel> {
        SpeedLevel::from_percent(self.percent)
    }

    pub fn grid_size(&self) -> usize {
        self.samples.len()
    }

    pub fn validate(&self) -> Result<()> {
        let what = || {
            format!(
                "{}/{}/{}/{}",
                self.subject_id,
                self.channel,
                side_name(self.side),
                speed_label(self.percent)
            )
        };
        if self.samples.len() < MIN_GRID_SIZE {
            return Err(GaitError::InvariantViolation(format!(
                "{}: {} samples, need at least {MIN_GRID_SIZE}",
                what(),
                self.samples.len()
            )));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(GaitError::InvariantViolation(format!(
                "{}: non-finite sample at index {i}",
                what()
            )));
        }
        if !(self.cycle_time > 0.0 && self.cycle_time.is_finite()) {
            return Err(GaitError::InvariantViolation(format!(
                "{}: cycle time {} s must be positive",
                what(),
                self.cycle_time
            )));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(GaitError::InvariantViolation(format!(
                "{}: speed {} km/h must be positive",
                what(),
                self.speed
            )));
        }
        Ok(())
    }

    /// The same cycle expressed in the right-side sign convention.
    pub fn in_right_convention(&self) -> GaitCycle {
        if self.side == Side::Left && self.channel.mirrors_on_left() {
            self.negated()
        } else {
            self.clone()
        }
    }

    pub fn negated(&self) -> GaitCycle {
        GaitCycle {
            samples: self.samples.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub cycles: Vec<GaitCycle>,
    pub grid_size: usize,
}

impl Dataset {
    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.id == id)
    }

    /// Checks every invariant of the dataset and of its members.
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < MIN_GRID_SIZE {
            return Err(GaitError::InvariantViolation(format!(
                "grid size {} below {MIN_GRID_SIZE}",
                self.grid_size
            )));
        }
        let mut ids = BTreeSet::new();
        for s in &self.subjects {
            s.validate()?;
            if !ids.insert(s.id.as_str()) {
                return Err(GaitError::InvariantViolation(format!(
                    "duplicate subject id {}",
                    s.id
                )));
            }
        }
        let mut channels: BTreeMap<(&str, u16), BTreeSet<JointChannel>> = BTreeMap::new();
        for c in &self.cycles {
            c.validate()?;
            let Some(subject) = self.subject(&c.subject_id) else {
                return Err(GaitError::InvariantViolation(format!(
                    "cycle references unknown subject {}",
                    c.subject_id
                )));
            };
            if c.samples.len() != self.grid_size {
                return Err(GaitError::InvariantViolation(format!(
                    "{}/{}: {} samples, dataset grid is {}",
                    c.subject_id,
                    c.channel,
                    c.samples.len(),
                    self.grid_size
                )));
            }
            let nominal = subject.self_selected_speed * c.percent as f64 / 100.0;
            if (c.speed - nominal).abs() > SPEED_BAND * nominal {
                return Err(GaitError::InvariantViolation(format!(
                    "{}/{}/{}: speed {:.3} km/h outside the band of {:.3} km/h",
                    c.subject_id,
                    c.channel,
                    speed_label(c.percent),
                    c.speed,
                    nominal
                )));
            }
            channels
                .entry((c.subject_id.as_str(), c.percent))
                .or_default()
                .insert(c.channel);
        }
        for ((subject, percent), present) in &channels {
            if let Some(missing) = JointChannel::ALL.iter().find(|c| !present.contains(c)) {
                return Err(GaitError::InvariantViolation(format!(
                    "subject {subject} at {}: channel {missing} missing",
                    speed_label(*percent)
                )));
            }
        }
        Ok(())
    }

    /// Subject ids that have at least one cycle, in sorted order.
    pub fn subject_ids_with_cycles(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.cycles.iter().map(|c| c.subject_id.as_str()).collect();
        ids.into_iter().map(String::from).collect()
    }

    pub fn cycles_of<'a>(&'a self, subject_id: &'a str) -> impl Iterator<Item = &'a GaitCycle> + 'a {
        self.cycles.iter().filter(move |c| c.subject_id == subject_id)
    }

    /// A dataset restricted to the subjects accepted by `keep`.
    pub fn filter_subjects(&self, keep: impl Fn(&str) -> bool) -> Dataset {
        Dataset {
            subjects: self.subjects.iter().filter(|s| keep(&s.id)).cloned().collect(),
            cycles: self
                .cycles
                .iter()
                .filter(|c| keep(&c.subject_id))
                .cloned()
                .collect(),
            grid_size: self.grid_size,
        }
    }
}
