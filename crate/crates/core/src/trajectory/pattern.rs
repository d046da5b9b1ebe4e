//! Gait patterns: per-channel periodic trajectories with a cycle time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ops::ensemble_average;
use crate::data::resample::PeriodicCubic;
use crate::data::types::{Dataset, GaitCycle, JointChannel, Side, SpeedLevel, Subject};
use crate::error::{GaitError, Result};
use crate::regression::bank::{predict_events, ModelBank};
use crate::regression::cycle_time::predict_cycle_time_standard;
use crate::trajectory::spline::{build_spline, TrajectorySpline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Personalized,
    Standard,
    Random,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Personalized => "personalized",
            PatternKind::Standard => "standard",
            PatternKind::Random => "random",
        })
    }
}

/// An averaged cycle on the %-grid, interpolated periodically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct SampledTrajectory {
    /// Grid values over 0..=100 %, last sample repeating the first.
    pub samples: Vec<f64>,
    interp: PeriodicCubic,
}

impl SampledTrajectory {
    pub fn new(samples: Vec<f64>) -> Result<SampledTrajectory> {
        let interp = PeriodicCubic::new(&samples[..samples.len().saturating_sub(1)])?;
        Ok(SampledTrajectory { samples, interp })
    }

    /// Position, velocity and acceleration at `t` % for a cycle of `cycle_time` s.
    pub fn eval(&self, t: f64, cycle_time: f64) -> [f64; 3] {
        let m = self.interp.period() as f64;
        let [y, dy, ddy] = self.interp.eval_derivs(t * m / 100.0);
        let rate = m / cycle_time;
        [y, dy * rate, ddy * rate * rate]
    }
}

impl From<SampledTrajectory> for Vec<f64> {
    fn from(s: SampledTrajectory) -> Vec<f64> {
        s.samples
    }
}

impl TryFrom<Vec<f64>> for SampledTrajectory {
    type Error = GaitError;

    fn try_from(samples: Vec<f64>) -> Result<SampledTrajectory> {
        SampledTrajectory::new(samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelTrajectory {
    Spline(TrajectorySpline),
    Sampled(SampledTrajectory),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitPattern {
    pub kind: PatternKind,
    /// Seconds.
    pub cycle_time: f64,
    /// km/h.
    pub speed: f64,
    /// Short digest identifying the source subject(s).
    pub subject_hash: String,
    pub channels: BTreeMap<JointChannel, ChannelTrajectory>,
}

impl GaitPattern {
    /// Position, velocity (unit/s) and acceleration (unit/s²) at `t` %.
    pub fn eval(&self, channel: JointChannel, t: f64) -> Result<[f64; 3]> {
        match self.channels.get(&channel) {
            Some(ChannelTrajectory::Spline(s)) => Ok(s.with_cycle_time(self.cycle_time).eval(t)),
            Some(ChannelTrajectory::Sampled(s)) => Ok(s.eval(t, self.cycle_time)),
            None => Err(GaitError::EmptyChannel(channel.to_string())),
        }
    }

    /// Positions on a grid of `n` points over 0..=100 %.
    pub fn grid(&self, channel: JointChannel, n: usize) -> Result<Vec<f64>> {
        (0..n)
            .map(|i| Ok(self.eval(channel, 100.0 * i as f64 / (n - 1) as f64)?[0]))
            .collect()
    }

    /// The same pattern played back over another cycle time.
    pub fn with_cycle_time(&self, cycle_time: f64) -> GaitPattern {
        GaitPattern {
            cycle_time,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pattern serializes")
    }

    pub fn from_json(text: &str) -> Result<GaitPattern> {
        let p: GaitPattern = serde_json::from_str(text).map_err(|e| GaitError::schema("pattern", e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| GaitError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<GaitPattern> {
        let text = std::fs::read_to_string(path).map_err(|_| GaitError::MissingFile(path.to_path_buf()))?;
        GaitPattern::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(missing) = JointChannel::ALL.iter().find(|c| !self.channels.contains_key(c)) {
            return Err(GaitError::EmptyChannel(missing.to_string()));
        }
        if !(self.cycle_time > 0.0 && self.cycle_time.is_finite()) {
            return Err(GaitError::InvariantViolation(format!(
                "pattern cycle time {} s must be positive",
                self.cycle_time
            )));
        }
        Ok(())
    }
}

pub fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn subject_digest(subject: &Subject) -> String {
    digest(&serde_json::to_string(&(
        &subject.age,
        &subject.height,
        &subject.mass,
        subject.gender.code(),
    ))
    .expect("subject serializes"))
}

/// Predicted events turned into splines; the cycle time comes from speed and age.
pub fn generate_personalized(bank: &ModelBank, subject: &Subject, v: f64) -> Result<GaitPattern> {
    let events = predict_events(bank, subject, v)?;
    let mut channels = BTreeMap::new();
    let mut cycle_time = 0.0;
    for (channel, set) in events {
        cycle_time = set.cycle_time;
        channels.insert(channel, ChannelTrajectory::Spline(build_spline(&set)?));
    }
    let pattern = GaitPattern {
        kind: PatternKind::Personalized,
        cycle_time,
        speed: v,
        subject_hash: subject_digest(subject),
        channels,
    };
    pattern.validate()?;
    Ok(pattern)
}

/// Cycles of the training levels in the right-side convention, relabelled
/// as right so sides can be pooled.
fn pooled(cycles: impl Iterator<Item = GaitCycle>) -> Vec<GaitCycle> {
    cycles
        .filter(|c| c.level().is_some())
        .map(|c| GaitCycle {
            side: Side::Right,
            ..c.in_right_convention()
        })
        .collect()
}

fn average_channels(cycles: &[GaitCycle], what: &str) -> Result<BTreeMap<JointChannel, ChannelTrajectory>> {
    let mut channels = BTreeMap::new();
    for channel in JointChannel::ALL {
        let subset: Vec<GaitCycle> = cycles.iter().filter(|c| c.channel == channel).cloned().collect();
        if subset.is_empty() {
            return Err(GaitError::EmptyInput(format!("{what}: no {channel} cycles")));
        }
        let avg = ensemble_average(&subset)?;
        channels.insert(channel, ChannelTrajectory::Sampled(SampledTrajectory::new(avg.samples)?));
    }
    Ok(channels)
}

/// Pointwise average over every subject, level and side (left frontal-plane
/// channels mirrored); the cycle time comes from speed and height.
pub fn generate_standard(ds: &Dataset, v: f64, height: f64) -> Result<GaitPattern> {
    let cycles = pooled(ds.cycles.iter().cloned());
    let channels = average_channels(&cycles, "standard pattern")?;
    let ids: BTreeSet<&str> = cycles.iter().map(|c| c.subject_id.as_str()).collect();
    let pattern = GaitPattern {
        kind: PatternKind::Standard,
        cycle_time: predict_cycle_time_standard(v, height)?,
        speed: v,
        subject_hash: digest(&ids.into_iter().collect::<Vec<_>>().join(",")),
        channels,
    };
    pattern.validate()?;
    Ok(pattern)
}

/// Subject drawn uniformly, under `seed`, among those with cycles at `level`.
pub fn random_subject(ds: &Dataset, level: SpeedLevel, seed: u64) -> Result<String> {
    let ids: BTreeSet<&str> = ds
        .cycles
        .iter()
        .filter(|c| c.level() == Some(level))
        .map(|c| c.subject_id.as_str())
        .collect();
    if ids.is_empty() {
        return Err(GaitError::EmptyInput(format!("no subject has cycles at {level}")));
    }
    let ids: Vec<&str> = ids.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ids[rng.random_range(0..ids.len())].to_string())
}

/// One randomly drawn subject's recorded pattern at `level`, both sides
/// averaged, with that subject's mean cycle time and speed.
pub fn pick_random_pattern(ds: &Dataset, level: SpeedLevel, seed: u64) -> Result<GaitPattern> {
    let id = random_subject(ds, level, seed)?;
    let cycles = pooled(ds.cycles_of(&id).filter(|c| c.level() == Some(level)).cloned());
    let n = cycles.len() as f64;
    let pattern = GaitPattern {
        kind: PatternKind::Random,
        cycle_time: cycles.iter().map(|c| c.cycle_time).sum::<f64>() / n,
        speed: cycles.iter().map(|c| c.speed).sum::<f64>() / n,
        subject_hash: digest(&id),
        channels: average_channels(&cycles, &format!("subject {id}"))?,
    };
    pattern.validate()?;
    Ok(pattern)
}

/// A pattern evaluated at uniform real-time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    /// Seconds.
    pub time: Vec<f64>,
    /// Position, velocity and acceleration series per channel.
    pub channels: BTreeMap<JointChannel, [Vec<f64>; 3]>,
}

/// Evaluates the pattern at `t = k·dt` for `n_cycles` cycles.
pub fn sample_pattern(p: &GaitPattern, dt: f64, n_cycles: usize) -> Result<SampledSeries> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GaitError::Config(format!("time step {dt} s must be positive")));
    }
    let n = (n_cycles as f64 * p.cycle_time / dt + 1e-9).round() as usize;
    let time: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let mut channels = BTreeMap::new();
    for &channel in p.channels.keys() {
        let mut series = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for &t in &time {
            let s = p.eval(channel, 100.0 * t / p.cycle_time)?;
            for (out, v) in series.iter_mut().zip(s) {
                out.push(v);
            }
        }
        channels.insert(channel, series);
    }
    Ok(SampledSeries { time, channels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::Gender;
    use std::f64::consts::TAU;

    fn dataset(subjects: &[(&str, f64)]) -> Dataset {
        let mut cycles = Vec::new();
        let mut subs = Vec::new();
        for &(id, amp) in subjects {
            subs.push(Subject {
                id: id.into(),
                age: 30.0,
                height: 1.7,
                mass: 70.0,
                gender: Gender::Male,
                self_selected_speed: 4.0,
            });
            for level in SpeedLevel::ALL {
                for side in [Side::Left, Side::Right] {
                    for channel in JointChannel::ALL {
                        let sign = if side == Side::Left && channel.mirrors_on_left() { -1.0 } else { 1.0 };
                        cycles.push(GaitCycle {
                            subject_id: id.into(),
                            channel,
                            side,
                            percent: level.percent(),
                            speed: 4.0 * level.percent() as f64 / 100.0,
                            cycle_time: 1.2,
                            samples: (0..101).map(|i| sign * amp * (TAU * i as f64 / 100.0).sin()).collect(),
                        });
                    }
                }
            }
        }
        Dataset {
            subjects: subs,
            cycles,
            grid_size: 101,
        }
    }

    #[test]
    fn standard_of_identical_cycles_is_that_cycle() {
        let ds = dataset(&[("a", 10.0)]);
        let p = generate_standard(&ds, 1.8, 1.7).unwrap();
        for channel in JointChannel::ALL {
            let g = p.grid(channel, 101).unwrap();
            for (i, v) in g.iter().enumerate() {
                assert!((v - 10.0 * (TAU * i as f64 / 100.0).sin()).abs() < 1e-9);
            }
        }
        assert!((p.cycle_time - 1.579076).abs() < 1e-9);
    }

    #[test]
    fn mirrored_pelvis_flips_standard() {
        let ds = dataset(&[("a", 10.0), ("b", 6.0)]);
        let mut flipped = ds.clone();
        for c in flipped.cycles.iter_mut().filter(|c| c.channel == JointChannel::PelvisLateral) {
            *c = c.negated();
        }
        let a = generate_standard(&ds, 1.8, 1.7).unwrap();
        let b = generate_standard(&flipped, 1.8, 1.7).unwrap();
        let ga = a.grid(JointChannel::PelvisLateral, 101).unwrap();
        let gb = b.grid(JointChannel::PelvisLateral, 101).unwrap();
        assert!(ga.iter().zip(&gb).all(|(x, y)| (x + y).abs() < 1e-12));
        assert_eq!(
            a.grid(JointChannel::KneeFlexExt, 101).unwrap(),
            b.grid(JointChannel::KneeFlexExt, 101).unwrap()
        );
    }

    #[test]
    fn random_pick_is_deterministic() {
        let ds = dataset(&[("a", 10.0), ("b", 6.0), ("c", 3.0)]);
        let p1 = pick_random_pattern(&ds, SpeedLevel::L1, 7).unwrap();
        let p2 = pick_random_pattern(&ds, SpeedLevel::L1, 7).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.kind, PatternKind::Random);
        let single = dataset(&[("only", 2.0)]);
        assert_eq!(random_subject(&single, SpeedLevel::L2, 99).unwrap(), "only");
        let empty = single.filter_subjects(|_| false);
        assert!(matches!(random_subject(&empty, SpeedLevel::L1, 0), Err(GaitError::EmptyInput(_))));
    }

    #[test]
    fn sampled_trajectory_derivatives() {
        let ds = dataset(&[("a", 10.0)]);
        let p = pick_random_pattern(&ds, SpeedLevel::L1, 0).unwrap();
        let [_, v, _] = p.eval(JointChannel::KneeFlexExt, 0.0).unwrap();
        let expected = 10.0 * TAU / p.cycle_time;
        assert!((v - expected).abs() < 1e-3 * expected, "{v} vs {expected}");
    }

    #[test]
    fn sampling_counts_and_times() {
        let ds = dataset(&[("a", 10.0)]);
        let p = generate_standard(&ds, 1.8, 1.7).unwrap();
        let s = sample_pattern(&p, 0.01, 2).unwrap();
        assert_eq!(s.time.len(), (2.0 * p.cycle_time / 0.01_f64).round() as usize);
        assert_eq!(s.channels.len(), 4);
        assert!(sample_pattern(&p, 0.0, 1).is_err());
    }
}
