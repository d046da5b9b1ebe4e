//! Pelvis lateral displacement from raw marker trajectories.

use std::collections::BTreeMap;

use crate::data::ops::ensemble_average;
use crate::data::resample::resample_cycle;
use crate::data::types::{GaitCycle, JointChannel, Side};
use crate::error::{GaitError, Result};

pub const MIN_STRIDES: usize = 3;

/// Marker positions of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTrace {
    pub subject_id: String,
    pub percent: u16,
    /// km/h.
    pub speed: f64,
    /// Hz.
    pub sample_rate: f64,
    /// Marker label → positions (mm), one per frame.
    pub markers: BTreeMap<String, Vec<[f64; 3]>>,
    /// Frame indices of heel strikes per side, strictly increasing.
    pub heel_strikes: BTreeMap<Side, Vec<usize>>,
    /// Markers whose centroid tracks the pelvis.
    pub pelvis_markers: Vec<String>,
    /// Index of the medio-lateral axis (0 = x, 1 = y, 2 = z).
    pub lateral_axis: usize,
}

impl MarkerTrace {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(GaitError::InvariantViolation(format!(
                "{}: sample rate {} Hz must be positive",
                self.subject_id, self.sample_rate
            )));
        }
        if self.lateral_axis > 2 {
            return Err(GaitError::Config(format!("lateral axis {} out of range", self.lateral_axis)));
        }
        for (side, events) in &self.heel_strikes {
            if events.windows(2).any(|w| w[1] <= w[0]) {
                return Err(GaitError::InvariantViolation(format!(
                    "{}: {side:?} heel strikes not strictly increasing",
                    self.subject_id
                )));
            }
        }
        Ok(())
    }
}

/// Segments the lateral pelvis-centroid trace at each side's heel strikes,
/// removes each stride's mean, time-normalizes to `grid_size` samples, and
/// averages the strides into one cycle per side.
pub fn derive_pelvis_lateral(trace: &MarkerTrace, grid_size: usize) -> Result<Vec<GaitCycle>> {
    trace.validate()?;
    let present: Vec<&Vec<[f64; 3]>> = trace
        .pelvis_markers
        .iter()
        .filter_map(|label| trace.markers.get(label))
        .collect();
    if present.is_empty() {
        return Err(GaitError::MissingMarker(format!(
            "{}: none of the pelvis markers {:?} present",
            trace.subject_id, trace.pelvis_markers
        )));
    }
    let frames = present.iter().map(|m| m.len()).min().unwrap_or(0);
    let axis = trace.lateral_axis;
    let lateral: Vec<f64> = (0..frames)
        .map(|f| present.iter().map(|m| m[f][axis]).sum::<f64>() / present.len() as f64)
        .collect();

    let mut out = Vec::new();
    for (&side, events) in &trace.heel_strikes {
        let strides: Vec<(usize, usize)> = events
            .windows(2)
            .map(|w| (w[0], w[1]))
            .filter(|&(_, end)| end < frames)
            .collect();
        if strides.len() < MIN_STRIDES {
            return Err(GaitError::InsufficientCycles(format!(
                "{}: {} complete {side:?} strides, need {MIN_STRIDES}",
                trace.subject_id,
                strides.len()
            )));
        }
        let mut cycles = Vec::with_capacity(strides.len());
        for (start, end) in strides {
            let segment = &lateral[start..=end];
            let mean = segment[..segment.len() - 1].iter().sum::<f64>() / (segment.len() - 1) as f64;
            let centered: Vec<f64> = segment.iter().map(|v| v - mean).collect();
            cycles.push(GaitCycle {
                subject_id: trace.subject_id.clone(),
                channel: JointChannel::PelvisLateral,
                side,
                percent: trace.percent,
                speed: trace.speed,
                cycle_time: (end - start) as f64 / trace.sample_rate,
                samples: resample_cycle(&centered, grid_size)?,
            });
        }
        out.push(ensemble_average(&cycles)?);
    }
    if out.is_empty() {
        return Err(GaitError::InsufficientCycles(format!(
            "{}: no heel-strike events",
            trace.subject_id
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn trace(lateral: impl Fn(f64) -> f64) -> MarkerTrace {
        let fs = 150.0;
        let stride = 1.2;
        let frames = (fs * stride * 6.0) as usize + 1;
        let per = (fs * stride) as usize;
        let mut markers = BTreeMap::new();
        for (label, offset) in [("LASI", -120.0), ("RASI", 120.0), ("SACR", 0.0)] {
            let pos = (0..frames)
                .map(|f| {
                    let t = f as f64 / fs;
                    [offset + lateral(t / stride), 500.0 + 3.0 * t, 950.0]
                })
                .collect();
            markers.insert(label.to_string(), pos);
        }
        let right: Vec<usize> = (0..6).map(|k| k * per).collect();
        let left: Vec<usize> = (0..5).map(|k| k * per + per / 2).collect();
        MarkerTrace {
            subject_id: "s".into(),
            percent: 40,
            speed: 1.8,
            sample_rate: fs,
            markers,
            heel_strikes: BTreeMap::from([(Side::Right, right), (Side::Left, left)]),
            pelvis_markers: vec!["LASI".into(), "RASI".into(), "SACR".into()],
            lateral_axis: 0,
        }
    }

    #[test]
    fn sinusoid_amplitude_preserved() {
        let cycles = derive_pelvis_lateral(&trace(|phase| 20.0 * (TAU * phase).sin()), 101).unwrap();
        assert_eq!(cycles.len(), 2);
        for c in &cycles {
            let max = c.samples.iter().cloned().fold(f64::MIN, f64::max);
            let min = c.samples.iter().cloned().fold(f64::MAX, f64::min);
            assert!((max - 20.0).abs() < 0.5 && (min + 20.0).abs() < 0.5, "{min} {max}");
            assert!((c.cycle_time - 1.2).abs() < 1e-12);
        }
        // Right-side cycles start at heel strike, where the sinusoid crosses zero upward.
        let right = cycles.iter().find(|c| c.side == Side::Right).unwrap();
        assert!(right.samples[0].abs() < 1e-9 && right.samples[25] > 19.0);
        // The left side sees the same motion half a stride later.
        let left = cycles.iter().find(|c| c.side == Side::Left).unwrap();
        assert!(left.samples[25] < -19.0);
    }

    #[test]
    fn constant_markers_give_zero_cycle() {
        let cycles = derive_pelvis_lateral(&trace(|_| 0.0), 101).unwrap();
        for c in cycles {
            assert!(c.samples.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn missing_markers_reported() {
        let mut t = trace(|_| 0.0);
        t.pelvis_markers = vec!["XXX".into()];
        assert!(matches!(derive_pelvis_lateral(&t, 101), Err(GaitError::MissingMarker(_))));
    }

    #[test]
    fn too_few_strides_reported() {
        let mut t = trace(|_| 0.0);
        t.heel_strikes.get_mut(&Side::Right).unwrap().truncate(3);
        assert!(matches!(derive_pelvis_lateral(&t, 101), Err(GaitError::InsufficientCycles(_))));
    }

    #[test]
    fn unordered_events_rejected() {
        let mut t = trace(|_| 0.0);
        t.heel_strikes.insert(Side::Left, vec![10, 5, 300]);
        assert!(matches!(derive_pelvis_lateral(&t, 101), Err(GaitError::InvariantViolation(_))));
    }
}
