use std::collections::BTreeSet;

use crate::data::types::{speed_label, Dataset, GaitCycle, SpeedLevel};
use crate::error::{GaitError, Result};

/// Treadmill speed limit of the target device, km/h.
pub const DEFAULT_TREADMILL_LIMIT_KMH: f64 = 3.2;

/// Pointwise mean of cycles sharing channel, side, and grid.
///
/// Cycle time and speed are averaged too. Subject id and speed percent are
/// kept when all inputs agree and replaced by `*` / `0` otherwise.
pub fn ensemble_average(cycles: &[GaitCycle]) -> Result<GaitCycle> {
    let first = cycles
        .first()
        .ok_or_else(|| GaitError::EmptyInput("no cycles to average".into()))?;
    for c in &cycles[1..] {
        if c.channel != first.channel || c.side != first.side {
            return Err(GaitError::MixedChannels(format!(
                "{}/{:?} mixed with {}/{:?}",
                first.channel, first.side, c.channel, c.side
            )));
        }
        if c.samples.len() != first.samples.len() {
            return Err(GaitError::MixedChannels(format!(
                "grid sizes {} and {} mixed",
                first.samples.len(),
                c.samples.len()
            )));
        }
    }
    let n = cycles.len() as f64;
    let mut samples = vec![0.0; first.samples.len()];
    for c in cycles {
        for (acc, v) in samples.iter_mut().zip(&c.samples) {
            *acc += v;
        }
    }
    samples.iter_mut().for_each(|v| *v /= n);
    let same_subject = cycles.iter().all(|c| c.subject_id == first.subject_id);
    let same_percent = cycles.iter().all(|c| c.percent == first.percent);
    Ok(GaitCycle {
        subject_id: if same_subject {
            first.subject_id.clone()
        } else {
            "*".into()
        },
        channel: first.channel,
        side: first.side,
        percent: if same_percent { first.percent } else { 0 },
        speed: cycles.iter().map(|c| c.speed).sum::<f64>() / n,
        cycle_time: cycles.iter().map(|c| c.cycle_time).sum::<f64>() / n,
        samples,
    })
}

/// Keeps the three training speed levels whose absolute speed does not
/// exceed `limit_kmh`. Subjects left without cycles are dropped.
pub fn filter_speed_levels(ds: &Dataset, limit_kmh: f64) -> Result<Dataset> {
    let mut over_limit = 0usize;
    let mut other_levels = 0usize;
    let cycles: Vec<GaitCycle> = ds
        .cycles
        .iter()
        .filter(|c| {
            if c.level().is_none() {
                other_levels += 1;
                false
            } else if c.speed > limit_kmh {
                over_limit += 1;
                false
            } else {
                true
            }
        })
        .cloned()
        .collect();
    if over_limit > 0 {
        log::info!("dropped {over_limit} cycles above the {limit_kmh} km/h treadmill limit");
    }
    log::debug!("dropped {other_levels} cycles outside {:?}", SpeedLevel::ALL.map(|l| speed_label(l.percent())));
    if cycles.is_empty() {
        return Err(GaitError::EmptyResult(format!(
            "no cycles at 40/55/70 % of self-selected speed at or below {limit_kmh} km/h"
        )));
    }
    let kept: BTreeSet<&str> = cycles.iter().map(|c| c.subject_id.as_str()).collect();
    Ok(Dataset {
        subjects: ds
            .subjects
            .iter()
            .filter(|s| kept.contains(s.id.as_str()))
            .cloned()
            .collect(),
        cycles,
        grid_size: ds.grid_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::{Gender, JointChannel, Side, Subject};

    fn cycle(channel: JointChannel, percent: u16, speed: f64, samples: Vec<f64>) -> GaitCycle {
        GaitCycle {
            subject_id: "a".into(),
            channel,
            side: Side::Right,
            percent,
            speed,
            cycle_time: 1.4,
            samples,
        }
    }

    fn dataset(ss: f64, percents: &[u16]) -> Dataset {
        let mut cycles = Vec::new();
        for &p in percents {
            for ch in JointChannel::ALL {
                cycles.push(cycle(ch, p, ss * p as f64 / 100.0, vec![p as f64; 101]));
            }
        }
        Dataset {
            subjects: vec![Subject {
                id: "a".into(),
                age: 40.0,
                height: 1.7,
                mass: 70.0,
                gender: Gender::Male,
                self_selected_speed: ss,
            }],
            cycles,
            grid_size: 101,
        }
    }

    #[test]
    fn identical_cycles_average_to_themselves() {
        let c = cycle(JointChannel::KneeFlexExt, 40, 1.8, (0..101).map(|i| i as f64 * 0.3).collect());
        let avg = ensemble_average(&[c.clone(), c.clone()]).unwrap();
        assert_eq!(avg, c);
    }

    #[test]
    fn opposite_cycles_average_to_zero() {
        let c = cycle(JointChannel::HipAbAd, 40, 1.8, (0..101).map(|i| (i as f64).sin()).collect());
        let avg = ensemble_average(&[c.clone(), c.negated()]).unwrap();
        assert!(avg.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_and_mixed_inputs_rejected() {
        assert!(matches!(ensemble_average(&[]), Err(GaitError::EmptyInput(_))));
        let a = cycle(JointChannel::HipAbAd, 40, 1.8, vec![0.0; 101]);
        let b = cycle(JointChannel::KneeFlexExt, 40, 1.8, vec![0.0; 101]);
        assert!(matches!(ensemble_average(&[a, b]), Err(GaitError::MixedChannels(_))));
    }

    #[test]
    fn keeps_only_training_levels() {
        let ds = dataset(4.0, &[40, 55, 70, 85]);
        let out = filter_speed_levels(&ds, DEFAULT_TREADMILL_LIMIT_KMH).unwrap();
        let percents: BTreeSet<u16> = out.cycles.iter().map(|c| c.percent).collect();
        assert_eq!(percents, BTreeSet::from([40, 55, 70]));
    }

    #[test]
    fn drops_levels_above_treadmill_limit() {
        // 70 % of 5.0 km/h is 3.5 km/h.
        let ds = dataset(5.0, &[40, 55, 70]);
        let out = filter_speed_levels(&ds, DEFAULT_TREADMILL_LIMIT_KMH).unwrap();
        let levels: BTreeSet<_> = out.cycles.iter().filter_map(|c| c.level()).collect();
        assert_eq!(levels, BTreeSet::from([SpeedLevel::L1, SpeedLevel::L2]));
    }

    #[test]
    fn nothing_left_is_an_error() {
        let ds = dataset(4.0, &[85, 100]);
        assert!(matches!(
            filter_speed_levels(&ds, DEFAULT_TREADMILL_LIMIT_KMH),
            Err(GaitError::EmptyResult(_))
        ));
    }

    #[test]
    fn filtering_is_idempotent() {
        let ds = dataset(5.0, &[40, 55, 70, 85]);
        let once = filter_speed_levels(&ds, DEFAULT_TREADMILL_LIMIT_KMH).unwrap();
        let twice = filter_speed_levels(&once, DEFAULT_TREADMILL_LIMIT_KMH).unwrap();
        assert_eq!(once, twice);
    }
}
