//! Joint-space patterns turned into hip actuator reference series.

use std::fmt::Write as _;

use exo_kinematics::{forward_kinematics, ActuatorState, ExoGeometry, HipJointAngles, PelvisPose};
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::data::types::{JointChannel, Side};
use crate::error::{GaitError, Result};
use crate::trajectory::pattern::GaitPattern;

/// Actuator references of both legs at uniform time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorSeries {
    /// Seconds.
    pub time: Vec<f64>,
    pub left: Vec<ActuatorState>,
    pub right: Vec<ActuatorState>,
    /// Knee angle references, degrees.
    pub knee_left: Vec<f64>,
    pub knee_right: Vec<f64>,
}

/// Joint targets of one leg at `percent` of the pattern's (right-side)
/// cycle. The left leg runs half a cycle behind with its frontal-plane
/// angle mirrored; the pelvis translation is shared.
fn leg_targets(p: &GaitPattern, geom: &ExoGeometry, side: Side, percent: f64) -> Result<(PelvisPose, HipJointAngles, f64)> {
    let pelvis_mm = p.eval(JointChannel::PelvisLateral, percent)?[0];
    let phase = match side {
        Side::Right => percent,
        Side::Left => percent + 50.0,
    };
    let flex = p.eval(JointChannel::HipFlexExt, phase)?[0];
    let ab = p.eval(JointChannel::HipAbAd, phase)?[0];
    let knee = p.eval(JointChannel::KneeFlexExt, phase)?[0];
    let ab = match side {
        Side::Right => ab,
        Side::Left => -ab,
    };
    let pelvis = PelvisPose {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        t_fp: geom.t_fp_nominal + Vector3::new(pelvis_mm / 1000.0, 0.0, 0.0),
    };
    let hip = HipJointAngles::new(flex.to_radians(), ab.to_radians(), geom.theta_ro);
    Ok((pelvis, hip, knee))
}

fn solve(p: &GaitPattern, geom: &ExoGeometry, side: Side, percent: f64, index: usize) -> Result<(ActuatorState, f64)> {
    let (pelvis, hip, knee) = leg_targets(p, geom, side, percent)?;
    let kin = |source| GaitError::Kinematics { index, source };
    hip.validate().map_err(kin)?;
    let fk = forward_kinematics(geom, &pelvis, &hip).map_err(kin)?;
    Ok((fk.actuators, knee))
}

/// Samples the pattern every `dt` seconds over one cycle and runs forward
/// kinematics for both legs. Pelvis lateral motion (mm) drives the lateral
/// plate translation; hip angles (deg) drive the actuators; knee angles pass
/// through unchanged.
pub fn pattern_to_actuators(
    geom_left: &ExoGeometry,
    geom_right: &ExoGeometry,
    p: &GaitPattern,
    dt: f64,
) -> Result<ActuatorSeries> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GaitError::Config(format!("time step {dt} s must be positive")));
    }
    for g in [geom_left, geom_right] {
        g.validate().map_err(|source| GaitError::Kinematics { index: 0, source })?;
    }
    let n = (p.cycle_time / dt + 1e-9).round().max(1.0) as usize;
    let time: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let samples = time
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let percent = 100.0 * t / p.cycle_time;
            let left = solve(p, geom_left, Side::Left, percent, k)?;
            let right = solve(p, geom_right, Side::Right, percent, k)?;
            Ok((left, right))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ActuatorSeries {
        time,
        left: Vec::with_capacity(n),
        right: Vec::with_capacity(n),
        knee_left: Vec::with_capacity(n),
        knee_right: Vec::with_capacity(n),
    };
    for ((l, kl), (r, kr)) in samples {
        out.left.push(l);
        out.knee_left.push(kl);
        out.right.push(r);
        out.knee_right.push(kr);
    }
    Ok(out)
}

/// Delimited export: time (s), then shaft lengths (m), plane angle (rad) and
/// knee angle (deg) of the left leg, then the same for the right leg.
pub fn actuator_csv(p: &GaitPattern, series: &ActuatorSeries) -> String {
    let mut out = format!(
        "# kind={}\n# cycle_time_s={}\n# speed_kmh={}\n# subject_hash={}\n",
        p.kind, p.cycle_time, p.speed, p.subject_hash
    );
    out.push_str("time,p_int_L,p_ext_L,theta_A_L,knee_L,p_int_R,p_ext_R,theta_A_R,knee_R\n");
    for k in 0..series.time.len() {
        let (l, r) = (&series.left[k], &series.right[k]);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            series.time[k],
            l.p_int,
            l.p_ext,
            l.theta_a,
            series.knee_left[k],
            r.p_int,
            r.p_ext,
            r.theta_a,
            series.knee_right[k]
        );
    }
    out
}
