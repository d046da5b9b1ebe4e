//! Loop-closure kinematics of the hip module.
//!
//! The chain is propagated along two branches:
//!
//! * top: `O → P → H → E` through the pelvis plate and the thigh link;
//! * bottom: `O → A → P_ext/P_int → E → B → H` through the actuators.
//!
//! Forward kinematics (joint → actuator) closes the loop at `H` and is
//! closed form. Inverse kinematics (actuator → joint) closes the loop at `E`;
//! an exact seed from a circle/sphere intersection is polished with damped
//! Newton steps on the three closure residuals.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{ActuatorState, ExoGeometry, HipJointAngles, PelvisPose};
use crate::rotation::{rot_x, rot_x_deriv, rot_xyz, rot_y, rot_y_deriv, rot_z, wrap_angle};
use crate::KinematicsError;

/// Largest closure residual accepted for a returned solution (m).
pub const CLOSURE_TOLERANCE: f64 = 1e-9;

const NEWTON_MAX_ITERATIONS: usize = 50;
const NEWTON_TARGET: f64 = 1e-13;

/// Result of propagating the top branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopBranch {
    pub h: Vector3<f64>,
    pub e: Vector3<f64>,
    pub r_oh: Matrix3<f64>,
}

/// Internal coordinates of the closed chain and its joint positions in `O`,
/// computed along the bottom branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSolution {
    /// Link angle at `P_ext`.
    pub theta_1: f64,
    /// Link angle at `P_int`.
    pub theta_2: f64,
    /// Hinge angle at `E`.
    pub theta_e: f64,
    /// Hinge angle at `B`.
    pub theta_b: f64,
    pub e: Vector3<f64>,
    pub b: Vector3<f64>,
    pub h: Vector3<f64>,
    /// `‖T_OH|top − T_OH|bot‖`.
    pub residual_h: f64,
    /// `‖T_OE|top − T_OE|bot‖`, also covering the two in-plane routes to `E`.
    pub residual_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardSolution {
    pub actuators: ActuatorState,
    pub chain: ChainSolution,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseSolution {
    pub hip: HipJointAngles,
    /// The actuator state with the solved passive plane angle.
    pub actuators: ActuatorState,
    pub chain: ChainSolution,
    pub iterations: usize,
}

/// Thigh vector from `H` to `E` in the hip frame.
fn thigh_offset(geom: &ExoGeometry) -> Vector3<f64> {
    Vector3::new(0.0, -geom.l_n, -geom.l_m)
}

fn pelvis_rotation(pelvis: &PelvisPose) -> Matrix3<f64> {
    rot_xyz(pelvis.alpha, pelvis.beta, pelvis.gamma)
}

fn hip_center(geom: &ExoGeometry, pelvis: &PelvisPose) -> Vector3<f64> {
    let t_op = geom.t_of + pelvis.t_fp;
    t_op + pelvis_rotation(pelvis) * geom.t_ph
}

/// Positions of `H` and `E` and the hip orientation from the pelvis side.
pub fn pose_top_branch(geom: &ExoGeometry, pelvis: &PelvisPose, hip: &HipJointAngles) -> TopBranch {
    let r_fp = pelvis_rotation(pelvis);
    let h = geom.t_of + pelvis.t_fp + r_fp * geom.t_ph;
    let r_oh = r_fp * rot_xyz(hip.theta_fl, hip.theta_ab, hip.theta_ro);
    let e = h + r_oh * thigh_offset(geom);
    TopBranch { h, e, r_oh }
}

/// Hinge `E` in the actuator plane, reached through `P_ext`.
fn hinge_in_plane_ext(geom: &ExoGeometry, p_ext: f64, theta_1: f64) -> Vector3<f64> {
    let p = Vector3::new(0.5 * geom.l_c, p_ext + geom.d, 0.0);
    p + rot_z(theta_1) * Vector3::new(0.0, geom.l_1, 0.0)
}

/// Hinge `E` in the actuator plane, reached through `P_int`.
fn hinge_in_plane_int(geom: &ExoGeometry, p_int: f64, theta_2: f64) -> Vector3<f64> {
    let p = Vector3::new(-0.5 * geom.l_c, p_int + geom.d, 0.0);
    p + rot_z(-theta_2) * Vector3::new(0.0, geom.l_2, 0.0)
}

/// Positions of `E`, `B`, `H` along the bottom branch.
fn propagate_bottom(
    geom: &ExoGeometry,
    theta_a: f64,
    e_in_plane: Vector3<f64>,
    theta_e: f64,
    theta_b: f64,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let r_oa = rot_x(theta_a);
    let e = r_oa * e_in_plane;
    let r_e = r_oa * rot_x(theta_e);
    let b = e + r_e * Vector3::new(0.0, geom.l_n, 0.0);
    let h = b + r_e * rot_y(theta_b) * Vector3::new(0.0, 0.0, geom.l_m);
    (e, b, h)
}

fn check_stroke(geom: &ExoGeometry, name: &'static str, p: f64) -> Result<(), KinematicsError> {
    if geom.within_stroke(p) {
        Ok(())
    } else {
        Err(KinematicsError::StrokeLimit {
            actuator: name,
            value: p,
            min: geom.stroke[0],
            max: geom.stroke[1],
        })
    }
}

/// Solves the hinge angles at `E` and `B` so that the bottom branch reaches
/// `h` from `e`, then assembles the chain solution with its residuals.
fn complete_chain(
    geom: &ExoGeometry,
    top: &TopBranch,
    act: &ActuatorState,
    theta_1: f64,
    theta_2: f64,
) -> Result<ChainSolution, KinematicsError> {
    let e_ext = hinge_in_plane_ext(geom, act.p_ext, theta_1);
    let e_int = hinge_in_plane_int(geom, act.p_int, theta_2);
    let e_bot = rot_x(act.theta_a) * e_ext;

    // In the hinge frame: (H − E) = R_x(θ_A + θ_E) [l_m sin θ_B, l_n, l_m cos θ_B].
    let v = rot_x(-act.theta_a) * (top.h - e_bot);
    let sin_b = v.x / geom.l_m;
    if sin_b.abs() > 1.0 {
        return Err(KinematicsError::Unreachable(format!(
            "hinge B cannot reach the hip center (sin theta_B = {sin_b:.6})"
        )));
    }
    let theta_b = sin_b.asin();
    let theta_e = wrap_angle(v.z.atan2(v.y) - (geom.l_m * theta_b.cos()).atan2(geom.l_n));

    let (e, b, h) = propagate_bottom(geom, act.theta_a, e_ext, theta_e, theta_b);
    let residual_h = (top.h - h).norm();
    let residual_e = (top.e - e).norm().max((e_ext - e_int).norm());
    Ok(ChainSolution {
        theta_1,
        theta_2,
        theta_e,
        theta_b,
        e,
        b,
        h,
        residual_h,
        residual_e,
    })
}

/// Joint space → actuator space, closing the loop at `H`.
pub fn forward_kinematics(
    geom: &ExoGeometry,
    pelvis: &PelvisPose,
    hip: &HipJointAngles,
) -> Result<ForwardSolution, KinematicsError> {
    let top = pose_top_branch(geom, pelvis, hip);
    let e = top.e;
    if e.y <= 0.0 {
        return Err(KinematicsError::Unreachable(format!(
            "hinge E behind the actuator base (y = {:.6} m)",
            e.y
        )));
    }
    // E lies in the actuator plane, so the plane angle follows from E alone.
    let theta_a = e.z.atan2(e.y);
    let radial = e.y.hypot(e.z);

    let sin_1 = (0.5 * geom.l_c - e.x) / geom.l_1;
    let sin_2 = (e.x + 0.5 * geom.l_c) / geom.l_2;
    if sin_1.abs() >= 1.0 || sin_2.abs() >= 1.0 {
        return Err(KinematicsError::Unreachable(format!(
            "hinge E lateral offset {:.6} m outside the link span",
            e.x
        )));
    }
    // asin keeps both links opening forward, in (−π/2, π/2).
    let theta_1 = sin_1.asin();
    let theta_2 = sin_2.asin();
    let p_ext = radial - geom.d - geom.l_1 * theta_1.cos();
    let p_int = radial - geom.d - geom.l_2 * theta_2.cos();
    check_stroke(geom, "p_ext", p_ext)?;
    check_stroke(geom, "p_int", p_int)?;

    let actuators = ActuatorState {
        p_int,
        p_ext,
        theta_a,
    };
    let chain = complete_chain(geom, &top, &actuators, theta_1, theta_2)?;
    if chain.residual_h > CLOSURE_TOLERANCE || chain.residual_e > CLOSURE_TOLERANCE {
        return Err(KinematicsError::Unreachable(format!(
            "closure residual {:.3e} m exceeds tolerance",
            chain.residual_h.max(chain.residual_e)
        )));
    }
    Ok(ForwardSolution { actuators, chain })
}

/// Intersection of the two link circles in the actuator plane, keeping the
/// point where both links open forward.
fn hinge_from_shafts(geom: &ExoGeometry, p_int: f64, p_ext: f64) -> Result<(f64, f64), KinematicsError> {
    let c_ext = (0.5 * geom.l_c, p_ext + geom.d);
    let c_int = (-0.5 * geom.l_c, p_int + geom.d);
    let (dx, dy) = (c_int.0 - c_ext.0, c_int.1 - c_ext.1);
    let dist = dx.hypot(dy);
    let (r1, r2) = (geom.l_1, geom.l_2);
    if dist > r1 + r2 || dist < (r1 - r2).abs() || dist == 0.0 {
        return Err(KinematicsError::Unreachable(format!(
            "link circles do not intersect (centers {dist:.6} m apart)"
        )));
    }
    let along = (r1 * r1 - r2 * r2 + dist * dist) / (2.0 * dist);
    let half_chord = (r1 * r1 - along * along).max(0.0).sqrt();
    let (ux, uy) = (dx / dist, dy / dist);
    let mid = (c_ext.0 + along * ux, c_ext.1 + along * uy);
    let candidates = [
        (mid.0 - half_chord * uy, mid.1 + half_chord * ux),
        (mid.0 + half_chord * uy, mid.1 - half_chord * ux),
    ];
    candidates
        .into_iter()
        .filter(|&(_, y)| y > c_ext.1 && y > c_int.1)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| {
            KinematicsError::Unreachable("no forward-opening link configuration".into())
        })
}

/// Closed-form hip angles pointing the thigh from `h` toward `e`.
fn hip_angles_toward(
    geom: &ExoGeometry,
    pelvis: &PelvisPose,
    h: &Vector3<f64>,
    e: &Vector3<f64>,
) -> Result<(f64, f64), KinematicsError> {
    let g = pelvis_rotation(pelvis).transpose() * (e - h);
    let w = rot_z(geom.theta_ro) * thigh_offset(geom);
    // g.x = w.x cos(ab) + w.z sin(ab)
    let amp = w.x.hypot(w.z);
    let ratio = g.x / amp;
    if ratio.abs() > 1.0 {
        return Err(KinematicsError::Unreachable(
            "no abduction angle reaches the hinge".into(),
        ));
    }
    let base = w.z.atan2(w.x);
    let spread = ratio.acos();
    let theta_ab = [base + spread, base - spread]
        .into_iter()
        .map(wrap_angle)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .expect("two candidates");
    let m = rot_y(theta_ab) * w;
    let theta_fl = wrap_angle(g.z.atan2(g.y) - m.z.atan2(m.y));
    Ok((theta_fl, theta_ab))
}

/// Actuator space → joint space, closing the loop at `E`.
///
/// `act.theta_a` only selects between the two plane angles compatible with
/// the shaft lengths; the returned state carries the solved angle.
pub fn inverse_kinematics(
    geom: &ExoGeometry,
    pelvis: &PelvisPose,
    act: &ActuatorState,
) -> Result<InverseSolution, KinematicsError> {
    check_stroke(geom, "p_ext", act.p_ext)?;
    check_stroke(geom, "p_int", act.p_int)?;

    let (x_e, y_e) = hinge_from_shafts(geom, act.p_int, act.p_ext)?;
    let theta_1 = (0.5 * geom.l_c - x_e).atan2(y_e - act.p_ext - geom.d);
    let theta_2 = (x_e + 0.5 * geom.l_c).atan2(y_e - act.p_int - geom.d);
    let e_plane = hinge_in_plane_ext(geom, act.p_ext, theta_1);

    // Seed: rotate E about x until it lies on the sphere of thigh radius around H.
    let h = hip_center(geom, pelvis);
    let thigh_sq = geom.l_n * geom.l_n + geom.l_m * geom.l_m;
    let k = ((e_plane.x - h.x).powi(2) + e_plane.y.powi(2) + h.y * h.y + h.z * h.z - thigh_sq)
        / (2.0 * e_plane.y);
    let r = h.y.hypot(h.z);
    if r == 0.0 || (k / r).abs() > 1.0 {
        return Err(KinematicsError::Unreachable(
            "actuator plane cannot bring hinge E onto the thigh sphere".into(),
        ));
    }
    let phi = h.z.atan2(h.y);
    let spread = (k / r).acos();
    let theta_a_seed = [phi + spread, phi - spread]
        .into_iter()
        .map(wrap_angle)
        .filter(|a| a.abs() < std::f64::consts::FRAC_PI_2)
        .min_by(|a, b| (a - act.theta_a).abs().total_cmp(&(b - act.theta_a).abs()))
        .ok_or_else(|| KinematicsError::Unreachable("actuator plane angle out of range".into()))?;
    let e_seed = rot_x(theta_a_seed) * e_plane;
    let (fl_seed, ab_seed) = hip_angles_toward(geom, pelvis, &h, &e_seed)?;

    let (q, iterations, residual) =
        newton_closure_at_e(geom, pelvis, &e_plane, [fl_seed, ab_seed, theta_a_seed]);
    if !(residual < CLOSURE_TOLERANCE) {
        return Err(KinematicsError::NoConvergence {
            iterations,
            residual,
        });
    }

    let hip = HipJointAngles::new(q[0], q[1], geom.theta_ro);
    let actuators = ActuatorState {
        p_int: act.p_int,
        p_ext: act.p_ext,
        theta_a: q[2],
    };
    let top = pose_top_branch(geom, pelvis, &hip);
    let chain = complete_chain(geom, &top, &actuators, theta_1, theta_2)?;
    if chain.residual_h > CLOSURE_TOLERANCE || chain.residual_e > CLOSURE_TOLERANCE {
        return Err(KinematicsError::NoConvergence {
            iterations,
            residual: chain.residual_h.max(chain.residual_e),
        });
    }
    Ok(InverseSolution {
        hip,
        actuators,
        chain,
        iterations,
    })
}

/// Damped Newton on `E|top(θ_fl, θ_ab) − R_x(θ_A) E_A = 0`.
fn newton_closure_at_e(
    geom: &ExoGeometry,
    pelvis: &PelvisPose,
    e_plane: &Vector3<f64>,
    seed: [f64; 3],
) -> (Vector3<f64>, usize, f64) {
    let r_fp = pelvis_rotation(pelvis);
    let h = hip_center(geom, pelvis);
    let w = rot_z(geom.theta_ro) * thigh_offset(geom);
    let residual = |q: &Vector3<f64>| -> Vector3<f64> {
        h + r_fp * rot_x(q[0]) * rot_y(q[1]) * w - rot_x(q[2]) * e_plane
    };

    let mut q = Vector3::from(seed);
    let mut f = residual(&q);
    let mut norm = f.norm();
    let mut iterations = 0;
    while norm > NEWTON_TARGET && iterations < NEWTON_MAX_ITERATIONS {
        iterations += 1;
        let j = Matrix3::from_columns(&[
            r_fp * rot_x_deriv(q[0]) * rot_y(q[1]) * w,
            r_fp * rot_x(q[0]) * rot_y_deriv(q[1]) * w,
            -(rot_x_deriv(q[2]) * e_plane),
        ]);
        let Some(step) = j.lu().solve(&(-f)) else {
            break;
        };
        let mut damping = 1.0;
        let mut accepted = false;
        while damping > 1e-6 {
            let trial = q + step * damping;
            let f_trial = residual(&trial);
            if f_trial.norm() < norm {
                q = trial;
                f = f_trial;
                norm = f.norm();
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (q, iterations, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn neutral() -> (ExoGeometry, PelvisPose) {
        let g = ExoGeometry::default();
        let p = PelvisPose::neutral(&g);
        (g, p)
    }

    #[test]
    fn identity_pose_puts_hip_at_offset_sum() {
        let (g, p) = neutral();
        let top = pose_top_branch(&g, &p, &HipJointAngles::new(0.0, 0.0, 0.0));
        assert_eq!(top.h, g.t_of + g.t_fp_nominal + g.t_ph);
        assert_eq!(top.r_oh, Matrix3::identity());
    }

    #[test]
    fn pure_flexion_rotates_hinge_about_x_through_hip() {
        let (g, p) = neutral();
        let zero = pose_top_branch(&g, &p, &HipJointAngles::new(0.0, 0.0, 0.0));
        let flexed = pose_top_branch(&g, &p, &HipJointAngles::new(0.3, 0.0, 0.0));
        let expected = zero.h + rot_x(0.3) * (zero.e - zero.h);
        assert_relative_eq!(flexed.e, expected, epsilon = 1e-15);
        assert_relative_eq!((flexed.e - flexed.h).norm(), (zero.e - zero.h).norm(), epsilon = 1e-15);
    }

    #[test]
    fn neutral_configuration_is_symmetric() {
        let (g, p) = neutral();
        let fk = forward_kinematics(&g, &p, &HipJointAngles::new(0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(fk.actuators.p_int, fk.actuators.p_ext, epsilon = 1e-15);
        assert_relative_eq!(fk.chain.theta_1, fk.chain.theta_2, epsilon = 1e-15);
        assert!(fk.chain.residual_h < CLOSURE_TOLERANCE);
    }

    #[test]
    fn flexion_moves_shafts_together_abduction_apart() {
        let (g, p) = neutral();
        let base = forward_kinematics(&g, &p, &HipJointAngles::new(0.1, 0.05, 0.0)).unwrap();
        let flex = forward_kinematics(&g, &p, &HipJointAngles::new(0.15, 0.05, 0.0)).unwrap();
        let abd = forward_kinematics(&g, &p, &HipJointAngles::new(0.1, 0.08, 0.0)).unwrap();
        let d_flex = (
            flex.actuators.p_int - base.actuators.p_int,
            flex.actuators.p_ext - base.actuators.p_ext,
        );
        let d_abd = (
            abd.actuators.p_int - base.actuators.p_int,
            abd.actuators.p_ext - base.actuators.p_ext,
        );
        assert!(d_flex.0 * d_flex.1 > 0.0, "{d_flex:?}");
        assert!(d_abd.0 * d_abd.1 < 0.0, "{d_abd:?}");
    }

    #[test]
    fn inverse_recovers_forward_input() {
        let (g, p) = neutral();
        let q = HipJointAngles::new(0.4, -0.08, 0.0);
        let fk = forward_kinematics(&g, &p, &q).unwrap();
        let ik = inverse_kinematics(&g, &p, &fk.actuators).unwrap();
        assert_relative_eq!(ik.hip.theta_fl, q.theta_fl, epsilon = 1e-10);
        assert_relative_eq!(ik.hip.theta_ab, q.theta_ab, epsilon = 1e-10);
        assert_relative_eq!(ik.actuators.theta_a, fk.actuators.theta_a, epsilon = 1e-10);
        assert_relative_eq!(ik.chain.theta_e, fk.chain.theta_e, epsilon = 1e-9);
        assert_relative_eq!(ik.chain.theta_b, fk.chain.theta_b, epsilon = 1e-9);
    }

    #[test]
    fn equal_shafts_give_zero_abduction() {
        let (g, p) = neutral();
        let act = ActuatorState {
            p_int: 0.16,
            p_ext: 0.16,
            theta_a: 0.0,
        };
        let ik = inverse_kinematics(&g, &p, &act).unwrap();
        assert!(ik.hip.theta_ab.abs() < 1e-12);
    }

    #[test]
    fn far_apart_shafts_are_rejected() {
        let (g, p) = neutral();
        let act = ActuatorState {
            p_int: 0.0,
            p_ext: 0.39,
            theta_a: 0.0,
        };
        assert!(matches!(
            inverse_kinematics(&g, &p, &act),
            Err(KinematicsError::Unreachable(_)) | Err(KinematicsError::NoConvergence { .. })
        ));
    }

    #[test]
    fn shafts_outside_stroke_are_rejected() {
        let (g, p) = neutral();
        let act = ActuatorState {
            p_int: 0.2,
            p_ext: 0.45,
            theta_a: 0.0,
        };
        assert!(matches!(
            inverse_kinematics(&g, &p, &act),
            Err(KinematicsError::StrokeLimit { actuator: "p_ext", .. })
        ));
    }

    #[test]
    fn large_abduction_is_unreachable() {
        let (g, p) = neutral();
        let r = forward_kinematics(&g, &p, &HipJointAngles::new(0.0, 0.5, 0.0));
        assert!(matches!(r, Err(KinematicsError::Unreachable(_))));
    }

    #[test]
    fn deep_flexion_hits_stroke_limit() {
        let (g, p) = neutral();
        let r = forward_kinematics(&g, &p, &HipJointAngles::new(1.5, 0.0, 0.0));
        assert!(matches!(r, Err(KinematicsError::StrokeLimit { .. })));
    }

    #[test]
    fn returned_rotation_is_orthonormal() {
        let (g, _) = neutral();
        let p = PelvisPose {
            alpha: 0.05,
            beta: -0.03,
            gamma: 0.08,
            t_fp: Vector3::new(0.01, 0.0, -0.005),
        };
        let top = pose_top_branch(&g, &p, &HipJointAngles::new(0.3, 0.1, 0.02));
        assert!(crate::rotation::orthonormality_error(&top.r_oh) < 1e-12);
    }
}
