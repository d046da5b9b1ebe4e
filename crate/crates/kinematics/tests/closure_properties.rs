use exo_kinematics::{
    forward_kinematics, inverse_kinematics, pose_top_branch, ExoGeometry, HipJointAngles,
    PelvisPose, CLOSURE_TOLERANCE,
};
use nalgebra::{Matrix4, Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Homogeneous rotation about a unit axis, built from Rodrigues' formula.
fn homogeneous_rotation(axis: Vector3<f64>, angle: f64) -> Matrix4<f64> {
    let k = nalgebra::Matrix3::new(
        0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
    );
    let r = nalgebra::Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m
}

fn homogeneous_translation(t: Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// Independent 4×4 chain O → F → P → H → E.
fn oracle_hip_and_hinge(
    g: &ExoGeometry,
    pelvis: &PelvisPose,
    hip: &HipJointAngles,
) -> (Vector3<f64>, Vector3<f64>) {
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    let o_f = homogeneous_translation(g.t_of);
    let f_p = homogeneous_translation(pelvis.t_fp)
        * homogeneous_rotation(x, pelvis.alpha)
        * homogeneous_rotation(y, pelvis.beta)
        * homogeneous_rotation(z, pelvis.gamma);
    let p_h = homogeneous_translation(g.t_ph)
        * homogeneous_rotation(x, hip.theta_fl)
        * homogeneous_rotation(y, hip.theta_ab)
        * homogeneous_rotation(z, hip.theta_ro);
    let o_h = o_f * f_p * p_h;
    let e = o_h * Vector4::new(0.0, -g.l_n, -g.l_m, 1.0);
    let h = o_h * Vector4::new(0.0, 0.0, 0.0, 1.0);
    (h.xyz(), e.xyz())
}

fn random_pelvis(rng: &mut impl Rng, g: &ExoGeometry) -> PelvisPose {
    PelvisPose {
        alpha: rng.random_range(-0.05..0.05),
        beta: rng.random_range(-0.05..0.05),
        gamma: rng.random_range(-0.05..0.05),
        t_fp: g.t_fp_nominal
            + Vector3::new(
                rng.random_range(-0.03..0.03),
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
            ),
    }
}

#[test]
fn top_branch_matches_homogeneous_chain() {
    let g = ExoGeometry {
        t_ph: Vector3::new(0.015, 0.109, 0.05),
        theta_ro: 0.07,
        ..ExoGeometry::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let pelvis = random_pelvis(&mut rng, &g);
        let hip = HipJointAngles::new(
            rng.random_range(-0.6..1.6),
            rng.random_range(-0.5..0.5),
            g.theta_ro,
        );
        let top = pose_top_branch(&g, &pelvis, &hip);
        let (h, e) = oracle_hip_and_hinge(&g, &pelvis, &hip);
        assert!((top.h - h).amax() < 1e-12);
        assert!((top.e - e).amax() < 1e-12);
        assert!(exo_kinematics::rotation::orthonormality_error(&top.r_oh) < 1e-12);
    }
}

#[test]
fn round_trip_over_random_reachable_configurations() {
    let g = ExoGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 1000 {
        let pelvis = random_pelvis(&mut rng, &g);
        let q = HipJointAngles::new(rng.random_range(-0.6..1.0), rng.random_range(-0.3..0.3), 0.0);
        let Ok(fk) = forward_kinematics(&g, &pelvis, &q) else {
            continue;
        };
        let ik = inverse_kinematics(&g, &pelvis, &fk.actuators).unwrap();
        let err = (ik.hip.theta_fl - q.theta_fl)
            .abs()
            .max((ik.hip.theta_ab - q.theta_ab).abs());
        assert!(err < 1e-8, "joint round trip error {err:e} at {q:?}");
        assert!((ik.actuators.theta_a - fk.actuators.theta_a).abs() < 1e-8);
        for chain in [fk.chain, ik.chain] {
            assert!(chain.residual_h < CLOSURE_TOLERANCE);
            assert!(chain.residual_e < CLOSURE_TOLERANCE);
        }
        // The rotation about the thigh axis is never a free output.
        assert_eq!(ik.hip.theta_ro, g.theta_ro);
        checked += 1;
    }
}

#[test]
fn actuator_round_trip() {
    let g = ExoGeometry::default();
    let pelvis = PelvisPose::neutral(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 300 {
        let act = exo_kinematics::ActuatorState {
            p_int: rng.random_range(0.02..0.35),
            p_ext: rng.random_range(0.02..0.35),
            theta_a: 0.0,
        };
        let Ok(ik) = inverse_kinematics(&g, &pelvis, &act) else {
            continue;
        };
        let fk = forward_kinematics(&g, &pelvis, &ik.hip).unwrap();
        assert!((fk.actuators.p_int - act.p_int).abs() < 1e-8);
        assert!((fk.actuators.p_ext - act.p_ext).abs() < 1e-8);
        checked += 1;
    }
}

#[test]
fn calibrated_rotation_is_preserved() {
    let g = ExoGeometry {
        theta_ro: -0.12,
        ..ExoGeometry::default()
    };
    let pelvis = PelvisPose::neutral(&g);
    for &(fl, ab) in &[(0.0, 0.0), (0.3, 0.05), (-0.2, -0.1)] {
        let fk = forward_kinematics(&g, &pelvis, &HipJointAngles::new(fl, ab, g.theta_ro)).unwrap();
        let ik = inverse_kinematics(&g, &pelvis, &fk.actuators).unwrap();
        assert!((ik.hip.theta_ro - g.theta_ro).abs() < 1e-8);
        assert!((ik.hip.theta_fl - fl).abs() < 1e-8);
        assert!((ik.hip.theta_ab - ab).abs() < 1e-8);
    }
}

proptest! {
    #[test]
    fn mirrored_geometry_swaps_shafts(
        fl in -0.4f64..0.8,
        ab in -0.15f64..0.15,
        lateral in -0.02f64..0.02,
    ) {
        let right = ExoGeometry {
            t_ph: Vector3::new(0.01, 0.109, 0.05),
            ..ExoGeometry::default()
        };
        let left = right.mirrored();
        let pelvis_r = PelvisPose { t_fp: Vector3::new(lateral, 0.0, 0.0), ..PelvisPose::neutral(&right) };
        let pelvis_l = PelvisPose { t_fp: Vector3::new(-lateral, 0.0, 0.0), ..PelvisPose::neutral(&left) };
        let r = forward_kinematics(&right, &pelvis_r, &HipJointAngles::new(fl, ab, 0.0));
        let l = forward_kinematics(&left, &pelvis_l, &HipJointAngles::new(fl, -ab, 0.0));
        if let (Ok(r), Ok(l)) = (r, l) {
            prop_assert!((r.actuators.p_int - l.actuators.p_ext).abs() < 1e-12);
            prop_assert!((r.actuators.p_ext - l.actuators.p_int).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_flexion_moves_shafts_together(fl in -0.4f64..0.8, step in 0.005f64..0.1) {
        let g = ExoGeometry::default();
        let pelvis = PelvisPose::neutral(&g);
        let at = |fl: f64| forward_kinematics(&g, &pelvis, &HipJointAngles::new(fl, 0.0, 0.0));
        if let (Ok(base), Ok(flex)) = (at(fl), at(fl + step)) {
            prop_assert!(flex.actuators.p_int > base.actuators.p_int);
            prop_assert!(flex.actuators.p_ext > base.actuators.p_ext);
        }
    }

    #[test]
    fn pure_abduction_moves_shafts_apart(step in prop_oneof![-0.15f64..-0.005, 0.005f64..0.15]) {
        let g = ExoGeometry::default();
        let pelvis = PelvisPose::neutral(&g);
        let at = |ab: f64| forward_kinematics(&g, &pelvis, &HipJointAngles::new(0.0, ab, 0.0)).unwrap();
        let (base, abd) = (at(0.0), at(step));
        let d_int = abd.actuators.p_int - base.actuators.p_int;
        let d_ext = abd.actuators.p_ext - base.actuators.p_ext;
        prop_assert!(d_int * d_ext < 0.0, "{d_int} {d_ext}");
    }
}
