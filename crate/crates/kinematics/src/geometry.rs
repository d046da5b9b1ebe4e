//! Mechanism dimensions and the kinematic state types.
//!
//! Frame conventions: `x` is medio-lateral (the flexion axis), `y` points
//! along the actuator shafts (anterior), `z` is vertical. The actuator plane
//! `A` rotates about `x`; `P_ext` sits at `+l_c/2` and `P_int` at `-l_c/2`.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::KinematicsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

/// Dimensions of one leg's hip module, all lengths in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExoGeometry {
    pub side: Side,
    /// Lateral separation of the two actuator axes.
    pub l_c: f64,
    /// Link from `P_ext` to the hinge `E`.
    pub l_1: f64,
    /// Link from `P_int` to the hinge `E`.
    pub l_2: f64,
    /// Thigh-link offset from `E` to `B` (along the link's y-axis).
    pub l_n: f64,
    /// Thigh-link offset from `B` to `H` (along the link's z-axis).
    pub l_m: f64,
    /// Fixed offset between the actuator base and the shaft origin.
    pub d: f64,
    /// Origin of the pelvis frame `F` in `O`.
    pub t_of: Vector3<f64>,
    /// Nominal pelvis plate translation in `F`.
    pub t_fp_nominal: Vector3<f64>,
    /// Calibrated hip-center offset on the pelvis plate.
    pub t_ph: Vector3<f64>,
    /// Calibrated internal/external rotation, held fixed by the mechanism (rad).
    pub theta_ro: f64,
    /// Actuator stroke limits `[p_min, p_max]`.
    pub stroke: [f64; 2],
}

impl Default for ExoGeometry {
    /// Placeholder dimensions: the neutral pose puts `E` in the plane
    /// `z = 0` with both links at the same angle and a mid-stroke shaft.
    fn default() -> Self {
        ExoGeometry {
            side: Side::Right,
            l_c: 0.10,
            l_1: 0.12,
            l_2: 0.12,
            l_n: 0.08,
            l_m: 0.35,
            d: 0.05,
            t_of: Vector3::new(0.0, 0.25, 0.30),
            t_fp_nominal: Vector3::zeros(),
            t_ph: Vector3::new(0.0, 0.109, 0.05),
            theta_ro: 0.0,
            stroke: [0.0, 0.40],
        }
    }
}

impl ExoGeometry {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let lengths = [
            ("l_c", self.l_c),
            ("l_1", self.l_1),
            ("l_2", self.l_2),
            ("l_n", self.l_n),
            ("l_m", self.l_m),
            ("d", self.d),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.l_1 + self.l_2 <= self.l_c {
            return Err(KinematicsError::InvalidGeometry(format!(
                "chain cannot close: l_1 + l_2 = {} <= l_c = {}",
                self.l_1 + self.l_2,
                self.l_c
            )));
        }
        if !(self.stroke[0] < self.stroke[1]) {
            return Err(KinematicsError::InvalidGeometry(format!(
                "stroke limits out of order: {:?}",
                self.stroke
            )));
        }
        let vectors = [self.t_of, self.t_fp_nominal, self.t_ph];
        if vectors.iter().any(|v| v.iter().any(|c| !c.is_finite())) || !self.theta_ro.is_finite() {
            return Err(KinematicsError::InvalidGeometry("non-finite offset".into()));
        }
        Ok(())
    }

    /// Mirror image of this leg through the sagittal plane `x = 0`.
    ///
    /// Lateral offsets flip sign and so does the calibrated rotation about `z`.
    /// The kinematic equations are kept as written, so `P_ext` still sits at
    /// `+l_c/2` in the mirrored leg.
    pub fn mirrored(&self) -> ExoGeometry {
        let flip = |v: &Vector3<f64>| Vector3::new(-v.x, v.y, v.z);
        ExoGeometry {
            side: self.side.opposite(),
            t_of: flip(&self.t_of),
            t_fp_nominal: flip(&self.t_fp_nominal),
            t_ph: flip(&self.t_ph),
            theta_ro: -self.theta_ro,
            ..self.clone()
        }
    }

    pub fn within_stroke(&self, p: f64) -> bool {
        p >= self.stroke[0] && p <= self.stroke[1]
    }

    pub fn from_toml_str(text: &str) -> Result<ExoGeometry, KinematicsError> {
        let raw: GeometryFile =
            toml::from_str(text).map_err(|e| KinematicsError::InvalidConfig(e.to_string()))?;
        raw.into_geometry()
    }

    pub fn load(path: &Path) -> Result<ExoGeometry, KinematicsError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            KinematicsError::InvalidConfig(format!("{}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = GeometryFile {
            side: self.side,
            length_unit: LengthUnit::M,
            l_c: self.l_c,
            l_1: self.l_1,
            l_2: self.l_2,
            l_n: self.l_n,
            l_m: self.l_m,
            d: self.d,
            t_of: self.t_of.into(),
            t_fp_nominal: self.t_fp_nominal.into(),
            t_ph: self.t_ph.into(),
            theta_ro_rad: self.theta_ro,
            stroke: self.stroke,
        };
        toml::to_string(&file).expect("geometry serializes")
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
enum LengthUnit {
    #[serde(rename = "m")]
    M,
    #[serde(rename = "mm")]
    Mm,
}

/// On-disk geometry description. Lengths are in `length_unit`, angles in radians.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryFile {
    side: Side,
    length_unit: LengthUnit,
    l_c: f64,
    l_1: f64,
    l_2: f64,
    l_n: f64,
    l_m: f64,
    d: f64,
    t_of: [f64; 3],
    t_fp_nominal: [f64; 3],
    t_ph: [f64; 3],
    #[serde(default)]
    theta_ro_rad: f64,
    stroke: [f64; 2],
}

impl GeometryFile {
    fn into_geometry(self) -> Result<ExoGeometry, KinematicsError> {
        let k = match self.length_unit {
            LengthUnit::M => 1.0,
            LengthUnit::Mm => 1e-3,
        };
        let v = |a: [f64; 3]| Vector3::new(a[0] * k, a[1] * k, a[2] * k);
        let geom = ExoGeometry {
            side: self.side,
            l_c: self.l_c * k,
            l_1: self.l_1 * k,
            l_2: self.l_2 * k,
            l_n: self.l_n * k,
            l_m: self.l_m * k,
            d: self.d * k,
            t_of: v(self.t_of),
            t_fp_nominal: v(self.t_fp_nominal),
            t_ph: v(self.t_ph),
            theta_ro: self.theta_ro_rad,
            stroke: [self.stroke[0] * k, self.stroke[1] * k],
        };
        geom.validate()?;
        Ok(geom)
    }
}

/// Pose of the pelvis plate relative to frame `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PelvisPose {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub t_fp: Vector3<f64>,
}

impl PelvisPose {
    /// Zero rotation at the geometry's nominal translation.
    pub fn neutral(geom: &ExoGeometry) -> PelvisPose {
        PelvisPose {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            t_fp: geom.t_fp_nominal,
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        for (name, a) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(a.abs() < half_pi) {
                return Err(KinematicsError::OutOfRange(format!(
                    "pelvis {name} = {a} rad outside (-pi/2, pi/2)"
                )));
            }
        }
        Ok(())
    }
}

/// Hip joint coordinates in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HipJointAngles {
    pub theta_fl: f64,
    pub theta_ab: f64,
    pub theta_ro: f64,
}

impl HipJointAngles {
    pub const FLEXION_RANGE: [f64; 2] = [-0.6, 1.6];
    pub const ABDUCTION_RANGE: [f64; 2] = [-0.5, 0.5];

    pub fn new(theta_fl: f64, theta_ab: f64, theta_ro: f64) -> Self {
        HipJointAngles {
            theta_fl,
            theta_ab,
            theta_ro,
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let [fl_lo, fl_hi] = Self::FLEXION_RANGE;
        let [ab_lo, ab_hi] = Self::ABDUCTION_RANGE;
        if !(self.theta_fl >= fl_lo && self.theta_fl <= fl_hi) {
            return Err(KinematicsError::OutOfRange(format!(
                "theta_fl = {} rad outside [{fl_lo}, {fl_hi}]",
                self.theta_fl
            )));
        }
        if !(self.theta_ab >= ab_lo && self.theta_ab <= ab_hi) {
            return Err(KinematicsError::OutOfRange(format!(
                "theta_ab = {} rad outside [{ab_lo}, {ab_hi}]",
                self.theta_ab
            )));
        }
        if !self.theta_ro.is_finite() {
            return Err(KinematicsError::OutOfRange("theta_ro is not finite".into()));
        }
        Ok(())
    }
}

/// Actuator coordinates: shaft lengths (m) and the passive plane angle (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorState {
    pub p_int: f64,
    pub p_ext: f64,
    pub theta_a: f64,
}
