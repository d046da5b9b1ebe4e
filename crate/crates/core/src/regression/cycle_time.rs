//! Fixed-coefficient gait cycle-time models. Speeds are in km/h.

use serde::{Deserialize, Serialize};

use crate::error::{GaitError, Result};

/// Cycle times at or below this are rejected, seconds.
pub const MIN_CYCLE_TIME: f64 = 0.2;

/// Intercept, speed, speed², and the subject term (age in years).
pub const PERSONALIZED_COEFFICIENTS: [f64; 4] = [2.7662, -0.7458, 0.0903, -0.0037];
/// Intercept, speed, speed², and the subject term (height in meters).
pub const STANDARD_COEFFICIENTS: [f64; 4] = [1.8993, -0.6909, 0.0789, 0.3928];

/// `T = c0 + c1·v + c2·v² + c3·x` with `x` the model's subject attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleTimeModel {
    pub coefficients: [f64; 4],
}

impl CycleTimeModel {
    pub const PERSONALIZED: CycleTimeModel = CycleTimeModel {
        coefficients: PERSONALIZED_COEFFICIENTS,
    };
    pub const STANDARD: CycleTimeModel = CycleTimeModel {
        coefficients: STANDARD_COEFFICIENTS,
    };

    pub fn predict(&self, v: f64, x: f64) -> Result<f64> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(GaitError::InvariantViolation(format!("speed {v} km/h must be positive")));
        }
        if !x.is_finite() {
            return Err(GaitError::InvariantViolation(format!("subject attribute {x} not finite")));
        }
        let [c0, c1, c2, c3] = self.coefficients;
        let t = c0 + c1 * v + c2 * v * v + c3 * x;
        if t <= MIN_CYCLE_TIME {
            return Err(GaitError::NonPositiveResult(t));
        }
        Ok(t)
    }
}

/// Cycle time of a personalized pattern from speed (km/h) and age (years).
pub fn predict_cycle_time_personalized(v: f64, age: f64) -> Result<f64> {
    CycleTimeModel::PERSONALIZED.predict(v, age)
}

/// Cycle time of the standard pattern from speed (km/h) and height (m).
pub fn predict_cycle_time_standard(v: f64, height: f64) -> Result<f64> {
    if !(height > 0.0) {
        return Err(GaitError::InvariantViolation(format!("height {height} m must be positive")));
    }
    CycleTimeModel::STANDARD.predict(v, height)
}
