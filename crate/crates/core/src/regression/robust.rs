//! Tukey bisquare regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{GaitError, Result};
use crate::regression::ols::{fit_ols, fit_wls};

pub const BISQUARE_K: f64 = 4.685;
pub const MAD_TO_SIGMA: f64 = 1.4826;
pub const MAX_ITERATIONS: usize = 50;
pub const COEFFICIENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RobustFit {
    pub coefficients: DVector<f64>,
    /// Bisquare weights at the final coefficients.
    pub weights: DVector<f64>,
    /// Final robust residual scale σ̂.
    pub scale: f64,
    pub iterations: usize,
    /// False when the iteration limit was hit first.
    pub converged: bool,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// 1.4826 × median absolute residual. Residuals are taken about zero, not
/// their median: a fit pulled off by outliers leaves the good points
/// offset but tightly clustered, and a median-centred spread would then
/// reject all of them.
pub fn mad_scale(residuals: &DVector<f64>) -> f64 {
    let mut dev: Vec<f64> = residuals.iter().map(|v| v.abs()).collect();
    MAD_TO_SIGMA * median(&mut dev)
}

pub fn bisquare_weight(r: f64, cutoff: f64) -> f64 {
    if r.abs() < cutoff {
        let u = r / cutoff;
        (1.0 - u * u).powi(2)
    } else {
        0.0
    }
}

fn weights_for(residuals: &DVector<f64>, scale: f64, tiny: f64) -> DVector<f64> {
    if scale > tiny {
        residuals.map(|r| bisquare_weight(r, BISQUARE_K * scale))
    } else {
        // Degenerate scale: more than half the points fit exactly.
        residuals.map(|r| if r.abs() <= tiny { 1.0 } else { 0.0 })
    }
}

/// Bisquare IRLS started from the OLS solution. The scale is re-estimated
/// from the residuals at every iteration.
pub fn fit_robust_bisquare(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RobustFit> {
    let mut beta = fit_ols(x, y)?.coefficients;
    let tiny = 1e-12 * y.amax().max(1.0);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let residuals = y - x * &beta;
        let scale = mad_scale(&residuals);
        let w = weights_for(&residuals, scale, tiny);
        if w.iter().all(|v| *v == 0.0) {
            return Err(GaitError::AllZeroWeights);
        }
        let next = fit_wls(x, y, &w)?;
        let change = (&next - &beta).amax();
        beta = next;
        if change < COEFFICIENT_TOLERANCE || scale <= tiny {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("bisquare IRLS stopped after {MAX_ITERATIONS} iterations without converging");
    }
    let residuals = y - x * &beta;
    let scale = mad_scale(&residuals);
    Ok(RobustFit {
        weights: weights_for(&residuals, scale, tiny),
        coefficients: beta,
        scale,
        iterations,
        converged,
    })
}
