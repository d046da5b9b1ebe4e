//! Ordinary least squares with classical p-values, and backward stepwise
//! predictor elimination.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{GaitError, Result};

/// Ratio of smallest to largest singular value of the column-normalized
/// design below which it is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub p_values: DVector<f64>,
    /// Residual variance estimate.
    pub sigma2: f64,
    pub dof: usize,
}

/// Fails with `RankDeficient` unless `x` has full column rank.
pub fn check_rank(x: &DMatrix<f64>) -> Result<()> {
    let (n, p) = x.shape();
    if p == 0 {
        return Err(GaitError::RankDeficient("design matrix has no columns".into()));
    }
    let mut scaled = x.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(GaitError::RankDeficient(format!("column {j} is zero or non-finite")));
        }
        col /= norm;
    }
    if n < p {
        return Err(GaitError::RankDeficient(format!("{n} rows for {p} columns")));
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > RANK_TOLERANCE * max) {
        return Err(GaitError::RankDeficient(format!(
            "condition ratio {:.3e} of the {n}x{p} design",
            min / max
        )));
    }
    Ok(())
}

/// Least-squares solution through a QR factorization; `x` must have full
/// column rank. Returns the coefficients and R⁻¹.
fn qr_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let p = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .expect("full-rank R is invertible");
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .expect("full-rank R is invertible");
    (beta, r_inv)
}

/// Least squares with standard errors and two-sided t-test p-values.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(GaitError::InvariantViolation(format!(
            "{n} design rows but {} targets",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GaitError::InvariantViolation("non-finite regression target".into()));
    }
    check_rank(x)?;
    if n < p + 2 {
        return Err(GaitError::InsufficientData(format!("{n} rows for {p} predictors")));
    }
    let (beta, r_inv) = qr_solve(x, y);
    let residuals = y - x * &beta;
    let dof = n - p;
    let rss = residuals.norm_squared();
    // Floor the variance at rounding level so exact fits give p = 0 rather than NaN.
    let scale = y.amax().max(1.0);
    let floor = (f64::EPSILON * scale).powi(2);
    let sigma2 = (rss / dof as f64).max(floor);
    let std_errors = DVector::from_iterator(p, (0..p).map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt()));
    let t_dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    let p_values = DVector::from_iterator(
        p,
        (0..p).map(|j| {
            let t = (beta[j] / std_errors[j]).abs();
            (2.0 * t_dist.sf(t)).min(1.0)
        }),
    );
    Ok(OlsFit {
        coefficients: beta,
        std_errors,
        p_values,
        sigma2,
        dof,
    })
}

/// Weighted least squares on full-rank `x`; weights must be non-negative.
pub fn fit_wls(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    let mut xw = x.clone();
    let mut yw = y.clone();
    for i in 0..x.nrows() {
        let s = w[i].sqrt();
        xw.row_mut(i).scale_mut(s);
        yw[i] *= s;
    }
    check_rank(&xw)?;
    Ok(qr_solve(&xw, &yw).0)
}

/// Columns of `x` selected by `mask`.
pub fn select_columns(x: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    let cols: Vec<usize> = (0..x.ncols()).filter(|&j| mask[j]).collect();
    x.select_columns(&cols)
}

/// Backward elimination: repeatedly drops the predictor with the largest
/// p-value at or above `alpha` and refits. Column 0 (the intercept) is never
/// dropped; columns already false in `start` stay out. Ties go to the
/// earlier column.
pub fn stepwise_select_from(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64, start: &[bool]) -> Result<Vec<bool>> {
    let mut mask = start.to_vec();
    mask[0] = true;
    loop {
        let fit = fit_ols(&select_columns(x, &mask), y)?;
        let included: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
        let mut worst: Option<(usize, f64)> = None;
        for (k, &j) in included.iter().enumerate().skip(1) {
            let p = fit.p_values[k];
            if p >= alpha && worst.is_none_or(|(_, w)| p > w) {
                worst = Some((j, p));
            }
        }
        match worst {
            Some((j, _)) => mask[j] = false,
            None => return Ok(mask),
        }
    }
}

/// [`stepwise_select_from`] starting with every column included.
pub fn stepwise_select(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<Vec<bool>> {
    stepwise_select_from(x, y, alpha, &vec![true; x.ncols()])
}
