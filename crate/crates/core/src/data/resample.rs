//! Periodic cubic spline interpolation on a uniform grid.

use crate::error::{GaitError, Result};

/// C² periodic cubic spline through `values[i]` at abscissa `i`, with period
/// `values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCubic {
    values: Vec<f64>,
    second: Vec<f64>,
}

impl PeriodicCubic {
    pub fn new(values: &[f64]) -> Result<PeriodicCubic> {
        let m = values.len();
        if m < 4 {
            return Err(GaitError::InvariantViolation(format!(
                "periodic interpolation needs at least 4 samples, got {m}"
            )));
        }
        let rhs: Vec<f64> = (0..m)
            .map(|i| 6.0 * (values[(i + 1) % m] - 2.0 * values[i] + values[(i + m - 1) % m]))
            .collect();
        let second = solve_cyclic_tridiagonal(1.0, 4.0, 1.0, &rhs);
        Ok(PeriodicCubic {
            values: values.to_vec(),
            second,
        })
    }

    pub fn period(&self) -> usize {
        self.values.len()
    }

    fn locate(&self, u: f64) -> (usize, usize, f64) {
        let m = self.values.len();
        let u = u.rem_euclid(m as f64);
        let i = (u.floor() as usize).min(m - 1);
        (i, (i + 1) % m, u - i as f64)
    }

    /// Value at abscissa `u` (in sample units, wrapped periodically).
    pub fn eval(&self, u: f64) -> f64 {
        let (i, j, s) = self.locate(u);
        let r = 1.0 - s;
        r * self.values[i]
            + s * self.values[j]
            + ((r * r * r - r) * self.second[i] + (s * s * s - s) * self.second[j]) / 6.0
    }

    /// Value and first two derivatives with respect to `u`.
    pub fn eval_derivs(&self, u: f64) -> [f64; 3] {
        let (i, j, s) = self.locate(u);
        let r = 1.0 - s;
        let (mi, mj) = (self.second[i], self.second[j]);
        let y = r * self.values[i] + s * self.values[j] + ((r * r * r - r) * mi + (s * s * s - s) * mj) / 6.0;
        let dy = self.values[j] - self.values[i] + ((1.0 - 3.0 * r * r) * mi + (3.0 * s * s - 1.0) * mj) / 6.0;
        let ddy = r * mi + s * mj;
        [y, dy, ddy]
    }
}

/// Solves a cyclic tridiagonal system with constant bands
/// (`lower`, `diag`, `upper`, plus the two corner entries) via
/// Sherman–Morrison.
fn solve_cyclic_tridiagonal(lower: f64, diag: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let alpha = upper; // A[n-1][0]
    let beta = lower; // A[0][n-1]
    let gamma = -diag;
    let mut b = vec![diag; n];
    b[0] = diag - gamma;
    b[n - 1] = diag - alpha * beta / gamma;
    let x = solve_tridiagonal(lower, &b, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(lower, &b, upper, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn solve_tridiagonal(lower: f64, diag: &[f64], upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower * c[i - 1];
        c[i] = upper / denom;
        d[i] = (rhs[i] - lower * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Resamples one cycle onto `grid_size` points over 0..=100 %.
///
/// `samples` must be uniform in time and include the closing sample (the
/// start of the next cycle), so the period is `samples.len() - 1`. The
/// output's last sample repeats the first.
pub fn resample_cycle(samples: &[f64], grid_size: usize) -> Result<Vec<f64>> {
    if samples.len() < 5 {
        return Err(GaitError::InvariantViolation(format!(
            "cycle has {} samples, need at least 5 to resample",
            samples.len()
        )));
    }
    if grid_size < 2 {
        return Err(GaitError::Config(format!("grid size {grid_size} too small")));
    }
    let period = samples.len() - 1;
    let spline = PeriodicCubic::new(&samples[..period])?;
    let mut out: Vec<f64> = (0..grid_size - 1)
        .map(|j| spline.eval(j as f64 * period as f64 / (grid_size - 1) as f64))
        .collect();
    out.push(out[0]);
    Ok(out)
}
