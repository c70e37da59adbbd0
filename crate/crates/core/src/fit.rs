//! Least-squares lines in log-log coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the fit (log units).
    pub residual: f64,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares `y ≈ a + b x`.
pub fn line(pts: &[(f64, f64)]) -> Result<LineFit> {
    if pts.len() < 2 {
        return Err(Error::Invalid(format!("need at least 2 points for a fit, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Invalid("fit abscissae are all equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(LineFit { slope, intercept, residual: (ss / n).sqrt() })
}

/// Fit `log y ≈ a + b log x`; all entries must be positive.
pub fn loglog(pts: &[(f64, f64)]) -> Result<LineFit> {
    if let Some(p) = pts.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(Error::Domain(format!("log-log fit needs positive entries, got {p:?}")));
    }
    let l: Vec<(f64, f64)> = pts.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    line(&l)
}
