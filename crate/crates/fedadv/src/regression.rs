//! Log-linear least squares: accuracy as a + b with a on ln(sharing level).

use crate::error::{Error, Result};
use serde::Serialize;

/// Result of fitting y = a * ln(x) + b.
#[derive(Debug, Clone, Serialize)]
pub struct RegressionFit {
    pub a: f64,
    pub b: f64,
    /// 1 - SS_res / SS_tot; 1.0 when the targets are constant and matched
    /// exactly, -inf possible for fits worse than the mean.
    pub r_squared: f64,
    /// Declared convention for x ("percent" or "fraction"); recorded so a
    /// report states which parameterization produced the coefficients.
    pub x_domain: String,
    /// Points dropped because x <= 0 (ln undefined).
    pub excluded: usize,
}

/// Ordinary least squares of y on ln(x). Points with x <= 0 are excluded
/// and counted; at least two usable points with distinct x are required.
/// Points are sorted before summation, so the fit is independent of input
/// order bit for bit.
pub fn fit_log_regression(points: &[(f64, f64)], x_domain: &str) -> Result<RegressionFit> {
    let mut usable: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, y)| x > 0.0 && x.is_finite() && y.is_finite())
        .collect();
    let excluded = points.len() - usable.len();
    if usable.len() < 2 {
        return Err(Error::Regression(format!(
            "need at least 2 points with x > 0, have {}",
            usable.len()
        )));
    }
    usable.sort_by(|p, q| p.partial_cmp(q).expect("filtered to finite values"));

    let n = usable.len() as f64;
    let logs: Vec<(f64, f64)> = usable.iter().map(|&(x, y)| (x.ln(), y)).collect();
    let mean_u = logs.iter().map(|&(u, _)| u).sum::<f64>() / n;
    let mean_y = logs.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|&(u, _)| (u - mean_u).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Regression(
            "all x values are identical; slope is undefined".into(),
        ));
    }
    let sxy: f64 = logs
        .iter()
        .map(|&(u, y)| (u - mean_u) * (y - mean_y))
        .sum();
    let a = sxy / sxx;
    let b = mean_y - a * mean_u;
    let ss_res: f64 = logs.iter().map(|&(u, y)| (y - (a * u + b)).powi(2)).sum();
    let ss_tot: f64 = logs.iter().map(|&(_, y)| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RegressionFit {
        a,
        b,
        r_squared,
        x_domain: x_domain.to_string(),
        excluded,
    })
}

/// Evaluates the fitted curve at x.
pub fn predict(fit: &RegressionFit, x: f64) -> f64 {
    fit.a * x.ln() + fit.b
}
