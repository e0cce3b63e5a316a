use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `log magnitude = intercept + slope * log alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Ordinary least squares, or weighted when `weights` is given. The standard
/// error is `sqrt(RSS / (n - 2) / Sxx)` in the (weighted) residual metric.
pub fn fit_loglog_slope(alphas: &[f64], magnitudes: &[f64], weights: Option<&[f64]>) -> Result<SlopeFit> {
    let n = alphas.len();
    if n != magnitudes.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::invalid("slope fit inputs have different lengths"));
    }
    if n < 3 {
        return Err(Error::invalid(format!("slope fit needs at least 3 points, got {n}")));
    }
    if alphas.iter().chain(magnitudes).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("slope fit needs positive finite stepsizes and magnitudes"));
    }
    if let Some(w) = weights {
        if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("slope fit weights must be positive"));
        }
    }
    let x: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
    let y: Vec<f64> = magnitudes.iter().map(|m| m.ln()).collect();
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w[i] * (x[i] - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("slope fit needs at least two distinct stepsizes"));
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    Ok(SlopeFit {
        slope,
        stderr: (rss / (n - 2) as f64 / sxx).sqrt(),
        intercept,
        points: n,
    })
}
