//! Ordinary least-squares regression over a time window.

use super::ForecastError;

/// Fitted line `value = slope * t + intercept`, t in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares fit of (timestamp, value) pairs.
///
/// Uses the centered form, which is numerically better conditioned than the
/// raw normal equations for large absolute timestamps.
pub fn fit_linear(window: &[(i64, f64)]) -> Result<LinearModel, ForecastError> {
    if window.len() < 2 {
        return Err(ForecastError::InsufficientWindow { have: window.len(), need: 2 });
    }
    let n = window.len() as f64;
    let t_mean = window.iter().map(|&(t, _)| t as f64).sum::<f64>() / n;
    let y_mean = window.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(t, y) in window {
        let dt = t as f64 - t_mean;
        sxx += dt * dt;
        sxy += dt * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(ForecastError::DegenerateWindow);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    if !(slope.is_finite() && intercept.is_finite()) {
        return Err(ForecastError::DegenerateWindow);
    }
    Ok(LinearModel { slope, intercept })
}

pub fn predict_linear(model: &LinearModel, t_future: i64) -> f64 {
    model.slope * t_future as f64 + model.intercept
}
