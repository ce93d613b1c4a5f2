use serde::{Deserialize, Serialize};

use super::{monte_carlo_risk, ExperimentConfig, RiskReport};
use crate::error::{invalid, Error, Result};
use crate::model::{theoretical_rate, PrivacyBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N,
    K,
    Alpha,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Axis::N),
            "K" | "k" => Ok(Axis::K),
            "alpha" => Ok(Axis::Alpha),
            other => Err(invalid("axis", format!("unknown axis '{other}', expected n, K or alpha"))),
        }
    }
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::N => "n",
            Axis::K => "K",
            Axis::Alpha => "alpha",
        }
    }

    /// `base` with the scanned parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        match self {
            Axis::N => c.n = integral(value, "n")?,
            Axis::K => c.k = integral(value, "K")?,
            Axis::Alpha => c.budget = PrivacyBudget::with_sigma(value, base.budget.sigma())?,
        }
        Ok(c)
    }
}

fn integral(value: f64, name: &'static str) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value <= usize::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(invalid(name, format!("axis value {value} is not a positive integer")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub axis_value: f64,
    pub mse: f64,
    pub mse_stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateScanResult {
    pub axis: Axis,
    pub points: Vec<RatePoint>,
    pub reports: Vec<RiskReport>,
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
    pub r_squared: f64,
    pub predicted_slope: f64,
}

/// Least-squares line through (log x, log y).
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLawFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} x values, {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientPoints(format!("{} points", x.len())));
    }
    if let Some(&bad) = x.iter().find(|v| !(**v > 0.0)) {
        return Err(invalid("axis", format!("value {bad} is not positive")));
    }
    for (&xi, &yi) in x.iter().zip(y) {
        if !(yi > 0.0) || !yi.is_finite() {
            return Err(Error::NonPositiveMse(xi));
        }
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints("all axis values are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(PowerLawFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Log-log slope of `theoretical_rate` over the scanned values.
pub fn predicted_slope(base: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<f64> {
    let rates = values
        .iter()
        .map(|&v| {
            let c = axis.apply(base, v)?;
            theoretical_rate(c.gamma, c.k, c.n, c.budget.alpha())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(fit_power_law(values, &rates)?.slope)
}

/// Monte Carlo risk at each axis value followed by a log-log fit. Every
/// point reuses the base seed.
pub fn rate_scan(base: &ExperimentConfig, axis: Axis, values: &[f64], predicted_slope: f64) -> Result<RateScanResult> {
    if values.len() < 4 {
        return Err(Error::InsufficientPoints(format!("got {} points", values.len())));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) || !(hi / lo >= 8.0) {
        return Err(Error::InsufficientPoints(format!("values span [{lo}, {hi}]")));
    }
    let mut reports = Vec::with_capacity(values.len());
    for &v in values {
        reports.push(monte_carlo_risk(&axis.apply(base, v)?)?);
    }
    let points: Vec<RatePoint> = values
        .iter()
        .zip(&reports)
        .map(|(&v, r)| RatePoint {
            axis_value: v,
            mse: r.mse,
            mse_stderr: r.mse_stderr,
        })
        .collect();
    let mses: Vec<f64> = points.iter().map(|p| p.mse).collect();
    let fit = fit_power_law(values, &mses)?;
    Ok(RateScanResult {
        axis,
        points,
        reports,
        fitted_slope: fit.slope,
        fitted_intercept: fit.intercept,
        r_squared: fit.r_squared,
        predicted_slope,
    })
}
