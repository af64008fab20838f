//! Log-log regression of errors against step sizes.

use serde::Serialize;

use super::stats;
use super::strong::{strong_errors, ErrorReport, StrongErrorSetup};
use crate::error::{Error, Result};
use crate::model::theoretical_rate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    pub fitted_slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    /// Half-width of the central 95% bootstrap interval of the slope.
    pub slope_confidence_halfwidth: Option<f64>,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    (slope, intercept, (ss / n).sqrt())
}

/// Least-squares slope of `log(error)` against `log(h)`. Two points are
/// accepted and fit exactly.
pub fn fit_rate(h: &[f64], errors: &[f64]) -> Result<RateReport> {
    if h.len() != errors.len() {
        return Err(Error::validation("errors", "length differs from h"));
    }
    if h.len() < 2 {
        return Err(Error::validation(
            "h",
            format!("need at least 2 step sizes, got {}", h.len()),
        ));
    }
    if let Some(bad) = h
        .iter()
        .chain(errors)
        .find(|v| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::validation(
            "errors",
            format!("steps and errors must be > 0, got {bad}"),
        ));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::validation("h", "all step sizes are equal"));
    }
    let (fitted_slope, intercept, residual) = least_squares(&x, &y);
    Ok(RateReport {
        h: h.to_vec(),
        errors: errors.to_vec(),
        fitted_slope,
        intercept,
        residual,
        slope_confidence_halfwidth: None,
    })
}

/// [`fit_rate`] plus a bootstrap band from resampled error vectors, each of
/// which is refit.
pub fn fit_rate_bootstrap(h: &[f64], errors: &[f64], resampled: &[Vec<f64>]) -> Result<RateReport> {
    let mut report = fit_rate(h, errors)?;
    let slopes: Vec<f64> = resampled
        .iter()
        .filter_map(|e| fit_rate(h, e).ok().map(|r| r.fitted_slope))
        .collect();
    if slopes.len() >= 2 {
        report.slope_confidence_halfwidth =
            Some(0.5 * (stats::quantile(&slopes, 0.975) - stats::quantile(&slopes, 0.025)));
    }
    Ok(report)
}

/// Full rate experiment: errors on `h_list`, the fitted slope, and the
/// exponent predicted for `p`.
#[derive(Debug, Clone, Serialize)]
pub struct RateStudy {
    pub errors: Vec<ErrorReport>,
    pub rate: RateReport,
    /// Fit of the node-only errors.
    pub node_rate: RateReport,
    pub theoretical_rate: f64,
}

/// Checks the convergence-theorem hypotheses: `2 delta / beta^2 > 1/2`,
/// `p >= 1` and every step below `1 / (2 gamma^-)`.
pub fn check_rate_preconditions(setup: &StrongErrorSetup, h_list: &[f64]) -> Result<()> {
    setup.params.validate()?;
    setup.params.require_rate_regime()?;
    theoretical_rate(&setup.params, setup.p)?;
    let gm = (-setup.params.gamma).max(0.0);
    for &h in h_list.iter().chain(std::iter::once(&setup.h_ref)) {
        if gm > 0.0 && !(h < 0.5 / gm) {
            return Err(Error::Step(format!(
                "rate experiments need h < 1/(2 gamma^-) = {}, got {h}",
                0.5 / gm
            )));
        }
    }
    Ok(())
}

pub fn rate_study(setup: &StrongErrorSetup, h_list: &[f64]) -> Result<RateStudy> {
    check_rate_preconditions(setup, h_list)?;
    let theoretical_rate = theoretical_rate(&setup.params, setup.p)?;
    let out = strong_errors(setup, h_list)?;
    let errors: Vec<f64> = out.reports.iter().map(|r| r.sup_error_lp).collect();
    let rate = fit_rate_bootstrap(h_list, &errors, &out.resampled_errors)?;
    let node_errors: Vec<f64> = out.reports.iter().map(|r| r.node_error_lp).collect();
    let node_rate = fit_rate_bootstrap(h_list, &node_errors, &out.resampled_node_errors)?;
    Ok(RateStudy {
        errors: out.reports,
        rate,
        node_rate,
        theoretical_rate,
    })
}
