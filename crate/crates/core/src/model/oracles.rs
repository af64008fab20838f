//! Closed-form right-hand sides of moment and increment bounds.
//!
//! Bounds on the transformed process refer to the unit-noise equation
//! `dZ = g(Z) dt + dW`. Expectations of the initial data (`e0`, the
//! `term_norms`) are supplied by the caller.

use statrs::function::gamma::gamma;

use super::{CirParams, GrowthConstants};
use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

fn check_nonneg(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            field,
            format!("must be finite and >= 0, got {v}"),
        ))
    }
}

fn check_pos(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            field,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

/// `exp(t [1 + (q-2)^+ + 2c]) * e0`, a ceiling for `E[(1 + Z_t^2)^{q/2}]`
/// whenever `z g(z) <= c (1 + z^2)`.
pub fn positive_moment_bound_oracle(q: f64, t: f64, c: f64, e0: f64) -> Result<f64> {
    check_pos("q", q)?;
    check_nonneg("t", t)?;
    check_nonneg("c", c)?;
    check_nonneg("e0", e0)?;
    Ok((t * (1.0 + (q - 2.0).max(0.0) + 2.0 * c)).exp() * e0)
}

/// Ceiling for `||X_t||_{L^p}` of the CIR process itself.
pub fn cir_moment_bound_oracle(params: &CirParams, p: f64, t: f64) -> Result<f64> {
    params.validate()?;
    check_pos("p", p)?;
    check_nonneg("t", t)?;
    Ok(GrowthConstants::for_cir(params).moment_bound(params.x0, p, t))
}

/// Parameters of the exponential Lyapunov-type functional for inverse
/// moments: `alpha` of the drift, inverse order `p`, weights `rho > rho_tilde`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovParams {
    pub alpha: f64,
    pub p: f64,
    pub rho: f64,
    pub rho_tilde: f64,
}

impl LyapunovParams {
    pub fn validate(&self) -> Result<()> {
        check_pos("alpha", self.alpha)?;
        let upper = (1.0 + 2.0 * self.alpha).min(2.0);
        if !(self.p > 0.0 && self.p < upper) {
            return Err(Error::validation(
                "p",
                format!("must lie in (0, {upper}), got {}", self.p),
            ));
        }
        check_pos("rho_tilde", self.rho_tilde)?;
        if !(self.rho_tilde < self.rho && self.rho.is_finite()) {
            return Err(Error::validation(
                "rho_tilde",
                format!("must be < rho = {}, got {}", self.rho, self.rho_tilde),
            ));
        }
        Ok(())
    }

    /// `2 alpha + 1 - p`.
    pub(crate) fn gap(&self) -> f64 {
        2.0 * self.alpha + 1.0 - self.p
    }

    /// Growth rate `(rho'^2 / 2) [rho'^2 / ((rho' - rho~') (2 alpha + 1 - p))]^{(2p-2)/(2-p)}`
    /// with `rho' = scale * rho`, `rho~' = scale * rho_tilde`.
    fn growth_rate(&self, scale: f64) -> f64 {
        let r = scale * self.rho;
        let rt = scale * self.rho_tilde;
        let exponent = (2.0 * self.p - 2.0) / (2.0 - self.p);
        let ratio = r * r / ((r - rt) * self.gap());
        0.5 * r * r * ratio.powf(exponent) / scale
    }
}

/// Ceiling for
/// `E[exp(rho~ (2-p)(alpha + (1-p)/2) int Z^-p - c~ rho (2-p) int Z^(c-p) - rho Z_t^(2-p))]`
/// given `e0 = E[exp(-rho Z_0^(2-p))]`.
pub fn exp_inverse_moment_bound_oracle(lp: &LyapunovParams, t: f64, e0: f64) -> Result<f64> {
    lp.validate()?;
    check_nonneg("t", t)?;
    check_nonneg("e0", e0)?;
    Ok((t * lp.growth_rate(1.0)).exp() * e0)
}

/// Ceiling for `|| int_0^t Z_s^-p ds ||_{L^q}`.
///
/// `term_norms = (m1, m2)` with
/// `m1 = || Z_t^(2-p) + int c~ (2-p) Z^(c-p) ds ||_{L^q}` and
/// `m2 = || exp(-rho Z_0^(2-p)) ||_{L^q}`.
pub fn integrated_inverse_moment_bound_oracle(
    lp: &LyapunovParams,
    c: f64,
    c_tilde: f64,
    q: f64,
    t: f64,
    term_norms: (f64, f64),
) -> Result<f64> {
    lp.validate()?;
    if !(c.is_finite() && c >= lp.p) {
        return Err(Error::validation(
            "c",
            format!("must be >= p = {}, got {c}", lp.p),
        ));
    }
    check_nonneg("c_tilde", c_tilde)?;
    check_pos("q", q)?;
    check_nonneg("t", t)?;
    check_nonneg("m1", term_norms.0)?;
    check_nonneg("m2", term_norms.1)?;
    let lead = 2f64.powf(1f64.max(1.0 / q)) / (lp.rho_tilde * (2.0 - lp.p) * lp.gap());
    let growth = t * lp.growth_rate(q);
    Ok(lead * (lp.rho * term_norms.0 + (growth - 1.0).exp() * term_norms.1))
}

/// The exponential moment ceiling is the initial expectation
/// `e0 = E[exp(1 + Z_0^2)]` itself; the time-weighted functional lives in the
/// analysis layer.
pub fn exp_moment_bound_oracle(c: f64, beta_aux: f64, t: f64, e0: f64) -> Result<f64> {
    check_nonneg("c", c)?;
    check_nonneg("beta_aux", beta_aux)?;
    check_nonneg("t", t)?;
    check_nonneg("e0", e0)?;
    Ok(e0)
}

/// Ceiling for `|| sqrt(X_t) - sqrt(X_s) ||_{L^p}` started from `params.x0`.
pub fn sqrt_increment_bound_oracle(params: &CirParams, p: f64, s: f64, t: f64) -> Result<f64> {
    params.validate()?;
    check_pos("p", p)?;
    check_nonneg("s", s)?;
    check_nonneg("t", t)?;
    let CirParams {
        delta,
        gamma,
        beta,
        x0,
    } = *params;
    let half_b2 = 0.5 * beta * beta;
    let lag = (t - s).abs();
    let growth = 1.0 + x0 + s.min(t) * (delta + half_b2 * (p - 1.0).max(0.0));
    let drift_part =
        delta + gamma.max(0.0) * (1.0 + lag * (delta + half_b2 * (0.5 * p - 1.0).max(0.0)));
    let noise_part = beta
        * (p * (p - 1.0)).max(2.0).sqrt()
        * (1.0 + 0.5 * (delta + half_b2 * (p - 1.0).max(1.0))).sqrt();
    Ok(lag.sqrt() * growth * 1f64.max(drift_part + noise_part))
}

/// `E[X_t^-p]` for deterministic `X_0 = x0 > 0` via the Laplace-transform
/// representation
/// ```text
/// 1/Gamma(p) int_0^inf u^(p-1) (k u + 1)^(-nu) exp(-x0 u e^(-gamma t) / (k u + 1)) du,
/// k = beta^2 (1 - e^(-gamma t)) / (2 gamma).
/// ```
pub fn inverse_moment_exact_cir(params: &CirParams, p: f64, t: f64) -> Result<f64> {
    params.validate()?;
    check_pos("p", p)?;
    check_nonneg("t", t)?;
    let nu = params.feller_index();
    if !(p < nu) {
        return Err(Error::Regime(format!(
            "E[X^-p] is infinite for p >= 2 delta / beta^2 = {nu} (p = {p})"
        )));
    }
    if !(params.x0 > 0.0) {
        return Err(Error::Domain("inverse moments need x0 > 0".into()));
    }
    let gt = params.gamma * t;
    let kappa = if gt.abs() < 1e-8 {
        0.5 * params.beta * params.beta * t
    } else {
        0.5 * params.beta * params.beta * (-(-gt).exp_m1() / params.gamma)
    };
    let shift = params.x0 * (-gt).exp();
    let tol = Tolerance {
        abs: 1e-10,
        rel: 1e-13,
        max_intervals: 4000,
    };

    // [0, 1] with u = s^(1/p): u^(p-1) du = ds / p.
    let head = quadrature::integrate(
        |s: f64| {
            let u = s.powf(1.0 / p);
            (-nu * (kappa * u).ln_1p() - shift * u / (kappa * u + 1.0)).exp()
        },
        0.0,
        1.0,
        tol,
    )?;
    // [1, inf) with u = 1/w, then w = s^(1/a), a = nu - p:
    // u^(p-1) (k u + 1)^-nu du = w^(a-1) (k + w)^-nu dw = (k + w)^-nu ds / a.
    let a = nu - p;
    let tail = quadrature::integrate(
        |s: f64| {
            let v = kappa + s.powf(1.0 / a);
            if v > 0.0 {
                (-nu * v.ln() - shift / v).exp()
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )?;
    Ok((head.value / p + tail.value / a) / gamma(p))
}
