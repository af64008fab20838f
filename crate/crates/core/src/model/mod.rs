//! CIR parameters, regime classification, Lamperti transforms and the
//! closed-form moment bounds used as ceilings for Monte Carlo estimates.
//!
//! The process is
//! ```text
//! dX_t = (delta - gamma X_t) dt + beta sqrt(X_t) dW_t,   X_0 = x0.
//! ```
//! Under `z = (2/beta) sqrt(x)` it becomes an additive-noise equation
//! ```text
//! dZ_t = (alpha / Z_t - gamma Z_t / 2) dt + dW_t,   alpha = 2 delta / beta^2 - 1/2.
//! ```

mod general;
mod oracles;

pub use general::{general_lamperti, GeneralDiffusion, GeneralLamperti};
pub use oracles::{
    cir_moment_bound_oracle, exp_inverse_moment_bound_oracle, exp_moment_bound_oracle,
    integrated_inverse_moment_bound_oracle, inverse_moment_exact_cir, positive_moment_bound_oracle,
    sqrt_increment_bound_oracle, LyapunovParams,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters `(delta, gamma, beta, x0)` of the CIR equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub delta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub x0: f64,
}

impl CirParams {
    pub fn new(delta: f64, gamma: f64, beta: f64, x0: f64) -> Result<Self> {
        let p = Self {
            delta,
            gamma,
            beta,
            x0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::validation(
                "beta",
                format!("must be > 0, got {}", self.beta),
            ));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::validation(
                "delta",
                format!("must be >= 0, got {}", self.delta),
            ));
        }
        if !self.gamma.is_finite() {
            return Err(Error::validation(
                "gamma",
                format!("must be finite, got {}", self.gamma),
            ));
        }
        if !(self.x0.is_finite() && self.x0 >= 0.0) {
            return Err(Error::validation(
                "x0",
                format!("must be >= 0, got {}", self.x0),
            ));
        }
        Ok(())
    }

    /// `nu = 2 delta / beta^2`.
    pub fn feller_index(&self) -> f64 {
        2.0 * self.delta / (self.beta * self.beta)
    }

    /// Constant of the transformed drift, `nu - 1/2`.
    pub fn alpha(&self) -> f64 {
        self.feller_index() - 0.5
    }

    /// Initial value in transformed coordinates.
    pub fn z0(&self) -> f64 {
        2.0 * self.x0.sqrt() / self.beta
    }

    /// The additive-noise model obtained through the Lamperti transform.
    pub fn transformed(&self) -> Result<TransformedModel> {
        self.validate()?;
        TransformedModel::new(self.alpha(), self.gamma)
    }

    pub(crate) fn require_scheme(&self) -> Result<()> {
        self.validate()?;
        if !(self.alpha() > 0.0) {
            return Err(Error::Regime(format!(
                "the implicit square-root scheme needs 4 delta > beta^2 (got 4 delta = {}, beta^2 = {})",
                4.0 * self.delta,
                self.beta * self.beta
            )));
        }
        Ok(())
    }

    pub(crate) fn require_rate_regime(&self) -> Result<()> {
        self.validate()?;
        let nu = self.feller_index();
        if nu <= 0.5 {
            return Err(Error::Regime(format!(
                "strong rate requires 2 delta / beta^2 > 1/2 (got {nu})"
            )));
        }
        Ok(())
    }
}

/// Boundary and applicability summary of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub feller_index: f64,
    pub boundary_accessible: bool,
    pub alpha: f64,
    pub scheme_applicable: bool,
    pub theorem_applicable: bool,
    /// Largest admissible step `2 / gamma^-`; infinite when `gamma >= 0`.
    pub max_step_reversion: f64,
}

pub fn classify_regime(params: &CirParams) -> Result<RegimeReport> {
    params.validate()?;
    let nu = params.feller_index();
    let gamma_minus = (-params.gamma).max(0.0);
    Ok(RegimeReport {
        feller_index: nu,
        boundary_accessible: nu < 1.0,
        alpha: nu - 0.5,
        scheme_applicable: nu - 0.5 > 0.0,
        theorem_applicable: nu > 0.5,
        max_step_reversion: if gamma_minus > 0.0 {
            2.0 / gamma_minus
        } else {
            f64::INFINITY
        },
    })
}

/// Limit `eps -> 0` of the strong-rate exponent, `(min(nu, 1) - 1/2) / p`.
pub fn theoretical_rate(params: &CirParams, p: f64) -> Result<f64> {
    params.require_rate_regime()?;
    if !(p >= 1.0) {
        return Err(Error::validation(
            "p",
            format!("moment order must be >= 1, got {p}"),
        ));
    }
    Ok((params.feller_index().min(1.0) - 0.5) / p)
}

/// `phi(x) = (2 / beta) sqrt(x)`.
pub fn lamperti_phi(params: &CirParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "lamperti transform needs x >= 0, got {x}"
        )));
    }
    Ok(2.0 * x.sqrt() / params.beta)
}

/// Inverse transform `beta^2 z^2 / 4`.
pub fn lamperti_inv(params: &CirParams, z: f64) -> f64 {
    let s = 0.5 * params.beta * z;
    s * s
}

/// Additive-noise model `dZ = g(Z) dt + dW` with `g(z) = alpha / z - gamma z / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedModel {
    pub alpha: f64,
    pub gamma: f64,
}

impl TransformedModel {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Regime(format!(
                "transformed drift needs alpha > 0 (4 delta > beta^2), got alpha = {alpha}"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::validation("gamma", "must be finite"));
        }
        Ok(Self { alpha, gamma })
    }

    /// One-sided Lipschitz constant `(-gamma / 2)^+`, which is exactly
    /// `[sup_z g'(z)]^+` for this drift.
    pub fn lipschitz_l(&self) -> f64 {
        (-0.5 * self.gamma).max(0.0)
    }

    #[inline]
    pub fn drift(&self, z: f64) -> f64 {
        self.alpha / z - 0.5 * self.gamma * z
    }

    /// Closed-form root of `z' = z + g(z') h + dw`.
    #[inline]
    pub fn implicit_step(&self, z: f64, dw: f64, h: f64) -> f64 {
        let denom = 2.0 + self.gamma * h;
        positive_quadratic_root(z + dw, 2.0 * self.alpha * h * denom, denom)
    }
}

pub fn transformed_drift(model: &TransformedModel, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!(
            "transformed drift needs z > 0, got {z}"
        )));
    }
    Ok(model.drift(z))
}

/// `(b + sqrt(b^2 + c)) / denom` for `c > 0`, evaluated without
/// cancellation when `b < 0`.
#[inline]
pub(crate) fn positive_quadratic_root(b: f64, c: f64, denom: f64) -> f64 {
    let s = (b * b + c).sqrt();
    if b >= 0.0 {
        (b + s) / denom
    } else {
        c / ((s - b) * denom)
    }
}

/// Growth constants of a drift/diffusion pair:
/// `mu(z) <= c1 + c2 z`, `sigma(z)^2 <= 2 (c3 z + c4 z^2)`,
/// `|mu(z)| <= c5 + c6 z^c7`, `sigma(z) >= c8 sqrt(z) / (1 + c10 z^c9)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
}

impl GrowthConstants {
    /// Instantiation for CIR: `c1 = delta`, `c2 = gamma^-`, `c3 = beta^2 / 2`,
    /// `c4 = 0`, `|mu| <= delta + |gamma| z`, `sigma = beta sqrt(z)`.
    pub fn for_cir(params: &CirParams) -> Self {
        Self {
            c1: params.delta,
            c2: (-params.gamma).max(0.0),
            c3: 0.5 * params.beta * params.beta,
            c4: 0.0,
            c5: params.delta,
            c6: params.gamma.abs(),
            c7: 1.0,
            c8: params.beta,
            c9: 0.0,
            c10: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c1, self.c2, self.c3, self.c4, self.c5, self.c6, self.c7, self.c8, self.c9,
            self.c10,
        ];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::validation(
                "growth constants",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }

    /// `||X_t||_{L^p} <= e^{t (c2 + c4 (p-1)^+)} [x + t (c1 + c3 (p-1)^+)]`.
    pub fn moment_bound(&self, x: f64, p: f64, t: f64) -> f64 {
        let pm = (p - 1.0).max(0.0);
        (t * (self.c2 + self.c4 * pm)).exp() * (x + t * (self.c1 + self.c3 * pm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(delta: f64, gamma: f64, beta: f64) -> CirParams {
        CirParams::new(delta, gamma, beta, 1.0).unwrap()
    }

    #[test]
    fn classify_inaccessible() {
        let r = classify_regime(&params(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(r.feller_index, 2.0);
        assert!(!r.boundary_accessible);
        assert_eq!(r.alpha, 1.5);
        assert!(r.max_step_reversion.is_infinite());
    }

    #[test]
    fn classify_accessible() {
        let r = classify_regime(&params(0.375, 1.0, 1.0)).unwrap();
        assert_eq!(r.feller_index, 0.75);
        assert!(r.boundary_accessible);
        assert_eq!(r.alpha, 0.25);
        assert!(r.scheme_applicable);
        assert!(r.theorem_applicable);
    }

    #[test]
    fn classify_below_scheme_threshold() {
        let r = classify_regime(&params(0.2, 0.0, 1.0)).unwrap();
        assert!((r.feller_index - 0.4).abs() < 1e-15);
        assert!(!r.theorem_applicable);
        assert!(!r.scheme_applicable);
    }

    #[test]
    fn classify_rejects_bad_fields() {
        let bad = CirParams {
            delta: 1.0,
            gamma: 0.0,
            beta: 0.0,
            x0: 1.0,
        };
        match classify_regime(&bad) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "beta"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = CirParams {
            delta: -0.1,
            ..params(1.0, 0.0, 1.0)
        };
        match classify_regime(&bad) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "delta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_step_for_negative_gamma() {
        let r = classify_regime(&params(1.0, -4.0, 1.0)).unwrap();
        assert_eq!(r.max_step_reversion, 0.5);
    }

    #[test]
    fn rate_exponents() {
        let p = params(0.375, 1.0, 1.0);
        assert_eq!(theoretical_rate(&p, 1.0).unwrap(), 0.25);
        assert_eq!(theoretical_rate(&p, 2.0).unwrap(), 0.125);
        let p = params(0.75, 1.0, 1.0);
        assert_eq!(theoretical_rate(&p, 2.0).unwrap(), 0.25);
        assert!(matches!(
            theoretical_rate(&params(0.2, 1.0, 1.0), 1.0),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn phi_values() {
        let p2 = CirParams::new(1.0, 0.0, 2.0, 0.0).unwrap();
        assert_eq!(lamperti_phi(&p2, 4.0).unwrap(), 2.0);
        let p1 = CirParams::new(1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(lamperti_phi(&p1, 0.0).unwrap(), 0.0);
        let ph = CirParams::new(1.0, 0.0, 0.5, 0.0).unwrap();
        assert_eq!(lamperti_phi(&ph, 1.0).unwrap(), 4.0);
        assert!(matches!(lamperti_phi(&p1, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn drift_values() {
        let m = TransformedModel::new(0.25, 0.0).unwrap();
        assert!((transformed_drift(&m, 0.05).unwrap() - 5.0).abs() < 1e-15);
        let m = TransformedModel::new(0.25, 1.0).unwrap();
        assert_eq!(transformed_drift(&m, 1.0).unwrap(), -0.25);
        let m = TransformedModel::new(1.5, -2.0).unwrap();
        assert_eq!(transformed_drift(&m, 2.0).unwrap(), 2.75);
        assert!(matches!(transformed_drift(&m, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn lipschitz_matches_sup_of_derivative() {
        for gamma in [-3.0, -0.5, 0.0, 2.0] {
            let m = TransformedModel::new(0.7, gamma).unwrap();
            // g'(z) = -alpha / z^2 - gamma / 2 increases to -gamma / 2 as z grows.
            let sup = (1..2000)
                .map(|k| {
                    let z = 0.01 * k as f64 * k as f64;
                    -m.alpha / (z * z) - 0.5 * gamma
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((sup.max(0.0) - m.lipschitz_l()).abs() < 1e-6);
        }
    }

    #[test]
    fn z_times_drift_tends_to_alpha() {
        let m = TransformedModel::new(0.3, 5.0).unwrap();
        let z = 1e-9;
        assert!((z * m.drift(z) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn regime_implications_hold_on_a_grid() {
        for i in 0..40 {
            for j in 1..20 {
                let delta = 0.05 * i as f64;
                let beta = 0.15 * j as f64;
                let r = classify_regime(&CirParams::new(delta, 0.3, beta, 1.0).unwrap()).unwrap();
                assert!(!r.theorem_applicable || r.scheme_applicable);
                assert!(!r.scheme_applicable || r.alpha > 0.0);
                assert_eq!(r.boundary_accessible, r.feller_index < 1.0);
            }
        }
    }
}
