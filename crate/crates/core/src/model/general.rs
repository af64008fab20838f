//! Numeric Lamperti transform for scalar diffusions
//! `dX = mu(X) dt + sigma(X) dW` on `[0, inf)` with `sigma(0) = 0`.
//!
//! `phi(y) = int_0^y 1/sigma` is integrated in the variable `w = sqrt(z)`,
//! where the square-root singularity at the origin disappears.

use std::fmt;

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

pub struct GeneralDiffusion {
    pub mu: ScalarFn,
    pub sigma: ScalarFn,
    /// Derivative of `sigma^2`.
    pub sigmasq_deriv: ScalarFn,
    /// Upper end of the tabulated state range.
    pub domain_cap: f64,
}

impl fmt::Debug for GeneralDiffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralDiffusion")
            .field("domain_cap", &self.domain_cap)
            .finish_non_exhaustive()
    }
}

impl GeneralDiffusion {
    pub fn new(
        mu: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigmasq_deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domain_cap: f64,
    ) -> Self {
        Self {
            mu: Box::new(mu),
            sigma: Box::new(sigma),
            sigmasq_deriv: Box::new(sigmasq_deriv),
            domain_cap,
        }
    }

    /// `(mu - (sigma^2)'/4) / sigma` at state `y`.
    fn transformed_drift_at(&self, y: f64) -> f64 {
        ((self.mu)(y) - 0.25 * (self.sigmasq_deriv)(y)) / (self.sigma)(y)
    }
}

/// Tabulated transform together with point evaluators.
#[derive(Debug)]
pub struct GeneralLamperti {
    diffusion: GeneralDiffusion,
    x_nodes: Vec<f64>,
    phi_nodes: Vec<f64>,
    lipschitz_l: f64,
    alpha: f64,
}

const PHI_TOL: Tolerance = Tolerance {
    abs: 1e-14,
    rel: 1e-14,
    max_intervals: 400,
};

fn phi_segment(diff: &GeneralDiffusion, lo: f64, hi: f64) -> Result<f64> {
    let sigma = &diff.sigma;
    let est = quadrature::integrate(
        |w: f64| {
            let s = sigma(w * w);
            if w == 0.0 {
                0.0
            } else {
                2.0 * w / s
            }
        },
        lo.sqrt(),
        hi.sqrt(),
        PHI_TOL,
    )?;
    Ok(est.value)
}

/// Builds the transform of `diff` on `resolution + 1` nodes spaced
/// quadratically over `[0, domain_cap]`.
///
/// The drift of the transformed equation is
/// `g(z) = ((mu - (sigma^2)'/4) / sigma)(phi^-1(z))`; `lipschitz_l` is the
/// positive part of the largest finite-difference slope of `g` between
/// consecutive nodes, inflated by 5%.
pub fn general_lamperti(diff: GeneralDiffusion, resolution: usize) -> Result<GeneralLamperti> {
    if resolution < 2 {
        return Err(Error::validation("resolution", "need at least 2 segments"));
    }
    if !(diff.domain_cap.is_finite() && diff.domain_cap > 0.0) {
        return Err(Error::validation(
            "domain_cap",
            format!("must be > 0, got {}", diff.domain_cap),
        ));
    }
    let s0 = (diff.sigma)(0.0);
    if s0.abs() > 1e-12 {
        return Err(Error::TransformInvalid(format!(
            "sigma(0) must vanish, got {s0}"
        )));
    }
    let mu0 = (diff.mu)(0.0);
    let d0 = (diff.sigmasq_deriv)(0.0);
    if !(d0 > 0.0) {
        return Err(Error::TransformInvalid(format!(
            "(sigma^2)'(0) must be > 0, got {d0}"
        )));
    }
    if !(mu0 > 0.25 * d0) {
        return Err(Error::TransformInvalid(format!(
            "need mu(0) > (sigma^2)'(0) / 4, got mu(0) = {mu0}, (sigma^2)'(0) / 4 = {}",
            0.25 * d0
        )));
    }

    let n = resolution;
    let x_nodes: Vec<f64> = (0..=n)
        .map(|i| {
            let u = i as f64 / n as f64;
            diff.domain_cap * u * u
        })
        .collect();
    for &x in &x_nodes[1..] {
        let s = (diff.sigma)(x);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::TransformInvalid(format!(
                "sigma({x}) = {s} is not positive"
            )));
        }
    }
    let mut phi_nodes = Vec::with_capacity(n + 1);
    phi_nodes.push(0.0);
    for w in x_nodes.windows(2) {
        let prev = *phi_nodes.last().expect("seeded");
        phi_nodes.push(prev + phi_segment(&diff, w[0], w[1])?);
    }

    let g: Vec<f64> = x_nodes[1..]
        .iter()
        .map(|&x| diff.transformed_drift_at(x))
        .collect();
    let z = &phi_nodes[1..];
    let max_slope = g
        .windows(2)
        .zip(z.windows(2))
        .map(|(gw, zw)| (gw[1] - gw[0]) / (zw[1] - zw[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let lipschitz_l = 1.05 * max_slope.max(0.0);

    Ok(GeneralLamperti {
        alpha: 2.0 * mu0 / d0 - 0.5,
        diffusion: diff,
        x_nodes,
        phi_nodes,
        lipschitz_l,
    })
}

impl GeneralLamperti {
    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    /// `phi` at the tabulation nodes.
    pub fn phi_table(&self) -> &[f64] {
        &self.phi_nodes
    }

    pub fn lipschitz_l(&self) -> f64 {
        self.lipschitz_l
    }

    /// Limit of `z g(z)` at the origin, `2 mu(0) / (sigma^2)'(0) - 1/2`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn z_max(&self) -> f64 {
        *self.phi_nodes.last().expect("non-empty")
    }

    pub fn phi(&self, y: f64) -> Result<f64> {
        let cap = self.diffusion.domain_cap;
        if !(0.0..=cap).contains(&y) {
            return Err(Error::Domain(format!(
                "phi evaluated at {y} outside [0, {cap}]"
            )));
        }
        let i = self.x_nodes.partition_point(|&x| x <= y).saturating_sub(1);
        Ok(self.phi_nodes[i] + phi_segment(&self.diffusion, self.x_nodes[i], y)?)
    }

    pub fn phi_inv(&self, z: f64) -> Result<f64> {
        if !(0.0..=self.z_max()).contains(&z) {
            return Err(Error::Domain(format!(
                "phi^-1 evaluated at {z} outside [0, {}]",
                self.z_max()
            )));
        }
        let i = self
            .phi_nodes
            .partition_point(|&p| p <= z)
            .saturating_sub(1);
        if i + 1 >= self.phi_nodes.len() {
            return Ok(self.diffusion.domain_cap);
        }
        if z == self.phi_nodes[i] {
            return Ok(self.x_nodes[i]);
        }
        // Safeguarded Newton in w = sqrt(y) on the bracketing segment.
        let base = self.x_nodes[i];
        let target = z - self.phi_nodes[i];
        let (mut lo, mut hi) = (base.sqrt(), self.x_nodes[i + 1].sqrt());
        let frac = target / (self.phi_nodes[i + 1] - self.phi_nodes[i]);
        let mut w = lo + frac * (hi - lo);
        for _ in 0..100 {
            let y = w * w;
            let f = phi_segment(&self.diffusion, base, y)? - target;
            if f.abs() <= 1e-15 * z.max(1e-300) {
                return Ok(y);
            }
            if f > 0.0 {
                hi = w;
            } else {
                lo = w;
            }
            let slope = 2.0 * w / (self.diffusion.sigma)(y);
            let newton = w - f / slope;
            w = if slope.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(w * w);
            }
        }
        Ok(w * w)
    }

    /// Transformed drift `g(z)`.
    pub fn drift(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::Domain(format!(
                "transformed drift needs z > 0, got {z}"
            )));
        }
        let y = self.phi_inv(z)?;
        Ok(self.diffusion.transformed_drift_at(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lamperti_phi, transformed_drift, CirParams, TransformedModel};

    fn cir_diffusion(p: CirParams, cap: f64) -> GeneralDiffusion {
        let CirParams {
            delta, gamma, beta, ..
        } = p;
        GeneralDiffusion::new(
            move |x| delta - gamma * x,
            move |x: f64| beta * x.sqrt(),
            move |_| beta * beta,
            cap,
        )
    }

    #[test]
    fn cir_reproduces_closed_forms() {
        let p = CirParams::new(0.375, 1.0, 0.8, 1.0).unwrap();
        let t = general_lamperti(cir_diffusion(p, 25.0), 64).unwrap();
        let m = TransformedModel::new(p.alpha(), p.gamma).unwrap();
        assert!((t.alpha() - p.alpha()).abs() < 1e-14);
        for k in 1..=100 {
            let y = 25.0 * (k as f64 / 100.0).powi(3);
            let phi = t.phi(y).unwrap();
            let exact = lamperti_phi(&p, y).unwrap();
            assert!((phi - exact).abs() <= 1e-8 * exact, "phi({y})");
            let g = t.drift(exact).unwrap();
            let g_exact = transformed_drift(&m, exact).unwrap();
            assert!(
                (g - g_exact).abs() <= 1e-8 * g_exact.abs(),
                "g({exact}): {g} vs {g_exact}"
            );
        }
        // g' = -alpha/z^2 - gamma/2 < 0 for gamma > 0
        assert_eq!(t.lipschitz_l(), 0.0);
    }

    #[test]
    fn lipschitz_for_negative_gamma() {
        let p = CirParams::new(0.6, -1.0, 1.0, 1.0).unwrap();
        let t = general_lamperti(cir_diffusion(p, 50.0), 400).unwrap();
        let exact = 0.5;
        assert!(t.lipschitz_l() >= exact * 0.99);
        assert!(t.lipschitz_l() <= exact * 1.05 + 1e-12);
    }

    #[test]
    fn equality_at_threshold_is_invalid() {
        let diff = GeneralDiffusion::new(|_| 0.25, |x: f64| x.sqrt(), |_| 1.0, 10.0);
        assert!(matches!(
            general_lamperti(diff, 16),
            Err(Error::TransformInvalid(_))
        ));
    }

    #[test]
    fn inverse_roundtrip() {
        let p = CirParams::new(1.1, 0.3, 1.3, 1.0).unwrap();
        let t = general_lamperti(cir_diffusion(p, 9.0), 32).unwrap();
        for k in 0..50 {
            let y = 9.0 * k as f64 / 49.0;
            let back = t.phi_inv(t.phi(y).unwrap()).unwrap();
            assert!((back - y).abs() <= 1e-12 * (1.0 + y));
        }
    }
}
