//! Drift-implicit Euler schemes.
//!
//! For CIR the implicit step is solved in closed form:
//! ```text
//! sqrt(Y') = [b + sqrt(b^2 + (2 + gamma h)(delta - beta^2/4) h)] / (2 + gamma h),
//! b = sqrt(Y) + beta/2 dW.
//! ```
//! For a general additive-noise drift `g` the root of
//! `z' - h g(z') = z + dW` is found by bracketing and a safeguarded secant.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{positive_quadratic_root, CirParams, TransformedModel};
use crate::paths::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Implicit scheme in CIR coordinates.
    Scheme,
    /// Implicit scheme in transformed coordinates.
    Transformed,
    /// Fine-step proxy for the exact solution.
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub kind: TrajectoryKind,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: Vec<f64>, kind: TrajectoryKind) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 {
            return Err(Error::validation(
                "values",
                format!(
                    "expected {} node values, got {}",
                    grid.n_steps() + 1,
                    values.len()
                ),
            ));
        }
        Ok(Self { grid, values, kind })
    }

    /// Writes `t,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.node(k), v)?;
        }
        Ok(())
    }
}

/// Precomputed closed-form CIR step for a fixed `h`.
#[derive(Debug, Clone, Copy)]
pub struct CirStepper {
    half_beta: f64,
    denom: f64,
    disc: f64,
}

impl CirStepper {
    pub fn new(params: &CirParams, h: f64) -> Result<Self> {
        params.require_scheme()?;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Step(format!("step must be > 0, got {h}")));
        }
        let denom = 2.0 + params.gamma * h;
        if !(denom > 0.0) {
            return Err(Error::Step(format!(
                "need 2 + gamma h > 0, got {denom} (gamma = {}, h = {h})",
                params.gamma
            )));
        }
        Ok(Self {
            half_beta: 0.5 * params.beta,
            denom,
            disc: denom * (params.delta - 0.25 * params.beta * params.beta) * h,
        })
    }

    #[inline]
    pub fn step(&self, y: f64, dw: f64) -> f64 {
        let r = positive_quadratic_root(y.sqrt() + self.half_beta * dw, self.disc, self.denom);
        r * r
    }

    /// Writes `x0` followed by one node per increment into `out`.
    pub fn run_into(&self, x0: f64, increments: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(increments.len() + 1);
        let mut y = x0;
        out.push(y);
        for &dw in increments {
            y = self.step(y, dw);
            out.push(y);
        }
    }
}

/// Closed-form step in transformed coordinates for a fixed `h`.
#[derive(Debug, Clone, Copy)]
pub struct TransformedStepper {
    model: TransformedModel,
    h: f64,
}

impl TransformedStepper {
    pub fn new(model: TransformedModel, h: f64) -> Result<Self> {
        if !(h > 0.0 && 2.0 + model.gamma * h > 0.0) {
            return Err(Error::Step(format!(
                "need h > 0 and 2 + gamma h > 0 (gamma = {}, h = {h})",
                model.gamma
            )));
        }
        Ok(Self { model, h })
    }

    pub fn run_into(&self, z0: f64, increments: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(increments.len() + 1);
        let mut z = z0;
        out.push(z);
        for &dw in increments {
            z = self.model.implicit_step(z, dw, self.h);
            out.push(z);
        }
    }
}

pub fn implicit_sqrt_euler_step(params: &CirParams, y: f64, dw: f64, h: f64) -> Result<f64> {
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::Domain(format!("scheme state must be >= 0, got {y}")));
    }
    if !dw.is_finite() {
        return Err(Error::Domain(format!(
            "Brownian increment must be finite, got {dw}"
        )));
    }
    Ok(CirStepper::new(params, h)?.step(y, dw))
}

pub fn simulate_cir_implicit(
    params: &CirParams,
    grid: &TimeGrid,
    increments: &[f64],
) -> Result<Trajectory> {
    if increments.len() != grid.n_steps() {
        return Err(Error::validation(
            "increments",
            format!("expected {}, got {}", grid.n_steps(), increments.len()),
        ));
    }
    let mut values = Vec::new();
    if grid.n_steps() == 0 {
        params.validate()?;
        values.push(params.x0);
    } else {
        CirStepper::new(params, grid.step())?.run_into(params.x0, increments, &mut values);
    }
    Trajectory::new(*grid, values, TrajectoryKind::Scheme)
}

/// Linear interpolation between the two nodes around `t`.
pub fn interpolate_linear(traj: &Trajectory, t: f64) -> Result<f64> {
    let horizon = traj.grid.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let n = traj.grid.n_steps();
    if n == 0 {
        return Ok(traj.values[0]);
    }
    let k = traj.grid.floor_index(t);
    if k == n {
        return Ok(traj.values[n]);
    }
    let h = traj.grid.step();
    let w = (t - traj.grid.node(k)) / h;
    Ok((1.0 - w) * traj.values[k] + w * traj.values[k + 1])
}

fn residual_scale(b: f64) -> f64 {
    1.0 + b.abs()
}

/// Solves `z' - h g(z') = z + dw` for `z' > 0`, where `g` is one-sided
/// Lipschitz with constant `lipschitz` and blows up to `+inf` at the origin.
pub fn implicit_additive_step<G: Fn(f64) -> f64>(
    g: G,
    lipschitz: f64,
    z: f64,
    dw: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Step(format!("step must be > 0, got {h}")));
    }
    if !(lipschitz >= 0.0) {
        return Err(Error::validation(
            "lipschitz",
            format!("must be >= 0, got {lipschitz}"),
        ));
    }
    if lipschitz > 0.0 && h * lipschitz >= 1.0 {
        return Err(Error::Step(format!(
            "need h < 1/L, got h = {h}, 1/L = {}",
            1.0 / lipschitz
        )));
    }
    if !(z >= 0.0 && z.is_finite() && dw.is_finite()) {
        return Err(Error::Domain(format!(
            "need z >= 0 and finite dw, got z = {z}, dw = {dw}"
        )));
    }
    let b = z + dw;
    let f = |x: f64| x - h * g(x) - b;

    let mut lo = b.max(1e-12);
    let mut f_lo = f(lo);
    while !(f_lo < 0.0) {
        lo *= 0.125;
        if lo < 1e-300 {
            return Err(Error::Bracketing(format!(
                "no sign change above 1e-300 (z = {z}, dw = {dw}, h = {h})"
            )));
        }
        f_lo = f(lo);
    }
    let mut hi = lo.max(b.abs()).max(1.0);
    let mut f_hi = f(hi);
    while !(f_hi > 0.0) {
        if f_hi.is_nan() {
            return Err(Error::Bracketing(format!("drift is NaN at {hi}")));
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Bracketing(format!(
                "no sign change below 1e300 (z = {z}, dw = {dw}, h = {h})"
            )));
        }
        f_hi = f(hi);
    }

    // Illinois regula falsi with bisection fallback.
    let tol = 1e-12 * residual_scale(b);
    let mut best = if f_lo.abs() < f_hi.abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    let mut side = 0i8;
    for _ in 0..300 {
        let width = hi - lo;
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) || width > 0.5 * hi {
            // geometric bisection while the bracket spans orders of magnitude
            x = if lo > 0.0 && hi / lo > 4.0 {
                (lo * hi).sqrt()
            } else {
                lo + 0.5 * width
            };
        }
        let fx = f(x);
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 || width <= 2.0 * f64::EPSILON * hi {
            break;
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if best.1.abs() <= 1e-4 * tol && (hi - lo) <= 1e-13 * hi {
            break;
        }
    }
    if best.1.abs() < tol {
        Ok(best.0)
    } else {
        Err(Error::Bracketing(format!(
            "residual {:e} above tolerance {tol:e} (z = {z}, dw = {dw}, h = {h})",
            best.1
        )))
    }
}

/// Transformed-coordinate trajectory by repeated root solves.
pub fn simulate_transformed(
    model: &TransformedModel,
    z0: f64,
    grid: &TimeGrid,
    increments: &[f64],
) -> Result<Trajectory> {
    if increments.len() != grid.n_steps() {
        return Err(Error::validation(
            "increments",
            format!("expected {}, got {}", grid.n_steps(), increments.len()),
        ));
    }
    let h = grid.step();
    let l = model.lipschitz_l();
    let mut values = Vec::with_capacity(increments.len() + 1);
    let mut z = z0;
    values.push(z);
    for &dw in increments {
        z = implicit_additive_step(|x| model.drift(x), l, z, dw, h)?;
        values.push(z);
    }
    Trajectory::new(*grid, values, TrajectoryKind::Transformed)
}
