//! Monte Carlo left-hand sides of moment and increment bounds, paired with
//! their closed-form ceilings.
//!
//! All functionals are evaluated on the transformed process
//! `Z = (2/beta) sqrt(X)` simulated with the closed-form implicit step on a
//! fine grid. Time integrals use left-endpoint sums on that grid.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::stats::{self, Bootstrap};
use crate::error::{Error, Result};
use crate::model::{
    cir_moment_bound_oracle, exp_inverse_moment_bound_oracle, exp_moment_bound_oracle,
    integrated_inverse_moment_bound_oracle, positive_moment_bound_oracle,
    sqrt_increment_bound_oracle, CirParams, LyapunovParams,
};
use crate::paths::{fill_increments, TimeGrid};
use crate::schemes::TransformedStepper;

pub const DEFAULT_SLACK: f64 = 1.05;
pub const DEFAULT_N_SE: f64 = 3.0;

/// Smallest value `Z` is allowed to take inside negative powers.
const Z_FLOOR: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub label: String,
    pub mc_lhs: f64,
    pub oracle_rhs: f64,
    pub slack_factor: f64,
    /// Bootstrap standard error of `mc_lhs - oracle_rhs`.
    pub se: f64,
    pub n_se: f64,
    pub pass: bool,
    /// Grid values of `Z` raised to the floor inside negative powers.
    pub floor_hits: u64,
}

impl BoundCheck {
    pub fn new(
        label: String,
        mc_lhs: f64,
        oracle_rhs: f64,
        slack_factor: f64,
        se: f64,
        n_se: f64,
    ) -> Self {
        let pass = mc_lhs <= oracle_rhs * slack_factor + n_se * se;
        Self {
            label,
            mc_lhs,
            oracle_rhs,
            slack_factor,
            se,
            n_se,
            pass,
            floor_hits: 0,
        }
    }
}

/// One bound to check. Times must be nodes of the fine grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundSpec {
    /// `E[(1 + Z_t^2)^(q/2)]`.
    PositiveMoment { q: f64, t: f64 },
    /// `||X_t||_{L^p}`.
    CirMoment { p: f64, t: f64 },
    /// `E[exp(rho~ (2-p)(alpha + (1-p)/2) int Z^-p - c~ rho (2-p) int Z^(2-p) - rho Z_t^(2-p))]`.
    ExpInverseMoment {
        p: f64,
        rho: f64,
        rho_tilde: f64,
        t: f64,
    },
    /// `|| int_0^t Z^-p ||_{L^q}`.
    IntegratedInverseMoment {
        p: f64,
        rho: f64,
        rho_tilde: f64,
        q: f64,
        t: f64,
    },
    /// `E[exp((1 + Z_t^2) / w(t) + int beta' (1 + Z_s^2) / w(s) ds)]`,
    /// `w(s) = exp(2 s (c + 1) + s beta')`.
    ExpMoment { beta_aux: f64, t: f64 },
    /// `||sqrt(X_t) - sqrt(X_s)||_{L^p}`.
    SqrtIncrement { p: f64, s: f64, t: f64 },
}

impl BoundSpec {
    pub fn label(&self) -> String {
        match *self {
            BoundSpec::PositiveMoment { q, t } => format!("positive_moment q={q} t={t}"),
            BoundSpec::CirMoment { p, t } => format!("cir_moment p={p} t={t}"),
            BoundSpec::ExpInverseMoment {
                p,
                rho,
                rho_tilde,
                t,
            } => {
                format!("exp_inverse_moment p={p} rho={rho} rho_tilde={rho_tilde} t={t}")
            }
            BoundSpec::IntegratedInverseMoment {
                p,
                rho,
                rho_tilde,
                q,
                t,
            } => format!(
                "integrated_inverse_moment p={p} rho={rho} rho_tilde={rho_tilde} q={q} t={t}"
            ),
            BoundSpec::ExpMoment { beta_aux, t } => format!("exp_moment beta_aux={beta_aux} t={t}"),
            BoundSpec::SqrtIncrement { p, s, t } => format!("sqrt_increment p={p} s={s} t={t}"),
        }
    }

    /// True when the functional only involves the initial value.
    pub fn at_origin(&self) -> bool {
        match *self {
            BoundSpec::SqrtIncrement { s, t, .. } => s == t,
            BoundSpec::PositiveMoment { t, .. }
            | BoundSpec::CirMoment { t, .. }
            | BoundSpec::ExpInverseMoment { t, .. }
            | BoundSpec::IntegratedInverseMoment { t, .. }
            | BoundSpec::ExpMoment { t, .. } => t == 0.0,
        }
    }

    fn times(&self) -> Vec<f64> {
        match *self {
            BoundSpec::SqrtIncrement { s, t, .. } => vec![s, t],
            BoundSpec::PositiveMoment { t, .. }
            | BoundSpec::CirMoment { t, .. }
            | BoundSpec::ExpInverseMoment { t, .. }
            | BoundSpec::IntegratedInverseMoment { t, .. }
            | BoundSpec::ExpMoment { t, .. } => vec![t],
        }
    }

    fn n_columns(&self) -> usize {
        match self {
            BoundSpec::IntegratedInverseMoment { .. } => 2,
            _ => 1,
        }
    }
}

/// Constants of the transformed drift `g(z) = alpha/z - gamma z/2`.
#[derive(Debug, Clone, Copy)]
struct DriftConstants {
    alpha: f64,
    /// `z g(z) <= c (1 + z^2)`.
    c_growth: f64,
    /// `z g(z) >= alpha - c~ z^2`.
    c_tilde: f64,
    /// Exponent in the lower bound above.
    c_power: f64,
}

impl DriftConstants {
    fn new(params: &CirParams) -> Self {
        let alpha = params.alpha();
        Self {
            alpha,
            c_growth: alpha.max(0.5 * (-params.gamma).max(0.0)),
            c_tilde: (0.5 * params.gamma).max(0.0),
            c_power: 2.0,
        }
    }
}

struct Prepared {
    spec: BoundSpec,
    nodes: Vec<usize>,
    offset: usize,
}

fn node(grid: &TimeGrid, t: f64) -> Result<usize> {
    grid.node_index(t).ok_or_else(|| {
        Error::Domain(format!(
            "t = {t} is not a node of the h = {} grid",
            grid.step()
        ))
    })
}

fn lyapunov(alpha: f64, p: f64, rho: f64, rho_tilde: f64) -> Result<LyapunovParams> {
    let lp = LyapunovParams {
        alpha,
        p,
        rho,
        rho_tilde,
    };
    lp.validate()?;
    Ok(lp)
}

/// Left-endpoint sum of `f(Z_j) h` over `j < k`.
fn left_sum(z: &[f64], k: usize, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    z[..k].iter().fold(0.0, |acc, &v| acc + f(v)) * h
}

struct PathContext<'a> {
    z: &'a [f64],
    h: f64,
    half_beta: f64,
    x0: f64,
    dc: DriftConstants,
}

impl PathContext<'_> {
    fn x(&self, k: usize) -> f64 {
        if k == 0 {
            self.x0
        } else {
            let r = self.half_beta * self.z[k];
            r * r
        }
    }

    fn sqrt_x(&self, k: usize) -> f64 {
        if k == 0 {
            self.x0.sqrt()
        } else {
            self.half_beta * self.z[k]
        }
    }

    fn floored(&self, k: usize, hits: &mut u64) -> f64 {
        let v = self.z[k];
        if v < Z_FLOOR {
            *hits += 1;
            Z_FLOOR
        } else {
            v
        }
    }

    /// `int_0^{t_k} Z^-p` by left endpoints, floored.
    fn inverse_integral(&self, k: usize, p: f64, hits: &mut u64) -> f64 {
        let mut acc = 0.0;
        for j in 0..k {
            acc += self.floored(j, hits).powf(-p);
        }
        acc * self.h
    }

    fn columns(&self, prep: &Prepared, out: &mut [f64], hits: &mut u64) {
        let z = self.z;
        let dc = self.dc;
        match prep.spec {
            BoundSpec::PositiveMoment { q, .. } => {
                let v = z[prep.nodes[0]];
                out[0] = (1.0 + v * v).powf(0.5 * q);
            }
            BoundSpec::CirMoment { p, .. } => {
                out[0] = self.x(prep.nodes[0]).powf(p);
            }
            BoundSpec::ExpInverseMoment {
                p, rho, rho_tilde, ..
            } => {
                let k = prep.nodes[0];
                let inv = self.inverse_integral(k, p, hits);
                let pos = left_sum(z, k, self.h, |v| v.powf(dc.c_power - p));
                let a = rho_tilde * (2.0 - p) * (dc.alpha + 0.5 * (1.0 - p));
                let b = dc.c_tilde * rho * (2.0 - p);
                out[0] = (a * inv - b * pos - rho * z[k].powf(2.0 - p)).exp();
            }
            BoundSpec::IntegratedInverseMoment { p, q, .. } => {
                let k = prep.nodes[0];
                out[0] = self.inverse_integral(k, p, hits).powf(q);
                let pos = left_sum(z, k, self.h, |v| v.powf(dc.c_power - p));
                out[1] = (z[k].powf(2.0 - p) + dc.c_tilde * (2.0 - p) * pos).powf(q);
            }
            BoundSpec::ExpMoment { beta_aux, .. } => {
                let k = prep.nodes[0];
                let rate = 2.0 * (dc.c_growth + 1.0) + beta_aux;
                let v = z[k];
                let terminal = (1.0 + v * v) / (k as f64 * self.h * rate).exp();
                let mut acc = 0.0;
                for (j, &s) in z[..k].iter().enumerate() {
                    acc += beta_aux * (1.0 + s * s) / (j as f64 * self.h * rate).exp();
                }
                out[0] = (terminal + acc * self.h).exp();
            }
            BoundSpec::SqrtIncrement { p, .. } => {
                let d = self.sqrt_x(prep.nodes[1]) - self.sqrt_x(prep.nodes[0]);
                out[0] = d.abs().powf(p);
            }
        }
    }
}

/// Left-hand side and oracle from the column means of one spec.
fn evaluate(
    spec: &BoundSpec,
    params: &CirParams,
    dc: DriftConstants,
    means: &[f64],
) -> Result<(f64, f64)> {
    let z0 = params.z0();
    Ok(match *spec {
        BoundSpec::PositiveMoment { q, t } => {
            let e0 = (1.0 + z0 * z0).powf(0.5 * q);
            (
                means[0],
                positive_moment_bound_oracle(q, t, dc.c_growth, e0)?,
            )
        }
        BoundSpec::CirMoment { p, t } => (
            means[0].powf(1.0 / p),
            cir_moment_bound_oracle(params, p, t)?,
        ),
        BoundSpec::ExpInverseMoment {
            p,
            rho,
            rho_tilde,
            t,
        } => {
            let lp = lyapunov(dc.alpha, p, rho, rho_tilde)?;
            let e0 = (-rho * z0.powf(2.0 - p)).exp();
            (means[0], exp_inverse_moment_bound_oracle(&lp, t, e0)?)
        }
        BoundSpec::IntegratedInverseMoment {
            p,
            rho,
            rho_tilde,
            q,
            t,
        } => {
            let lp = lyapunov(dc.alpha, p, rho, rho_tilde)?;
            let m1 = means[1].powf(1.0 / q);
            let m2 = (-rho * z0.powf(2.0 - p)).exp();
            let rhs = integrated_inverse_moment_bound_oracle(
                &lp,
                dc.c_power,
                dc.c_tilde,
                q,
                t,
                (m1, m2),
            )?;
            (means[0].powf(1.0 / q), rhs)
        }
        BoundSpec::ExpMoment { beta_aux, t } => {
            let e0 = (1.0 + z0 * z0).exp();
            (
                means[0],
                exp_moment_bound_oracle(dc.c_growth, beta_aux, t, e0)?,
            )
        }
        BoundSpec::SqrtIncrement { p, s, t } => (
            means[0].powf(1.0 / p),
            sqrt_increment_bound_oracle(params, p, s, t)?,
        ),
    })
}

/// Settings shared by a run of the suite.
#[derive(Debug, Clone)]
pub struct BoundSetup {
    pub params: CirParams,
    pub seed: u64,
    pub n_paths: usize,
    pub horizon: f64,
    pub h_fine: f64,
    pub slack_factor: f64,
    pub n_se: f64,
}

impl BoundSetup {
    pub fn new(params: CirParams, seed: u64, n_paths: usize, horizon: f64, h_fine: f64) -> Self {
        Self {
            params,
            seed,
            n_paths,
            horizon,
            h_fine,
            slack_factor: DEFAULT_SLACK,
            n_se: DEFAULT_N_SE,
        }
    }
}

/// Runs every spec on one shared ensemble. Specs that only involve the
/// initial value are checked without slack.
pub fn bound_check_suite(setup: &BoundSetup, specs: &[BoundSpec]) -> Result<Vec<BoundCheck>> {
    let params = setup.params;
    params.validate()?;
    let model = params.transformed()?;
    if setup.n_paths < 2 {
        return Err(Error::validation(
            "n_paths",
            format!("need at least 2, got {}", setup.n_paths),
        ));
    }
    let grid = TimeGrid::with_step(setup.horizon, setup.h_fine)?;
    let stepper = TransformedStepper::new(model, setup.h_fine)?;
    let dc = DriftConstants::new(&params);

    let mut prepared = Vec::with_capacity(specs.len());
    let mut width = 0;
    for spec in specs {
        let nodes = spec
            .times()
            .iter()
            .map(|&t| node(&grid, t))
            .collect::<Result<Vec<_>>>()?;
        // surface hypothesis violations before simulating
        evaluate(spec, &params, dc, &vec![1.0; spec.n_columns()])
            .map_err(|e| Error::validation("spec", format!("{}: {e}", spec.label())))?;
        prepared.push(Prepared {
            spec: *spec,
            nodes,
            offset: width,
        });
        width += spec.n_columns();
    }

    let half_beta = 0.5 * params.beta;
    let per_path: Vec<(Vec<f64>, Vec<u64>)> = (0..setup.n_paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; grid.n_steps()], Vec::new()),
            |(inc, z), i| {
                fill_increments(setup.seed, i as u64, setup.h_fine, inc);
                stepper.run_into(params.z0(), inc, z);
                let ctx = PathContext {
                    z,
                    h: setup.h_fine,
                    half_beta,
                    x0: params.x0,
                    dc,
                };
                let mut cols = vec![0.0; width];
                let mut hits = vec![0u64; prepared.len()];
                for (s, prep) in prepared.iter().enumerate() {
                    let out = &mut cols[prep.offset..prep.offset + prep.spec.n_columns()];
                    ctx.columns(prep, out, &mut hits[s]);
                }
                (cols, hits)
            },
        )
        .collect();

    let bs = Bootstrap::new(setup.seed);
    let mut checks = Vec::with_capacity(prepared.len());
    for (s, prep) in prepared.iter().enumerate() {
        let n = prep.spec.n_columns();
        let columns: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                per_path
                    .iter()
                    .map(|(cols, _)| cols[prep.offset + c])
                    .collect()
            })
            .collect();
        let means: Vec<f64> = columns.iter().map(|c| stats::mean(c)).collect();
        let (lhs, rhs) = evaluate(&prep.spec, &params, dc, &means)?;
        let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
        let se = bs.std_error(&refs, |m| match evaluate(&prep.spec, &params, dc, m) {
            Ok((l, r)) => l - r,
            Err(_) => f64::NAN,
        });
        let (slack, n_se) = if prep.spec.at_origin() {
            (1.0, 0.0)
        } else {
            (setup.slack_factor, setup.n_se)
        };
        let mut check = BoundCheck::new(prep.spec.label(), lhs, rhs, slack, se, n_se);
        check.floor_hits = per_path.iter().map(|(_, h)| h[s]).sum();
        checks.push(check);
    }
    Ok(checks)
}

/// The three parameter sets of the default matrix: accessible boundary with
/// mean reversion, without drift in `X`, and with negative `gamma`.
pub fn default_bound_params() -> Vec<CirParams> {
    vec![
        CirParams::new(0.375, 1.0, 1.0, 1.0).expect("valid"),
        CirParams::new(0.375, 0.0, 1.0, 1.0).expect("valid"),
        CirParams::new(0.6, -0.5, 1.2, 0.5).expect("valid"),
    ]
}

/// Default specs for `params` on `[0, horizon]` with fine step `h_fine`:
/// every functional at `t = 0`, `T/2` and `T`, plus ten random increment
/// pairs drawn from `seed`.
pub fn default_bound_specs(
    params: &CirParams,
    horizon: f64,
    h_fine: f64,
    seed: u64,
) -> Result<Vec<BoundSpec>> {
    let grid = TimeGrid::with_step(horizon, h_fine)?;
    let alpha = params.alpha();
    let p_inv = 1.0 + 0.5 * (2.0 * alpha).min(1.0);
    let (rho, rho_tilde) = (1.0, 0.5);
    let mut specs = Vec::new();
    for t in [0.0, grid.node(grid.n_steps() / 2), horizon] {
        specs.extend([
            BoundSpec::PositiveMoment { q: 2.0, t },
            BoundSpec::PositiveMoment { q: 4.0, t },
            BoundSpec::CirMoment { p: 1.0, t },
            BoundSpec::CirMoment { p: 2.0, t },
            BoundSpec::ExpInverseMoment {
                p: p_inv,
                rho,
                rho_tilde,
                t,
            },
            BoundSpec::IntegratedInverseMoment {
                p: p_inv,
                rho,
                rho_tilde,
                q: 1.0,
                t,
            },
            BoundSpec::IntegratedInverseMoment {
                p: p_inv,
                rho,
                rho_tilde,
                q: 2.0,
                t,
            },
            BoundSpec::ExpMoment { beta_aux: 1.0, t },
        ]);
    }
    specs.push(BoundSpec::SqrtIncrement {
        p: 2.0,
        s: 0.0,
        t: 0.0,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_steps();
    for _ in 0..10 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(a + 1..=n);
        specs.push(BoundSpec::SqrtIncrement {
            p: 2.0,
            s: grid.node(a),
            t: grid.node(b),
        });
    }
    Ok(specs)
}
