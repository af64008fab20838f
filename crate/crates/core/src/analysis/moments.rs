//! Monte Carlo moments of the scheme, including inverse moments.

use rayon::prelude::*;
use serde::Serialize;

use super::stats::{self, Bootstrap};
use super::strong::dyadic_factor;
use crate::error::{Error, Result};
use crate::model::{inverse_moment_exact_cir, CirParams};
use crate::paths::{coarsen_into, fill_increments, TimeGrid};
use crate::schemes::{CirStepper, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub t: f64,
    pub q: f64,
    /// Sample mean of `value^q`.
    pub estimate: f64,
    pub se: f64,
}

fn powers_at(values: impl Iterator<Item = f64>, q: f64) -> Result<Vec<f64>> {
    let mut zeros = 0usize;
    let col: Vec<f64> = values
        .map(|v| {
            if q < 0.0 && !(v > 0.0) {
                zeros += 1;
            }
            v.powf(q)
        })
        .collect();
    if zeros > 0 {
        return Err(Error::Domain(format!(
            "{zeros} non-positive values where a negative moment q = {q} was requested"
        )));
    }
    Ok(col)
}

fn estimate_from(col: &[f64], t: f64, q: f64, seed: u64) -> MomentEstimate {
    MomentEstimate {
        t,
        q,
        estimate: stats::mean(col),
        se: Bootstrap::new(seed).std_error(&[col], |m| m[0]),
    }
}

/// `E[X_t^q]` over trajectories sharing one grid; `t` must be a node.
pub fn moment_estimate(trajectories: &[Trajectory], t: f64, q: f64) -> Result<MomentEstimate> {
    let Some(first) = trajectories.first() else {
        return Err(Error::validation("trajectories", "empty"));
    };
    let k = first
        .grid
        .node_index(t)
        .ok_or_else(|| Error::Domain(format!("t = {t} is not a grid node")))?;
    if trajectories.iter().any(|tr| tr.grid != first.grid) {
        return Err(Error::validation("trajectories", "grids differ"));
    }
    let col = powers_at(trajectories.iter().map(|tr| tr.values[k]), q)?;
    Ok(estimate_from(&col, t, q, 0))
}

/// Reference value of `E[X_t^q]` when one is available in closed form:
/// `q = 0`, the mean, and negative moments below the Feller index.
pub fn moment_oracle(params: &CirParams, t: f64, q: f64) -> Result<Option<f64>> {
    if q == 0.0 {
        return Ok(Some(1.0));
    }
    if t == 0.0 {
        return Ok((params.x0 > 0.0 || q > 0.0).then(|| params.x0.powf(q)));
    }
    if q == 1.0 {
        let g = params.gamma;
        let decay = (-g * t).exp();
        let ramp = if (g * t).abs() < 1e-8 {
            t
        } else {
            -(-g * t).exp_m1() / g
        };
        return Ok(Some(params.x0 * decay + params.delta * ramp));
    }
    if q < 0.0 && -q < params.feller_index() && params.x0 > 0.0 {
        return inverse_moment_exact_cir(params, -q, t).map(Some);
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    #[serde(flatten)]
    pub estimate: MomentEstimate,
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MomentSetup {
    pub params: CirParams,
    pub horizon: f64,
    pub h: f64,
    pub times: Vec<f64>,
    pub q_list: Vec<f64>,
    pub seed: u64,
    pub n_paths: usize,
}

/// Moments of the scheme at the requested nodes without storing paths.
/// Rows are ordered by time, then by `q`.
pub fn cir_moment_study(setup: &MomentSetup) -> Result<Vec<MomentRow>> {
    let params = setup.params;
    params.validate()?;
    if setup.n_paths < 2 {
        return Err(Error::validation(
            "n_paths",
            format!("need at least 2, got {}", setup.n_paths),
        ));
    }
    let grid = TimeGrid::with_step(setup.horizon, setup.h)?;
    let stepper = CirStepper::new(&params, setup.h)?;
    let nodes = setup
        .times
        .iter()
        .map(|&t| {
            grid.node_index(t).ok_or_else(|| {
                Error::Domain(format!("t = {t} is not a node of the h = {} grid", setup.h))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut oracles = Vec::new();
    for &t in &setup.times {
        for &q in &setup.q_list {
            oracles.push(moment_oracle(&params, t, q)?);
        }
    }

    let samples: Vec<Vec<f64>> = (0..setup.n_paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; grid.n_steps()], Vec::new()),
            |(inc, x), i| {
                fill_increments(setup.seed, i as u64, setup.h, inc);
                stepper.run_into(params.x0, inc, x);
                nodes.iter().map(|&k| x[k]).collect()
            },
        )
        .collect();

    let mut rows = Vec::new();
    for (c, &t) in setup.times.iter().enumerate() {
        for &q in &setup.q_list {
            let col = powers_at(samples.iter().map(|s| s[c]), q)?;
            rows.push(MomentRow {
                estimate: estimate_from(&col, t, q, setup.seed),
                oracle: oracles[rows.len()],
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupMoment {
    pub h: f64,
    /// `|| max_n Y_n ||_{L^q}`.
    pub estimate: f64,
    pub se: f64,
}

/// `|| max_n Y^h_n ||_{L^q}` for each `h`, all driven by the Brownian path of
/// the smallest step.
pub fn scheme_moment_sup(
    params: &CirParams,
    seed: u64,
    n_paths: usize,
    horizon: f64,
    h_list: &[f64],
    q: f64,
) -> Result<Vec<SupMoment>> {
    params.validate()?;
    if !(q >= 2.0 && q.is_finite()) {
        return Err(Error::validation("q", format!("must be >= 2, got {q}")));
    }
    if n_paths < 2 {
        return Err(Error::validation(
            "n_paths",
            format!("need at least 2, got {n_paths}"),
        ));
    }
    let h_min = h_list.iter().copied().fold(f64::INFINITY, f64::min);
    if !h_min.is_finite() {
        return Err(Error::validation("h_list", "empty"));
    }
    let fine = TimeGrid::with_step(horizon, h_min)?;
    let mut levels = Vec::new();
    for &h in h_list {
        TimeGrid::with_step(horizon, h)?;
        let factor = if h == h_min {
            1
        } else {
            dyadic_factor(h, h_min)?
        };
        levels.push((factor, CirStepper::new(params, h)?));
    }
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; fine.n_steps()], Vec::new(), Vec::new()),
            |(inc, coarse, y), i| {
                fill_increments(seed, i as u64, h_min, inc);
                levels
                    .iter()
                    .map(|(factor, stepper)| {
                        coarsen_into(inc, *factor, coarse).expect("checked factor");
                        stepper.run_into(params.x0, coarse, y);
                        y.iter().copied().fold(0.0, f64::max).powf(q)
                    })
                    .collect()
            },
        )
        .collect();
    let bs = Bootstrap::new(seed);
    Ok(h_list
        .iter()
        .enumerate()
        .map(|(c, &h)| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            SupMoment {
                h,
                estimate: stats::mean(&col).powf(1.0 / q),
                se: bs.std_error(&[&col], |m| m[0].powf(1.0 / q)),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{simulate_cir_implicit, TrajectoryKind};

    fn params() -> CirParams {
        CirParams::new(0.375, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zeroth_moment_is_one() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let tr: Vec<Trajectory> = (0..3)
            .map(|i| {
                let inc = crate::paths::generate_increments(1, i, &g);
                simulate_cir_implicit(&params(), &g, &inc).unwrap()
            })
            .collect();
        assert_eq!(moment_estimate(&tr, 0.5, 0.0).unwrap().estimate, 1.0);
        assert!(moment_estimate(&tr, 0.3, 1.0).is_err());
    }

    #[test]
    fn zero_value_with_negative_moment_is_reported() {
        let g = TimeGrid::new(1.0, 1).unwrap();
        let tr = vec![
            Trajectory::new(g, vec![0.0, 1.0], TrajectoryKind::Scheme).unwrap(),
            Trajectory::new(g, vec![1.0, 1.0], TrajectoryKind::Scheme).unwrap(),
        ];
        assert!(matches!(
            moment_estimate(&tr, 0.0, -0.5),
            Err(Error::Domain(_))
        ));
        assert!(moment_estimate(&tr, 1.0, -0.5).is_ok());
    }

    #[test]
    fn mean_matches_exact_mean() {
        let setup = MomentSetup {
            params: params(),
            horizon: 1.0,
            h: 1.0 / 64.0,
            times: vec![0.5, 1.0],
            q_list: vec![1.0],
            seed: 2,
            n_paths: 4000,
        };
        for row in cir_moment_study(&setup).unwrap() {
            let exact = 1.0 + 0.375 * row.estimate.t;
            assert_eq!(row.oracle, Some(exact));
            assert!((row.estimate.estimate - exact).abs() < 4.0 * row.estimate.se);
        }
    }

    #[test]
    fn sup_moment_with_zero_noise_is_terminal_value() {
        // beta tiny: the path is essentially the deterministic increasing recursion
        let p = CirParams::new(0.375, 0.0, 1e-6, 1.0).unwrap();
        let r = scheme_moment_sup(&p, 0, 10, 1.0, &[0.25], 2.0).unwrap();
        let mut y = 1.0;
        for _ in 0..4 {
            y = crate::schemes::implicit_sqrt_euler_step(&p, y, 0.0, 0.25).unwrap();
        }
        assert!((r[0].estimate - y).abs() < 1e-5);
    }

    #[test]
    fn sup_moment_reproducible_and_bounded() {
        let p = CirParams::new(0.375, 1.0, 1.0, 1.0).unwrap();
        let h = [0.125, 1.0 / 32.0, 1.0 / 128.0];
        let a = scheme_moment_sup(&p, 5, 500, 1.0, &h, 2.0).unwrap();
        assert_eq!(a, scheme_moment_sup(&p, 5, 500, 1.0, &h, 2.0).unwrap());
        let max = a.iter().map(|r| r.estimate).fold(0.0, f64::max);
        let min = a.iter().map(|r| r.estimate).fold(f64::INFINITY, f64::min);
        assert!(max <= 2.0 * min);
    }
}
