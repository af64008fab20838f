//! Pathwise check of the one-sided Lipschitz error recursion
//! `|Z_{t_k} - Y_k| <= (1 - hL)^-k int_0^{t_k} |g(Z_s) - g(Z_{ceil(s)})| ds`
//! with a fine-step reference standing in for `Z`.

use rayon::prelude::*;

use super::bounds::BoundCheck;
use super::strong::dyadic_factor;
use crate::error::{Error, Result};
use crate::model::CirParams;
use crate::paths::{coarsen_into, fill_increments, TimeGrid};
use crate::schemes::TransformedStepper;

pub const RECURSION_SLACK: f64 = 1.1;

/// Per-path `(lhs, rhs)` at every coarse node.
///
/// The integral is a right-endpoint sum over reference nodes: on a coarse
/// step the reference satisfies the implicit recursion with its right
/// endpoint, so this sum is the quadrature consistent with the reference.
fn path_sides(
    reference: &[f64],
    coarse: &[f64],
    factor: usize,
    h_ref: f64,
    growth: f64,
    g: impl Fn(f64) -> f64,
) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(coarse.len());
    let mut integral = 0.0;
    let mut prefactor = 1.0;
    out.push(((reference[0] - coarse[0]).abs(), 0.0));
    for k in 1..coarse.len() {
        let g_node = g(reference[k * factor]);
        for r in &reference[(k - 1) * factor + 1..=k * factor] {
            integral += (g(*r) - g_node).abs() * h_ref;
        }
        prefactor *= growth;
        out.push((
            (reference[k * factor] - coarse[k]).abs(),
            prefactor * integral,
        ));
    }
    out
}

/// One check per coarse node reporting the worst path, i.e. the one with the
/// largest `lhs - slack * rhs`. A node passes when every path satisfies
/// `lhs <= slack * rhs`.
pub fn recursion_bound_check(
    params: &CirParams,
    seed: u64,
    n_paths: usize,
    horizon: f64,
    h: f64,
    h_ref: f64,
) -> Result<Vec<BoundCheck>> {
    params.validate()?;
    params.require_rate_regime()?;
    let model = params.transformed()?;
    let l = model.lipschitz_l();
    if !(h * l < 1.0) {
        return Err(Error::Step(format!("need h < 1/L = {}, got {h}", 1.0 / l)));
    }
    if n_paths == 0 {
        return Err(Error::validation("n_paths", "must be > 0"));
    }
    let factor = dyadic_factor(h, h_ref)?;
    let coarse_grid = TimeGrid::with_step(horizon, h)?;
    let fine_grid = TimeGrid::with_step(horizon, h_ref)?;
    let fine_stepper = TransformedStepper::new(model, h_ref)?;
    let coarse_stepper = TransformedStepper::new(model, h)?;
    let growth = 1.0 / (1.0 - h * l);
    let z0 = params.z0();

    let per_path: Vec<Vec<(f64, f64)>> = (0..n_paths)
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![0.0; fine_grid.n_steps()],
                    Vec::new(),
                    Vec::new(),
                    Vec::new(),
                )
            },
            |(inc, zr, cinc, y), i| {
                fill_increments(seed, i as u64, h_ref, inc);
                fine_stepper.run_into(z0, inc, zr);
                coarsen_into(inc, factor, cinc).expect("checked factor");
                coarse_stepper.run_into(z0, cinc, y);
                path_sides(zr, y, factor, h_ref, growth, |z| model.drift(z))
            },
        )
        .collect();

    Ok((0..=coarse_grid.n_steps())
        .map(|k| {
            let mut worst = per_path[0][k];
            let mut all_pass = true;
            for row in &per_path {
                let (lhs, rhs) = row[k];
                all_pass &= lhs <= RECURSION_SLACK * rhs;
                if lhs - RECURSION_SLACK * rhs > worst.0 - RECURSION_SLACK * worst.1 {
                    worst = (lhs, rhs);
                }
            }
            let mut check = BoundCheck::new(
                format!("node {k} t={}", coarse_grid.node(k)),
                worst.0,
                worst.1,
                RECURSION_SLACK,
                0.0,
                0.0,
            );
            check.pass = all_pass;
            check
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_exact() {
        let p = CirParams::new(0.375, 1.0, 1.0, 1.0).unwrap();
        let checks = recursion_bound_check(&p, 1, 5, 1.0, 1.0 / 8.0, 1.0 / 64.0).unwrap();
        assert_eq!(checks.len(), 9);
        assert_eq!((checks[0].mc_lhs, checks[0].oracle_rhs), (0.0, 0.0));
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn unit_prefactor_without_reversion() {
        // g constant: integral vanishes, and so does the error
        let sides = path_sides(
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[1.0, 3.0, 5.0],
            2,
            0.5,
            1.0,
            |_| 0.7,
        );
        assert_eq!(sides, vec![(0.0, 0.0); 3]);
    }

    #[test]
    fn negative_gamma_uses_growth_factor() {
        let p = CirParams::new(0.6, -0.5, 1.2, 0.5).unwrap();
        let checks = recursion_bound_check(&p, 2, 20, 1.0, 1.0 / 16.0, 1.0 / 256.0).unwrap();
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn rejects_outside_theorem_regime() {
        let p = CirParams::new(0.2, 1.0, 1.0, 1.0).unwrap();
        assert!(recursion_bound_check(&p, 1, 5, 1.0, 0.125, 1.0 / 64.0).is_err());
    }
}
