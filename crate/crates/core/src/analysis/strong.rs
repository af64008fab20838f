//! Strong sup-errors of the implicit scheme against a fine-step reference
//! driven by the same Brownian path.

use rayon::prelude::*;
use serde::Serialize;

use super::stats::{self, Bootstrap};
use crate::error::{Error, Result};
use crate::model::CirParams;
use crate::paths::{coarsen_into, fill_increments, TimeGrid};
use crate::schemes::CirStepper;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub params: CirParams,
    pub p: f64,
    pub h: f64,
    pub h_ref: f64,
    pub n_paths: usize,
    /// `(E[sup_t |X_t - Y_t|^p])^(1/p)` with the sup over reference nodes.
    pub sup_error_lp: f64,
    pub std_error: f64,
    /// Same norm with the sup over coarse nodes only, so without the
    /// interpolation error between nodes.
    pub node_error_lp: f64,
    pub node_std_error: f64,
}

/// Shared settings of a coupled error study.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongErrorSetup {
    pub params: CirParams,
    pub horizon: f64,
    pub h_ref: f64,
    pub p: f64,
    pub seed: u64,
    pub n_paths: usize,
}

/// Reports per step size plus the per-path `error^p` columns they came from.
#[derive(Debug, Clone)]
pub struct StrongErrors {
    pub reports: Vec<ErrorReport>,
    pub columns: Vec<Vec<f64>>,
    /// `out[r][i]`: the error for step `i` under bootstrap resample `r`.
    pub resampled_errors: Vec<Vec<f64>>,
    /// As `resampled_errors`, for the node-only error.
    pub resampled_node_errors: Vec<Vec<f64>>,
}

/// Ratio `h / h_ref`, required to be `2^j` with `j >= 1`.
pub(crate) fn dyadic_factor(h: f64, h_ref: f64) -> Result<usize> {
    let ratio = h / h_ref;
    let j = ratio.log2().round();
    if !(1.0..63.0).contains(&j) || (ratio - 2f64.powi(j as i32)).abs() > 1e-9 * ratio {
        return Err(Error::validation(
            "h",
            format!("h / h_ref must be 2^j with j >= 1, got {h} / {h_ref} = {ratio}"),
        ));
    }
    Ok(1usize << j as u32)
}

/// Max over reference nodes of `|reference - interpolated coarse|`, where
/// reference node `j` lies at fraction `(j mod factor) / factor` of coarse
/// step `j / factor`.
pub fn sup_interp_error(reference: &[f64], coarse: &[f64], factor: usize) -> f64 {
    debug_assert_eq!(reference.len(), (coarse.len() - 1) * factor + 1);
    let inv = 1.0 / factor as f64;
    let mut sup: f64 = 0.0;
    for (j, r) in reference.iter().enumerate() {
        let (k, rem) = (j / factor, j % factor);
        let y = if rem == 0 {
            coarse[k]
        } else {
            let w = rem as f64 * inv;
            (1.0 - w) * coarse[k] + w * coarse[k + 1]
        };
        sup = sup.max((r - y).abs());
    }
    sup
}

/// Max over coarse nodes of `|reference - coarse|`.
pub fn sup_node_error(reference: &[f64], coarse: &[f64], factor: usize) -> f64 {
    coarse.iter().enumerate().fold(0.0f64, |acc, (k, y)| {
        acc.max((reference[k * factor] - y).abs())
    })
}

struct Buffers {
    fine: Vec<f64>,
    reference: Vec<f64>,
    coarse_inc: Vec<f64>,
    coarse: Vec<f64>,
}

/// Coupled sup-errors for every step in `h_list`.
pub fn strong_errors(setup: &StrongErrorSetup, h_list: &[f64]) -> Result<StrongErrors> {
    let StrongErrorSetup {
        params,
        horizon,
        h_ref,
        p,
        seed,
        n_paths,
    } = *setup;
    params.validate()?;
    if n_paths < 2 {
        return Err(Error::validation(
            "n_paths",
            format!("need at least 2, got {n_paths}"),
        ));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::validation("p", format!("must be > 0, got {p}")));
    }
    if h_list.is_empty() {
        return Err(Error::validation("h_list", "empty"));
    }
    let fine_grid = TimeGrid::with_step(horizon, h_ref)?;
    let ref_stepper = CirStepper::new(&params, h_ref)?;
    let mut levels = Vec::with_capacity(h_list.len());
    for &h in h_list {
        TimeGrid::with_step(horizon, h)?;
        levels.push((dyadic_factor(h, h_ref)?, CirStepper::new(&params, h)?));
    }
    let n_fine = fine_grid.n_steps();

    // per path: interpolated then node-only error^p for each level
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map_init(
            || Buffers {
                fine: vec![0.0; n_fine],
                reference: Vec::new(),
                coarse_inc: Vec::new(),
                coarse: Vec::new(),
            },
            |b, i| {
                fill_increments(seed, i as u64, h_ref, &mut b.fine);
                ref_stepper.run_into(params.x0, &b.fine, &mut b.reference);
                let mut row = Vec::with_capacity(2 * levels.len());
                for (factor, stepper) in &levels {
                    coarsen_into(&b.fine, *factor, &mut b.coarse_inc).expect("checked factor");
                    stepper.run_into(params.x0, &b.coarse_inc, &mut b.coarse);
                    row.push(sup_interp_error(&b.reference, &b.coarse, *factor).powf(p));
                    row.push(sup_node_error(&b.reference, &b.coarse, *factor).powf(p));
                }
                row
            },
        )
        .collect();

    let all: Vec<Vec<f64>> = (0..2 * h_list.len())
        .map(|c| per_path.iter().map(|row| row[c]).collect())
        .collect();
    let refs: Vec<&[f64]> = all.iter().map(|c| c.as_slice()).collect();
    let inv_p = 1.0 / p;
    let resampled = Bootstrap::new(seed).resampled_means(&refs);
    let pick = |offset: usize| -> Vec<Vec<f64>> {
        resampled
            .iter()
            .map(|m| {
                m.iter()
                    .skip(offset)
                    .step_by(2)
                    .map(|v| v.powf(inv_p))
                    .collect()
            })
            .collect()
    };
    let resampled_errors = pick(0);
    let resampled_node_errors = pick(1);
    let spread = |reps: &[Vec<f64>], c: usize| {
        let v: Vec<f64> = reps.iter().map(|r| r[c]).collect();
        stats::std_dev(&v)
    };
    let reports = h_list
        .iter()
        .enumerate()
        .map(|(c, &h)| ErrorReport {
            params,
            p,
            h,
            h_ref,
            n_paths,
            sup_error_lp: stats::mean(&all[2 * c]).powf(inv_p),
            std_error: spread(&resampled_errors, c),
            node_error_lp: stats::mean(&all[2 * c + 1]).powf(inv_p),
            node_std_error: spread(&resampled_node_errors, c),
        })
        .collect();
    let columns = all.into_iter().step_by(2).collect();
    Ok(StrongErrors {
        reports,
        columns,
        resampled_errors,
        resampled_node_errors,
    })
}

/// Single-step version of [`strong_errors`].
pub fn strong_error(setup: &StrongErrorSetup, h: f64) -> Result<ErrorReport> {
    Ok(strong_errors(setup, &[h])?.reports.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n_paths: usize) -> StrongErrorSetup {
        StrongErrorSetup {
            params: CirParams::new(0.375, 1.0, 1.0, 1.0).unwrap(),
            horizon: 1.0,
            h_ref: 1.0 / 256.0,
            p: 1.0,
            seed: 3,
            n_paths,
        }
    }

    #[test]
    fn identical_paths_have_zero_error() {
        let y = [1.0, 0.5, 0.25, 2.0];
        assert_eq!(sup_interp_error(&y, &y, 1), 0.0);
    }

    #[test]
    fn interpolation_error_between_nodes() {
        // coarse node values 0, 1; reference bumps to 1 at the midpoint
        assert_eq!(sup_interp_error(&[0.0, 1.0, 1.0], &[0.0, 1.0], 2), 0.5);
    }

    #[test]
    fn dyadic_factors() {
        assert_eq!(dyadic_factor(0.25, 0.0625).unwrap(), 4);
        assert!(dyadic_factor(0.1, 0.1).is_err());
        assert!(dyadic_factor(0.3, 0.1).is_err());
    }

    #[test]
    fn rejects_single_path() {
        assert!(matches!(
            strong_error(&setup(1), 1.0 / 16.0),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn errors_positive_and_reproducible() {
        let s = setup(64);
        let a = strong_errors(&s, &[1.0 / 8.0, 1.0 / 32.0]).unwrap();
        let b = strong_errors(&s, &[1.0 / 8.0, 1.0 / 32.0]).unwrap();
        assert_eq!(a.reports, b.reports);
        assert!(a
            .reports
            .iter()
            .all(|r| r.sup_error_lp > 0.0 && r.std_error > 0.0));
        assert!(a.reports.iter().all(|r| r.node_error_lp <= r.sup_error_lp));
        assert!(a.reports[0].sup_error_lp > a.reports[1].sup_error_lp);
    }

    #[test]
    fn independent_of_worker_count() {
        let s = setup(40);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| strong_errors(&s, &[1.0 / 16.0]).unwrap().reports)
        };
        assert_eq!(run(1), run(3));
    }
}
