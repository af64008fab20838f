//! Temporal Hölder seminorms of sampled paths.

use rayon::prelude::*;
use serde::Serialize;

use super::stats::{self, Bootstrap};
use crate::error::{Error, Result};
use crate::model::CirParams;
use crate::paths::{cumulative_path, fill_increments, TimeGrid};
use crate::schemes::{Trajectory, TransformedStepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    /// Every pair of nodes; limited to [`ALL_PAIRS_MAX_STEPS`] steps.
    AllPairs,
    /// Pairs whose index difference is a power of two. The sup over this
    /// subset never exceeds the all-pairs sup.
    DyadicLags,
}

pub const ALL_PAIRS_MAX_STEPS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub exponent_used: f64,
    pub p: f64,
    pub pair_policy: PairPolicy,
    /// `L^p` norm over paths of the pathwise seminorm.
    pub estimate: f64,
    pub std_error: f64,
    /// Number of steps of the grid the seminorm was taken on.
    pub grid_level: usize,
}

fn lags(n_steps: usize, policy: PairPolicy) -> Vec<usize> {
    match policy {
        PairPolicy::AllPairs => (1..=n_steps).collect(),
        PairPolicy::DyadicLags => (0..usize::BITS)
            .map(|k| 1usize << k)
            .take_while(|&l| l <= n_steps)
            .collect(),
    }
}

/// `lag -> (lag h)^-kappa` for the lags used by `policy`.
fn lag_weights(n_steps: usize, h: f64, kappa: f64, policy: PairPolicy) -> Vec<(usize, f64)> {
    lags(n_steps, policy)
        .into_iter()
        .map(|l| (l, (l as f64 * h).powf(-kappa)))
        .collect()
}

fn seminorm_with(values: &[f64], weights: &[(usize, f64)]) -> f64 {
    let mut sup: f64 = 0.0;
    for &(lag, w) in weights {
        let m = values
            .iter()
            .zip(&values[lag..])
            .fold(0.0f64, |acc, (a, b)| acc.max((b - a).abs()));
        sup = sup.max(m * w);
    }
    sup
}

fn check_policy(n_steps: usize, policy: PairPolicy) -> Result<()> {
    if policy == PairPolicy::AllPairs && n_steps > ALL_PAIRS_MAX_STEPS {
        return Err(Error::validation(
            "pair_policy",
            format!("all pairs limited to {ALL_PAIRS_MAX_STEPS} steps, grid has {n_steps}"),
        ));
    }
    Ok(())
}

fn check_exponents(kappa: f64, p: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::validation(
            "kappa",
            format!("must lie in (0, 1), got {kappa}"),
        ));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::validation("p", format!("must be > 0, got {p}")));
    }
    Ok(())
}

/// `max |v_i - v_j| / |t_i - t_j|^kappa` over the pairs chosen by `policy`,
/// for node values `v` on a grid of step `h`.
pub fn path_holder_seminorm(values: &[f64], h: f64, kappa: f64, policy: PairPolicy) -> Result<f64> {
    let n = values.len().saturating_sub(1);
    check_exponents(kappa, 1.0)?;
    check_policy(n, policy)?;
    Ok(seminorm_with(values, &lag_weights(n, h, kappa, policy)))
}

fn lp_report(
    seminorms: &[f64],
    kappa: f64,
    p: f64,
    policy: PairPolicy,
    grid_level: usize,
    seed: u64,
) -> HolderReport {
    let col: Vec<f64> = seminorms.iter().map(|s| s.powf(p)).collect();
    HolderReport {
        exponent_used: kappa,
        p,
        pair_policy: policy,
        estimate: stats::mean(&col).powf(1.0 / p),
        std_error: Bootstrap::new(seed).std_error(&[&col], |m| m[0].powf(1.0 / p)),
        grid_level,
    }
}

/// `L^p` norm over trajectories of the pathwise Hölder seminorm.
pub fn holder_norm_estimate(
    trajectories: &[Trajectory],
    kappa: f64,
    p: f64,
    policy: PairPolicy,
) -> Result<HolderReport> {
    check_exponents(kappa, p)?;
    let Some(first) = trajectories.first() else {
        return Err(Error::validation("trajectories", "empty"));
    };
    let grid = first.grid;
    if trajectories.iter().any(|t| t.grid != grid) {
        return Err(Error::validation("trajectories", "grids differ"));
    }
    check_policy(grid.n_steps(), policy)?;
    let weights = lag_weights(grid.n_steps(), grid.step(), kappa, policy);
    let seminorms: Vec<f64> = trajectories
        .par_iter()
        .map(|t| seminorm_with(&t.values, &weights))
        .collect();
    Ok(lp_report(&seminorms, kappa, p, policy, grid.n_steps(), 0))
}

/// Admissible interval for `epsilon` given `alpha`:
/// `((alpha - 1/2)^+ / (1 + 2 alpha), 2 alpha / (1 + 2 alpha))`.
pub fn drift_epsilon_range(alpha: f64) -> (f64, f64) {
    let d = 1.0 + 2.0 * alpha;
    ((alpha - 0.5).max(0.0) / d, 2.0 * alpha / d)
}

/// Exponent `2 alpha / (1 + 2 alpha) - epsilon` of the drift path `Z - W`.
pub fn drift_holder_exponent(alpha: f64, epsilon: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Regime(format!("need alpha > 0, got {alpha}")));
    }
    let (lo, hi) = drift_epsilon_range(alpha);
    if !(epsilon > lo && epsilon < hi) {
        return Err(Error::validation(
            "epsilon",
            format!("must lie in ({lo}, {hi}) for alpha = {alpha}, got {epsilon}"),
        ));
    }
    Ok(2.0 * alpha / (1.0 + 2.0 * alpha) - epsilon)
}

/// Hölder estimate of `t -> Z_t - W_t`, with `brownian[i]` the node values
/// of the Brownian path driving `z[i]`.
pub fn drift_path_holder(
    z: &[Trajectory],
    brownian: &[Vec<f64>],
    alpha: f64,
    epsilon: f64,
    p: f64,
    policy: PairPolicy,
) -> Result<HolderReport> {
    let kappa = drift_holder_exponent(alpha, epsilon)?;
    if z.len() != brownian.len() {
        return Err(Error::validation(
            "brownian",
            "one Brownian path per trajectory required",
        ));
    }
    let diffs = z
        .iter()
        .zip(brownian)
        .map(|(t, w)| {
            if w.len() != t.values.len() {
                return Err(Error::validation(
                    "brownian",
                    "Brownian path and trajectory grids differ",
                ));
            }
            let values = t.values.iter().zip(w).map(|(a, b)| a - b).collect();
            Trajectory::new(t.grid, values, t.kind)
        })
        .collect::<Result<Vec<_>>>()?;
    holder_norm_estimate(&diffs, kappa, p, policy)
}

/// Hölder estimates of the transformed process and of its drift path at
/// several grid levels, all subsampled from one fine simulation per path.
#[derive(Debug, Clone, Serialize)]
pub struct HolderStudy {
    pub process: Vec<HolderReport>,
    pub drift_path: Vec<HolderReport>,
}

#[derive(Debug, Clone)]
pub struct HolderSetup {
    pub params: CirParams,
    pub horizon: f64,
    /// Finest grid; every level must divide it.
    pub fine_steps: usize,
    pub levels: Vec<usize>,
    /// Exponent of the process is `1/2 - epsilon`.
    pub epsilon: f64,
    /// Exponent of the drift path is `2 alpha / (1 + 2 alpha) - drift_epsilon`.
    pub drift_epsilon: f64,
    pub p: f64,
    pub policy: PairPolicy,
    pub seed: u64,
    pub n_paths: usize,
}

pub fn holder_study(setup: &HolderSetup) -> Result<HolderStudy> {
    let params = setup.params;
    params.validate()?;
    let model = params.transformed()?;
    if !(setup.epsilon > 0.0 && setup.epsilon < 0.5) {
        return Err(Error::validation(
            "epsilon",
            format!("must lie in (0, 1/2), got {}", setup.epsilon),
        ));
    }
    let kappa = 0.5 - setup.epsilon;
    let kappa_drift = drift_holder_exponent(model.alpha, setup.drift_epsilon)?;
    check_exponents(kappa, setup.p)?;
    if setup.n_paths == 0 {
        return Err(Error::validation("n_paths", "must be > 0"));
    }
    let fine = TimeGrid::new(setup.horizon, setup.fine_steps)?;
    let stepper = TransformedStepper::new(model, fine.step())?;
    let mut plan = Vec::with_capacity(setup.levels.len());
    for &level in &setup.levels {
        if level == 0 || !setup.fine_steps.is_multiple_of(level) {
            return Err(Error::validation(
                "levels",
                format!("level {level} does not divide {} steps", setup.fine_steps),
            ));
        }
        check_policy(level, setup.policy)?;
        let h = setup.horizon / level as f64;
        plan.push((
            setup.fine_steps / level,
            lag_weights(level, h, kappa, setup.policy),
            lag_weights(level, h, kappa_drift, setup.policy),
        ));
    }

    let per_path: Vec<Vec<(f64, f64)>> = (0..setup.n_paths)
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![0.0; setup.fine_steps],
                    Vec::new(),
                    Vec::new(),
                    Vec::new(),
                )
            },
            |(inc, z, zs, ds), i| {
                fill_increments(setup.seed, i as u64, fine.step(), inc);
                stepper.run_into(params.z0(), inc, z);
                let w = cumulative_path(inc);
                plan.iter()
                    .map(|(stride, wz, wd)| {
                        zs.clear();
                        zs.extend(z.iter().step_by(*stride).copied());
                        ds.clear();
                        ds.extend(z.iter().zip(&w).step_by(*stride).map(|(a, b)| a - b));
                        (seminorm_with(zs, wz), seminorm_with(ds, wd))
                    })
                    .collect()
            },
        )
        .collect();

    let mut process = Vec::new();
    let mut drift_path = Vec::new();
    for (c, &level) in setup.levels.iter().enumerate() {
        let a: Vec<f64> = per_path.iter().map(|r| r[c].0).collect();
        let b: Vec<f64> = per_path.iter().map(|r| r[c].1).collect();
        process.push(lp_report(
            &a,
            kappa,
            setup.p,
            setup.policy,
            level,
            setup.seed,
        ));
        drift_path.push(lp_report(
            &b,
            kappa_drift,
            setup.p,
            setup.policy,
            level,
            setup.seed,
        ));
    }
    Ok(HolderStudy {
        process,
        drift_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::TrajectoryKind;

    fn traj(n: usize, f: impl Fn(f64) -> f64) -> Trajectory {
        let g = TimeGrid::new(1.0, n).unwrap();
        Trajectory::new(g, g.nodes().map(f).collect(), TrajectoryKind::Transformed).unwrap()
    }

    #[test]
    fn square_root_path_has_unit_half_seminorm() {
        let t = traj(256, f64::sqrt);
        for policy in [PairPolicy::AllPairs, PairPolicy::DyadicLags] {
            let r = holder_norm_estimate(std::slice::from_ref(&t), 0.5, 2.0, policy).unwrap();
            assert!((r.estimate - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_and_linear_paths() {
        let c = holder_norm_estimate(&[traj(64, |_| 3.0)], 0.5, 1.0, PairPolicy::AllPairs).unwrap();
        assert_eq!(c.estimate, 0.0);
        let l = holder_norm_estimate(&[traj(64, |t| t)], 0.5, 1.0, PairPolicy::AllPairs).unwrap();
        assert!((l.estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_pairs_dominates_dyadic() {
        let g = TimeGrid::new(1.0, 300).unwrap();
        let w = cumulative_path(&crate::paths::generate_increments(4, 0, &g));
        let t = Trajectory::new(g, w, TrajectoryKind::Reference).unwrap();
        let a = path_holder_seminorm(&t.values, g.step(), 0.4, PairPolicy::AllPairs).unwrap();
        let d = path_holder_seminorm(&t.values, g.step(), 0.4, PairPolicy::DyadicLags).unwrap();
        assert!(a >= d && d > 0.0);
    }

    #[test]
    fn all_pairs_size_limit() {
        let t = traj(2048, |t| t);
        assert!(
            holder_norm_estimate(std::slice::from_ref(&t), 0.5, 1.0, PairPolicy::AllPairs).is_err()
        );
        assert!(holder_norm_estimate(&[t], 0.5, 1.0, PairPolicy::DyadicLags).is_ok());
    }

    #[test]
    fn drift_epsilon_interval() {
        let (lo, hi) = drift_epsilon_range(0.25);
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0 / 3.0).abs() < 1e-15);
        assert!((drift_holder_exponent(0.25, 0.05).unwrap() - (1.0 / 3.0 - 0.05)).abs() < 1e-15);
        assert!(drift_holder_exponent(0.25, 0.34).is_err());
        assert!(drift_holder_exponent(1.5, 0.2).is_err());
    }

    #[test]
    fn zero_brownian_reduces_to_process() {
        let t = traj(128, |s| (1.0 + s).sqrt());
        let zero = vec![vec![0.0; 129]];
        let a = drift_path_holder(
            std::slice::from_ref(&t),
            &zero,
            0.25,
            0.1,
            2.0,
            PairPolicy::AllPairs,
        )
        .unwrap();
        let b = holder_norm_estimate(&[t], 1.0 / 3.0 - 0.1, 2.0, PairPolicy::AllPairs).unwrap();
        assert!((a.estimate - b.estimate).abs() < 1e-15);
    }

    #[test]
    fn study_is_monotone_in_level() {
        let setup = HolderSetup {
            params: CirParams::new(0.375, 0.0, 1.0, 1.0).unwrap(),
            horizon: 1.0,
            fine_steps: 512,
            levels: vec![32, 128, 512],
            epsilon: 0.1,
            drift_epsilon: 0.05,
            p: 2.0,
            policy: PairPolicy::DyadicLags,
            seed: 1,
            n_paths: 50,
        };
        let s = holder_study(&setup).unwrap();
        for w in s.process.windows(2) {
            assert!(w[1].estimate >= w[0].estimate * (1.0 - 1e-12));
        }
        assert!(s
            .drift_path
            .iter()
            .all(|r| r.estimate.is_finite() && r.estimate > 0.0));
    }
}
