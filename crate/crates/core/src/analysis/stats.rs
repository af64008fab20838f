//! Means and bootstrap resampling with fixed reduction order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const DEFAULT_RESAMPLES: usize = 200;

// Keeps bootstrap streams apart from the Brownian streams of the same seed.
const BOOTSTRAP_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Mean computed relative to the first sample, in index order.
///
/// A column of identical values has exactly that value as its mean.
pub fn mean(xs: &[f64]) -> f64 {
    let Some(&pivot) = xs.first() else {
        return f64::NAN;
    };
    let shift: f64 = xs.iter().fold(0.0, |acc, x| acc + (x - pivot));
    pivot + shift / xs.len() as f64
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss = xs.iter().fold(0.0, |acc, x| acc + (x - m) * (x - m));
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Empirical quantile with linear interpolation; `xs` need not be sorted.
pub fn quantile(xs: &[f64], level: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = level.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Nonparametric bootstrap over paths.
///
/// Resample `r` draws its indices from its own keyed stream, so the same
/// resamples are applied to every column handed to one call.
#[derive(Debug, Clone, Copy)]
pub struct Bootstrap {
    pub seed: u64,
    pub resamples: usize,
}

impl Bootstrap {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            resamples: DEFAULT_RESAMPLES,
        }
    }

    /// Means of each column under each resample: `out[r][c]`.
    /// All columns must have the same length.
    pub fn resampled_means(&self, columns: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = columns.first().map_or(0, |c| c.len());
        debug_assert!(columns.iter().all(|c| c.len() == n));
        if n == 0 {
            return vec![vec![f64::NAN; columns.len()]; self.resamples];
        }
        (0..self.resamples)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ BOOTSTRAP_SALT);
                rng.set_stream(r as u64);
                let mut sums = vec![0.0; columns.len()];
                let pivots: Vec<f64> = columns.iter().map(|c| c[0]).collect();
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    for (s, (c, p)) in sums.iter_mut().zip(columns.iter().zip(&pivots)) {
                        *s += c[i] - p;
                    }
                }
                sums.iter()
                    .zip(&pivots)
                    .map(|(s, p)| p + s / n as f64)
                    .collect()
            })
            .collect()
    }

    /// Bootstrap standard error of `stat(column means)`.
    pub fn std_error<F: Fn(&[f64]) -> f64>(&self, columns: &[&[f64]], stat: F) -> f64 {
        let reps: Vec<f64> = self
            .resampled_means(columns)
            .iter()
            .map(|m| stat(m))
            .filter(|v| v.is_finite())
            .collect();
        std_dev(&reps)
    }
}
