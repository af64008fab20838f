//! Uniform time grids and reproducible Brownian increments.
//!
//! Increment `k` of path `i` is a pure function of `(seed, i, k)`: the
//! ChaCha8 keystream keyed by `seed` is split into one stream per path and
//! read at word position `2k`, so results do not depend on how paths are
//! distributed over workers. Each 64-bit word becomes one Gaussian through
//! the inverse normal CDF.

use std::io::{Read, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Uniform partition `t_k = k h` of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::validation(
                "horizon",
                format!("must be > 0, got {horizon}"),
            ));
        }
        Ok(Self { horizon, n_steps })
    }

    /// Grid with step `h`; `horizon / h` must be an integer.
    pub fn with_step(horizon: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::validation("h", format!("must be > 0, got {h}")));
        }
        let n = horizon / h;
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > 1e-9 * rounded {
            return Err(Error::validation(
                "h",
                format!("horizon {horizon} is not an integer multiple of step {h}"),
            ));
        }
        Self::new(horizon, rounded as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        if self.n_steps == 0 {
            self.horizon
        } else {
            self.horizon / self.n_steps as f64
        }
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.node(k))
    }

    /// Index of `floor(s)` on the grid, the last node `<= s`.
    pub fn floor_index(&self, s: f64) -> usize {
        if self.n_steps == 0 || s <= 0.0 {
            return 0;
        }
        let mut k = ((s / self.step()).floor() as usize).min(self.n_steps);
        if self.node(k) > s {
            k -= 1;
        } else if k < self.n_steps && self.node(k + 1) <= s {
            k += 1;
        }
        k
    }

    /// Index of `ceil(s)` on the grid, the first node `>= s`.
    pub fn ceil_index(&self, s: f64) -> usize {
        let k = self.floor_index(s);
        if self.node(k) < s && k < self.n_steps {
            k + 1
        } else {
            k
        }
    }

    /// Node index equal to `t` up to rounding, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        if self.n_steps == 0 {
            return (t == 0.0).then_some(0);
        }
        let k = (t / self.step()).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        ((self.node(k) - t).abs() <= 1e-9 * self.step()).then_some(k)
    }
}

/// Increments are rounded to integer multiples of this quantum, so sums of
/// up to millions of them are exact in `f64` and coarse paths agree bit for
/// bit with subsampled fine paths.
pub const INCREMENT_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

#[inline]
fn quantize(x: f64) -> f64 {
    (x * (1u64 << 40) as f64).round() * INCREMENT_QUANTUM
}

#[inline]
fn standard_normal(word: u64) -> f64 {
    // Uniform on the open interval (0, 1).
    let u = ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

fn path_stream(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Single increment `W_{t_{k+1}} - W_{t_k}` of path `path_index`.
pub fn increment_at(seed: u64, path_index: u64, step: usize, h: f64) -> f64 {
    let mut rng = path_stream(seed, path_index);
    rng.set_word_pos(2 * step as u128);
    quantize(h.sqrt() * standard_normal(rng.next_u64()))
}

/// Fills `out` with the first `out.len()` increments of a path with step `h`.
pub fn fill_increments(seed: u64, path_index: u64, h: f64, out: &mut [f64]) {
    let mut rng = path_stream(seed, path_index);
    let scale = h.sqrt();
    for x in out.iter_mut() {
        *x = quantize(scale * standard_normal(rng.next_u64()));
    }
}

pub fn generate_increments(seed: u64, path_index: u64, grid: &TimeGrid) -> Vec<f64> {
    let mut out = vec![0.0; grid.n_steps()];
    fill_increments(seed, path_index, grid.step(), &mut out);
    out
}

/// Sums consecutive blocks of `factor` increments.
pub fn coarsen_increments(fine: &[f64], factor: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    coarsen_into(fine, factor, &mut out)?;
    Ok(out)
}

pub(crate) fn coarsen_into(fine: &[f64], factor: usize, out: &mut Vec<f64>) -> Result<()> {
    if factor == 0 || !fine.len().is_multiple_of(factor) {
        return Err(Error::validation(
            "factor",
            format!(
                "{} increments are not divisible into blocks of {factor}",
                fine.len()
            ),
        ));
    }
    out.clear();
    out.extend(
        fine.chunks_exact(factor)
            .map(|c| c.iter().fold(0.0, |acc, x| acc + x)),
    );
    Ok(())
}

/// Node values `W_{t_0} = 0, W_{t_{k+1}} = W_{t_k} + dW_k`.
pub fn cumulative_path(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut w = 0.0;
    out.push(w);
    for dw in increments {
        w += dw;
        out.push(w);
    }
    out
}

/// All increments of `n_paths` paths, row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianEnsemble {
    pub seed: u64,
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub increments: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"CIRBM\0\0\0";
const FORMAT_VERSION: u32 = 1;

impl BrownianEnsemble {
    pub fn generate(seed: u64, n_paths: usize, grid: TimeGrid) -> Self {
        let n = grid.n_steps();
        let mut increments = vec![0.0; n * n_paths];
        if n > 0 {
            increments
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| fill_increments(seed, i as u64, grid.step(), row));
        }
        Self {
            seed,
            grid,
            n_paths,
            increments,
        }
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.grid.n_steps();
        &self.increments[i * n..(i + 1) * n]
    }

    /// Little-endian dump: magic, version (u32), seed (u64), horizon (f64),
    /// n_steps (u64), n_paths (u64), then the increments as f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.grid.horizon().to_le_bytes())?;
        w.write_all(&(self.grid.n_steps() as u64).to_le_bytes())?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        for x in &self.increments {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not a Brownian ensemble dump".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported ensemble version {version}"
            )));
        }
        let mut next8 = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let seed = u64::from_le_bytes(next8(&mut r)?);
        let horizon = f64::from_le_bytes(next8(&mut r)?);
        let n_steps = u64::from_le_bytes(next8(&mut r)?) as usize;
        let n_paths = u64::from_le_bytes(next8(&mut r)?) as usize;
        let grid = TimeGrid::new(horizon, n_steps)?;
        let mut increments = Vec::with_capacity(n_steps * n_paths);
        for _ in 0..n_steps * n_paths {
            increments.push(f64::from_le_bytes(next8(&mut r)?));
        }
        Ok(Self {
            seed,
            grid,
            n_paths,
            increments,
        })
    }
}
