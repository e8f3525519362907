//! Discretized Wiener increments with one deterministic substream per path.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Noise for one path on a uniform grid.
///
/// The generator for a path is the ChaCha stream `path_index` under the key
/// derived from `master_seed`, so any path can be regenerated on its own.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseGrid {
    pub dt: f64,
    pub steps: usize,
    pub noise_dim: usize,
    pub master_seed: u64,
    pub path_index: u64,
}

impl NoiseGrid {
    pub fn new(dt: f64, steps: usize, noise_dim: usize, master_seed: u64, path_index: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("dt must be positive, got {dt}")));
        }
        if steps == 0 || noise_dim == 0 {
            return Err(Error::InvalidArgument(
                "steps and noise dimension must be positive".into(),
            ));
        }
        Ok(Self {
            dt,
            steps,
            noise_dim,
            master_seed,
            path_index,
        })
    }

    /// Path substream generator.
    pub fn rng(&self) -> ChaCha12Rng {
        path_rng(self.master_seed, self.path_index)
    }

    /// The `steps` increments `ΔW_n ~ N(0, dt·I_m)`.
    pub fn increments(&self) -> Vec<DVector<f64>> {
        let mut rng = self.rng();
        let scale = libm::sqrt(self.dt);
        (0..self.steps)
            .map(|_| {
                DVector::from_fn(self.noise_dim, |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    scale * z
                })
            })
            .collect()
    }
}

pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Increment products used by the Milstein correction: `(ΔW^j)² − dt` on the
/// diagonal and `ΔW^{j1} ΔW^{j2}` off it.
pub fn milstein_products(dw: &DVector<f64>, dt: f64) -> DMatrix<f64> {
    let m = dw.len();
    DMatrix::from_fn(m, m, |a, b| {
        let p = dw[a] * dw[b];
        if a == b {
            p - dt
        } else {
            p
        }
    })
}
