//! Reproducible Brownian increments
//!
//! Every path owns an independent ChaCha8 stream: the 64-bit master seed fills
//! the key and the path index selects the stream, so `(master_seed,
//! path_index)` maps injectively onto a stream without any shared state.
//! Increments are generated once at the finest level of an experiment and
//! summed blockwise ([`coarsen`]) for coarser levels, which drives every level
//! with the same Wiener path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{CevError, Result};

/// Identifies one path's random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub path_index: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        Self {
            master_seed,
            path_index,
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path_index);
        rng
    }
}

/// Increments `W_{t_{k+1}} - W_{t_k}` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementArray {
    dt: f64,
    values: Vec<f64>,
}

impl IncrementArray {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CevError::InvalidParameter {
                name: "dt",
                reason: format!("increment step must be finite and > 0, got {dt}"),
            });
        }
        if values.is_empty() {
            return Err(CevError::InvalidParameter {
                name: "n",
                reason: "increment array must not be empty".into(),
            });
        }
        Ok(Self { dt, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `W_T`, summed left to right.
    pub fn terminal(&self) -> f64 {
        left_to_right_sum(&self.values)
    }

    pub fn coarsen(&self, factor: usize) -> Result<IncrementArray> {
        coarsen(self, factor)
    }
}

fn left_to_right_sum(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, &x| acc + x)
}

/// `n` i.i.d. `N(0, dt)` draws from the stream of `key`.
pub fn sample_increments(key: StreamKey, n: usize, dt: f64) -> Result<IncrementArray> {
    if n == 0 {
        return Err(CevError::InvalidParameter {
            name: "n",
            reason: "need at least one increment".into(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CevError::InvalidParameter {
            name: "dt",
            reason: format!("increment step must be finite and > 0, got {dt}"),
        });
    }
    let scale = dt.sqrt();
    let mut rng = key.rng();
    let values = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();
    Ok(IncrementArray { dt, values })
}

/// Sums consecutive blocks of `factor` increments, left to right within each
/// block. The output step is `dt·factor`.
pub fn coarsen(inc: &IncrementArray, factor: usize) -> Result<IncrementArray> {
    if factor == 0 || !inc.len().is_multiple_of(factor) {
        return Err(CevError::NonDivisibleFactor {
            factor,
            len: inc.len(),
        });
    }
    if factor == 1 {
        return Ok(inc.clone());
    }
    Ok(IncrementArray {
        dt: inc.dt * factor as f64,
        values: inc
            .values
            .chunks_exact(factor)
            .map(left_to_right_sum)
            .collect(),
    })
}
