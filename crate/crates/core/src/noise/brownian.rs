//! Seeded Wiener increments `dW^i` for the noise modes.
//!
//! Mode `i` draws from its own ChaCha8 stream: the generator is seeded with the
//! master seed and then switched to stream `i`. Adding modes therefore never
//! changes the paths of the existing ones, and increments for a given
//! `(seed, mode, step)` are the same standard normal scaled by `sqrt(dt)`
//! whatever `dt` is.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `N x n_steps` Gaussian increments with `W^0_t = t` as the implicit zeroth row.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrements {
    n_modes: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
    /// Row-major, one row per mode `1..=N`.
    data: Vec<f64>,
}

/// SplitMix64 finalizer, used to derive independent member seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for ensemble member / sweep entry `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index))
}

impl BrownianIncrements {
    pub fn sample(n_modes: usize, n_steps: usize, dt: f64, seed: u64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("need at least one time step"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let scale = dt.sqrt();
        let mut data = Vec::with_capacity(n_modes * n_steps);
        for mode in 1..=n_modes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(mode as u64);
            data.extend((0..n_steps).map(|_| scale * rng.sample::<f64, _>(StandardNormal)));
        }
        Ok(Self {
            n_modes,
            n_steps,
            dt,
            seed,
            data,
        })
    }

    pub fn from_parts(
        n_modes: usize,
        n_steps: usize,
        dt: f64,
        seed: u64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != n_modes * n_steps {
            return Err(Error::Increments(format!(
                "expected {} values for {n_modes} modes x {n_steps} steps, got {}",
                n_modes * n_steps,
                data.len()
            )));
        }
        if n_steps == 0 || !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Increments(format!(
                "bad shape: n_steps {n_steps}, dt {dt}"
            )));
        }
        Ok(Self {
            n_modes,
            n_steps,
            dt,
            seed,
            data,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `dW^i` over step `step`; the zeroth row is exactly `dt`.
    pub fn increment(&self, mode: usize, step: usize) -> f64 {
        if mode == 0 {
            self.dt
        } else {
            self.data[(mode - 1) * self.n_steps + step]
        }
    }

    /// Row of mode `i >= 1`.
    pub fn row(&self, mode: usize) -> &[f64] {
        &self.data[(mode - 1) * self.n_steps..mode * self.n_steps]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Increments summed over `[from, to)`.
    pub fn block_increment(&self, mode: usize, from: usize, to: usize) -> f64 {
        if mode == 0 {
            self.dt * (to - from) as f64
        } else {
            self.row(mode)[from..to].iter().sum()
        }
    }

    /// Same path on a grid `factor` times coarser (sums of consecutive increments).
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        let n_steps = self.n_steps / factor;
        let mut data = Vec::with_capacity(self.n_modes * n_steps);
        for mode in 1..=self.n_modes {
            let row = self.row(mode);
            data.extend(row.chunks_exact(factor).map(|c| c.iter().sum::<f64>()));
        }
        Ok(Self {
            n_modes: self.n_modes,
            n_steps,
            dt: self.dt * factor as f64,
            seed: self.seed,
            data,
        })
    }

    /// Read-only access restricted to steps before `available`.
    pub fn view(&self, available: usize) -> IncrementsView<'_> {
        IncrementsView {
            incs: self,
            available: available.min(self.n_steps),
        }
    }

    /// Little-endian dump: `N`, `n_steps` (u64), `dt` (f64), `seed` (u64), then
    /// the `N x n_steps` increments row by row as f64.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.n_modes as u64).to_le_bytes())?;
        w.write_all(&(self.n_steps as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)
                .map_err(|e| Error::Increments(format!("truncated header or data: {e}")))?;
            Ok(word)
        };
        let n_modes = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        let total = n_modes
            .checked_mul(n_steps)
            .ok_or_else(|| Error::Increments("header shape overflows".into()))?;
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(f64::from_le_bytes(next(&mut r)?));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Increments("trailing bytes after increments".into()));
        }
        Self::from_parts(n_modes, n_steps, dt, seed, data)
    }
}

/// The part of a noise path observable at a given step (progressive measurability).
#[derive(Debug, Clone, Copy)]
pub struct IncrementsView<'a> {
    incs: &'a BrownianIncrements,
    available: usize,
}

impl IncrementsView<'_> {
    pub fn available(&self) -> usize {
        self.available
    }

    pub fn n_modes(&self) -> usize {
        self.incs.n_modes
    }

    pub fn dt(&self) -> f64 {
        self.incs.dt
    }

    pub fn increment(&self, mode: usize, step: usize) -> Option<f64> {
        (step < self.available && mode <= self.incs.n_modes)
            .then(|| self.incs.increment(mode, step))
    }

    /// `W^i` at the current time.
    pub fn value(&self, mode: usize) -> f64 {
        if mode == 0 {
            return self.incs.dt * self.available as f64;
        }
        if mode > self.incs.n_modes {
            return 0.0;
        }
        self.incs.row(mode)[..self.available].iter().sum()
    }
}
