use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[-L, L)` standing in for the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    half_length: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(half_length: f64, n_points: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::invalid(format!(
                "half length must be positive and finite, got {half_length}"
            )));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::invalid(format!(
                "point count must be a power of two >= 8, got {n_points}"
            )));
        }
        Ok(Self {
            half_length,
            n_points,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.n_points as f64
    }

    /// Domain length `2L`.
    pub fn period(&self) -> f64 {
        2.0 * self.half_length
    }

    /// Node `j` sits at `-L + j dx`.
    pub fn node(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    /// Signed mode index of DFT slot `j`: `0, 1, .., n/2-1, -n/2, .., -1`.
    pub fn mode_index(&self, j: usize) -> i64 {
        let n = self.n_points as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Wavenumbers `k_m = pi m / L` in DFT slot order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|j| PI * self.mode_index(j) as f64 / self.half_length)
            .collect()
    }

    /// Largest resolved wavenumber magnitude, `pi n / (2L) = pi / dx`.
    pub fn max_wavenumber(&self) -> f64 {
        PI * (self.n_points / 2) as f64 / self.half_length
    }

    /// Nodes with `|xi| >= 0.9 L`, the zone used for boundary-leakage reports.
    pub fn outer_zone(&self) -> impl Iterator<Item = usize> + '_ {
        let cut = 0.9 * self.half_length;
        (0..self.n_points).filter(move |&j| self.node(j).abs() >= cut)
    }

    pub fn is_compatible(&self, other: &Grid1D) -> bool {
        self.n_points == other.n_points && self.half_length == other.half_length
    }
}
