use serde::{Deserialize, Serialize};

use super::Grid1D;
use crate::error::{Error, Result};

/// Function values at the nodes of a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite field value at node {j}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Wraps values the caller already knows to be finite and of the right length.
    pub(crate) fn from_raw(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_grid(&self, other: &RealField) -> Result<()> {
        if self.grid.is_compatible(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )))
        }
    }

    /// `sum v dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    /// `sum |v| dx`; the grid stand-in for the total-variation norm of a density.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.dx()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.dx()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Max over grid nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Max of `|v|` over the outer tenth of the domain.
    pub fn boundary_leakage(&self) -> f64 {
        self.grid
            .outer_zone()
            .fold(0.0_f64, |m, j| m.max(self.values[j].abs()))
    }

    /// Discrete `L^2` inner product `sum f g dx`.
    pub fn inner(&self, other: &RealField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.dx())
    }

    pub fn scaled(&self, c: f64) -> RealField {
        Self::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    fn zip_with(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Result<RealField> {
        self.check_same_grid(other)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &RealField) -> Result<RealField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RealField) -> Result<RealField> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product on the grid.
    pub fn mul(&self, other: &RealField) -> Result<RealField> {
        self.zip_with(other, |a, b| a * b)
    }
}
