//! Itô integration against the noise field (left-point rule in time).

use serde::{Deserialize, Serialize};

use super::{BrownianIncrements, NoiseModel};
use crate::error::{Error, Result};
use crate::spectral::RealField;
use crate::trajectory::Trajectory;

fn check_shapes(noise: &NoiseModel, incs: &BrownianIncrements) -> Result<()> {
    if incs.n_modes() != noise.n_modes() {
        return Err(Error::invalid(format!(
            "noise model has {} modes but the increments carry {}",
            noise.n_modes(),
            incs.n_modes()
        )));
    }
    Ok(())
}

/// `c(xi) = e^0(xi) dW^0 + sum_i e^i(xi) dW^i` over the steps `[from, to)`.
pub(crate) fn increment_coefficient(
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    from: usize,
    to: usize,
    out: &mut [f64],
) {
    let d0 = incs.block_increment(0, from, to);
    for (o, e) in out.iter_mut().zip(noise.drift().field.values()) {
        *o = e * d0;
    }
    for i in 1..=noise.n_modes() {
        let dw = incs.block_increment(i, from, to);
        for (o, e) in out.iter_mut().zip(noise.mode(i).field.values()) {
            *o += e * dw;
        }
    }
}

/// `xi -> sum_{i>=1} e^i Z dW^i_step + e^0 Z dt`, with `Z` taken at the left end of the step.
pub fn noise_increment(
    z: &RealField,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    step: usize,
) -> Result<RealField> {
    z.check_same_grid(&RealField::zeros(*noise.grid()))?;
    check_shapes(noise, incs)?;
    if step >= incs.n_steps() {
        return Err(Error::OutOfRange(format!(
            "step {step} outside 0..{}",
            incs.n_steps()
        )));
    }
    let mut coeff = vec![0.0; z.len()];
    increment_coefficient(noise, incs, step, step + 1, &mut coeff);
    let values = coeff.iter().zip(z.values()).map(|(c, v)| c * v).collect();
    RealField::new(*z.grid(), values)
}

/// How the integrand samples are turned into `int e^i Z(d xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Node values of a density, weighted by `dx`.
    Density,
    /// Point masses sitting at the nodes (measure-valued integrand).
    Weights,
}

/// Cumulative stochastic integral on the snapshot schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoIntegral {
    pub times: Vec<f64>,
    /// Contribution of `e^0` against `dW^0 = dt`.
    pub drift: Vec<f64>,
    /// Contribution of the modes `i >= 1`.
    pub martingale: Vec<f64>,
}

impl ItoIntegral {
    pub fn total(&self) -> Vec<f64> {
        self.drift
            .iter()
            .zip(&self.martingale)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// `t -> sum_{s<t} sum_i (int e^i Z(s, xi) d xi) dW^i_s` for density integrands.
pub fn ito_integral(
    path: &Trajectory,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
) -> Result<ItoIntegral> {
    ito_integral_with(path, noise, incs, Quadrature::Density)
}

pub fn ito_integral_with(
    path: &Trajectory,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    quadrature: Quadrature,
) -> Result<ItoIntegral> {
    check_shapes(noise, incs)?;
    if path.n_steps() != incs.n_steps() {
        return Err(Error::ScheduleMismatch(format!(
            "path covers {} steps but the increments cover {}",
            path.n_steps(),
            incs.n_steps()
        )));
    }
    if !path.grid().is_compatible(noise.grid()) {
        return Err(Error::GridMismatch(
            "integrand and noise live on different grids".into(),
        ));
    }
    let weight = match quadrature {
        Quadrature::Density => path.grid().dx(),
        Quadrature::Weights => 1.0,
    };
    let pair = |e: &RealField, z: &[f64]| -> f64 {
        e.values().iter().zip(z).map(|(a, b)| a * b).sum::<f64>() * weight
    };
    let mut drift = Vec::with_capacity(path.len());
    let mut martingale = Vec::with_capacity(path.len());
    let (mut d_acc, mut m_acc) = (0.0, 0.0);
    drift.push(0.0);
    martingale.push(0.0);
    for k in 0..path.len() - 1 {
        let (from, to) = (path.step_of(k), path.step_of(k + 1));
        let z = path.values(k);
        d_acc += pair(&noise.drift().field, z) * incs.block_increment(0, from, to);
        for i in 1..=noise.n_modes() {
            m_acc += pair(&noise.mode(i).field, z) * incs.block_increment(i, from, to);
        }
        drift.push(d_acc);
        martingale.push(m_acc);
    }
    Ok(ItoIntegral {
        times: path.times().to_vec(),
        drift,
        martingale,
    })
}
