use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Fourier, Grid1D, RealField};
use crate::error::{Error, Result};

/// Standard bump `exp(-1/(1-u^2))` on `(-1, 1)`, zero elsewhere. Not normalized.
pub fn bump(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

/// Width of the scaled mollifier `phi_eps = phi(./eps) / eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
}

impl MollifierSpec {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon }
    }

    fn validate(&self, grid: &Grid1D) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "mollifier width must be positive, got {}",
                self.epsilon
            )));
        }
        if self.epsilon >= 0.5 * grid.half_length() {
            return Err(Error::invalid(format!(
                "mollifier width {} must be below L/2 = {}",
                self.epsilon,
                0.5 * grid.half_length()
            )));
        }
        Ok(())
    }

    /// `phi_eps(xi - center)` on the grid (periodic distance), scaled to unit discrete mass.
    pub fn kernel_at(&self, grid: &Grid1D, center: f64) -> Result<RealField> {
        self.validate(grid)?;
        let period = grid.period();
        let mut values: Vec<f64> = grid
            .nodes()
            .into_iter()
            .map(|x| {
                let d = (x - center + 0.5 * period).rem_euclid(period) - 0.5 * period;
                bump(d / self.epsilon)
            })
            .collect();
        let mass: f64 = values.iter().sum::<f64>() * grid.dx();
        if mass <= 0.0 {
            // Narrower than one cell and off-node: put the unit mass on the nearest node.
            let j = ((center + grid.half_length()) / grid.dx()).round() as usize % grid.len();
            values[j] = 1.0 / grid.dx();
        } else {
            values.iter_mut().for_each(|v| *v /= mass);
        }
        RealField::new(*grid, values)
    }
}

/// Periodic convolution with a fixed `phi_eps`, kernel spectrum cached.
#[derive(Debug, Clone)]
pub struct Mollifier {
    spec: MollifierSpec,
    fourier: Fourier,
    kernel_hat: Vec<Complex64>,
}

impl Mollifier {
    pub fn new(grid: &Grid1D, spec: MollifierSpec) -> Result<Self> {
        let fourier = Fourier::new(grid);
        // Kernel laid out by signed offset so that its transform is real and even.
        let n = grid.len();
        let dx = grid.dx();
        let mut kernel: Vec<f64> = (0..n)
            .map(|j| {
                let offset = grid.mode_index(j) as f64 * dx;
                bump(offset / spec.epsilon)
            })
            .collect();
        spec.validate(grid)?;
        let mass: f64 = kernel.iter().sum();
        if mass <= 0.0 {
            kernel[0] = 1.0;
        } else {
            kernel.iter_mut().for_each(|v| *v /= mass);
        }
        let kernel_hat = fourier.forward(&kernel);
        Ok(Self {
            spec,
            fourier,
            kernel_hat,
        })
    }

    pub fn spec(&self) -> MollifierSpec {
        self.spec
    }

    pub fn apply_values(&self, values: &[f64]) -> Vec<f64> {
        let mut spec = self.fourier.forward(values);
        for (c, h) in spec.iter_mut().zip(&self.kernel_hat) {
            *c *= h;
        }
        self.fourier.inverse_real(spec)
    }

    pub fn apply(&self, f: &RealField) -> Result<RealField> {
        if !f.grid().is_compatible(self.fourier.grid()) {
            return Err(Error::GridMismatch(
                "mollifier built for another grid".into(),
            ));
        }
        Ok(RealField::from_raw(
            *f.grid(),
            self.apply_values(f.values()),
        ))
    }
}

/// `f * phi_eps` on the torus.
pub fn mollify(f: &RealField, spec: MollifierSpec) -> Result<RealField> {
    Mollifier::new(f.grid(), spec)?.apply(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{derivative, sobolev_norm};
    use std::f64::consts::PI;

    #[test]
    fn kernel_has_unit_mass() {
        let g = Grid1D::new(4.0, 256).unwrap();
        for eps in [0.05, 0.3, 1.0] {
            let k = MollifierSpec::new(eps).kernel_at(&g, 0.37).unwrap();
            assert!((k.mass() - 1.0).abs() < 1e-12);
            assert!(k.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn rejects_wide_kernel() {
        let g = Grid1D::new(1.0, 64).unwrap();
        let f = RealField::constant(g, 1.0);
        assert!(mollify(&f, MollifierSpec::new(0.5)).is_err());
        assert!(mollify(&f, MollifierSpec::new(0.0)).is_err());
    }

    #[test]
    fn constants_are_preserved() {
        let g = Grid1D::new(2.0, 128).unwrap();
        let f = RealField::constant(g, -1.75);
        let m = mollify(&f, MollifierSpec::new(0.3)).unwrap();
        assert!(m.values().iter().all(|v| (v + 1.75).abs() < 1e-13));
    }

    #[test]
    fn mass_is_preserved() {
        let g = Grid1D::new(2.0, 128).unwrap();
        let f = RealField::from_fn(g, |x| (-(x - 0.3) * (x - 0.3) * 4.0).exp() + 0.1 * x).unwrap();
        let m = mollify(&f, MollifierSpec::new(0.2)).unwrap();
        assert!((m.mass() - f.mass()).abs() <= 1e-10 * f.mass().abs());
        assert!(sobolev_norm(&m, 1.0).is_finite());
    }

    #[test]
    fn commutes_with_derivative() {
        let g = Grid1D::new(PI, 128).unwrap();
        let f = RealField::from_fn(g, |x| (2.0 * x).sin() + 0.5 * (5.0 * x).cos()).unwrap();
        let spec = MollifierSpec::new(0.4);
        let a = derivative(&mollify(&f, spec).unwrap(), 1).unwrap();
        let b = mollify(&derivative(&f, 1).unwrap(), spec).unwrap();
        assert!(a.sub(&b).unwrap().l2_norm() < 1e-8);
    }
}
