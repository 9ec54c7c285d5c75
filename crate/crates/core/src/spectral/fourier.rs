//! Fourier-multiplier operators on the periodic grid.
//!
//! Forward transforms are unnormalized and inverse transforms divide by `n`,
//! so the discrete Parseval identity reads `sum |f_j|^2 = (1/n) sum |F_m|^2`.
//! Every operator here is diagonal in that basis: Bessel potentials
//! `(1 + k^2)^{s/2}`, spectral derivatives `(i k)^p`, and the `H^{-1}`
//! pairing `<f, (I - Delta)^{-1} g>`.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Grid1D, RealField};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Cached forward/inverse plans plus the wavenumber table for one grid.
#[derive(Clone)]
pub struct Fourier {
    grid: Grid1D,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

impl Fourier {
    pub fn new(grid: &Grid1D) -> Self {
        let (forward, inverse) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (
                p.plan_fft_forward(grid.len()),
                p.plan_fft_inverse(grid.len()),
            )
        });
        Self {
            grid: *grid,
            forward,
            inverse,
            k: grid.wavenumbers(),
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.grid.len() as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }

    /// Applies the real, even multiplier `m(k)` mode by mode.
    pub fn apply_real_multiplier(&self, values: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut spec = self.forward(values);
        for (c, &k) in spec.iter_mut().zip(&self.k) {
            *c *= m(k);
        }
        self.inverse_real(spec)
    }

    pub fn bessel_potential(&self, values: &[f64], s: f64) -> Vec<f64> {
        if s == 0.0 {
            return values.to_vec();
        }
        self.apply_real_multiplier(values, |k| (1.0 + k * k).powf(0.5 * s))
    }

    /// `(d/dxi)^order` with the Nyquist slot zeroed for odd orders.
    pub fn derivative(&self, values: &[f64], order: u32) -> Result<Vec<f64>> {
        match order {
            1 => {
                let mut spec = self.forward(values);
                let nyquist = self.grid.len() / 2;
                for (j, (c, &k)) in spec.iter_mut().zip(&self.k).enumerate() {
                    *c = if j == nyquist {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(-k * c.im, k * c.re)
                    };
                }
                Ok(self.inverse_real(spec))
            }
            2 => Ok(self.second_derivative(values)),
            _ => Err(Error::invalid(format!(
                "derivative order must be 1 or 2, got {order}"
            ))),
        }
    }

    pub fn second_derivative(&self, values: &[f64]) -> Vec<f64> {
        self.apply_real_multiplier(values, |k| -k * k)
    }

    /// `||f||_{H^s}^2` evaluated in spectral space.
    pub fn sobolev_norm_sq(&self, values: &[f64], s: f64) -> f64 {
        let spec = self.forward(values);
        let acc: f64 = spec
            .iter()
            .zip(&self.k)
            .map(|(c, &k)| c.norm_sqr() * (1.0 + k * k).powf(s))
            .sum();
        acc * self.grid.dx() / self.grid.len() as f64
    }

    /// `<f, g>_{H^{-1}} = <f, (I - Delta)^{-1} g>_{L^2}`.
    pub fn h_minus1_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let fs = self.forward(f);
        let gs = self.forward(g);
        self.h_minus1_inner_spectral(&fs, &gs)
    }

    /// Same pairing for already transformed inputs.
    pub fn h_minus1_inner_spectral(&self, fs: &[Complex64], gs: &[Complex64]) -> f64 {
        let acc: f64 = fs
            .iter()
            .zip(gs)
            .zip(&self.k)
            .map(|((a, b), &k)| (a.re * b.re + a.im * b.im) / (1.0 + k * k))
            .sum();
        acc * self.grid.dx() / self.grid.len() as f64
    }

    /// Zeroes every mode with `|m| > n/3`.
    pub fn dealias(&self, values: &[f64]) -> Vec<f64> {
        let n = self.grid.len() as i64;
        let mut spec = self.forward(values);
        for (j, c) in spec.iter_mut().enumerate() {
            if 3 * self.grid.mode_index(j).abs() > n {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse_real(spec)
    }
}

/// `(I - Delta)^{s/2} f` as the Fourier multiplier `(1 + k^2)^{s/2}`.
pub fn bessel_potential(f: &RealField, s: f64) -> RealField {
    let fourier = Fourier::new(f.grid());
    RealField::from_raw(*f.grid(), fourier.bessel_potential(f.values(), s))
}

/// `||f||_{H^s} = ||(I - Delta)^{s/2} f||_{L^2}` with the `dx` quadrature.
pub fn sobolev_norm(f: &RealField, s: f64) -> f64 {
    Fourier::new(f.grid()).sobolev_norm_sq(f.values(), s).sqrt()
}

pub fn h_minus1_inner(f: &RealField, g: &RealField) -> Result<f64> {
    f.check_same_grid(g)?;
    Ok(Fourier::new(f.grid()).h_minus1_inner(f.values(), g.values()))
}

pub fn derivative(f: &RealField, order: u32) -> Result<RealField> {
    let d = Fourier::new(f.grid()).derivative(f.values(), order)?;
    Ok(RealField::from_raw(*f.grid(), d))
}
