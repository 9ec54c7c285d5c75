//! Euler-Maruyama stepping shared by both equations.
//!
//! Both equations have the form `dz = d^2_xi q(z) dt + z dmu`, with flux
//! `q = a z` (Fokker-Planck) or `q = psi(z) / 2` (porous media). The explicit
//! scheme evaluates `d^2 q` spectrally at the left point. The semi-implicit
//! scheme freezes the diffusivity at its sup `abar`, treats `abar d^2 z` by
//! Crank-Nicolson and the remainder `d^2 (q - abar z)` and the noise explicitly.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{increment_coefficient, ito_integral, BrownianIncrements, NoiseModel};
use crate::spectral::{Fourier, Grid1D, RealField};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Explicit,
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    #[serde(default)]
    pub scheme: Scheme,
    /// Two-thirds rule on the flux before differentiation.
    #[serde(default)]
    pub dealias: bool,
}

/// Time step, number of steps and snapshot stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub dt: f64,
    pub n_steps: usize,
    pub stride: usize,
}

impl Schedule {
    pub fn new(dt: f64, n_steps: usize, stride: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        Ok(Self {
            dt,
            n_steps,
            stride,
        })
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Largest stable explicit step for peak diffusivity `abar`: `2 / (abar k_max^2)`.
pub fn explicit_dt_limit(grid: &Grid1D, abar: f64) -> f64 {
    if abar <= 0.0 {
        f64::INFINITY
    } else {
        let k = grid.max_wavenumber();
        2.0 / (abar * k * k)
    }
}

/// Current field and the index of the next step to take.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub z: RealField,
    pub step: usize,
}

impl SolverState {
    pub fn new(z: RealField) -> Self {
        Self { z, step: 0 }
    }
}

/// The equation-specific part of a step.
pub(crate) trait Flux {
    /// Writes `q(z)` at step `step`, seeing increments strictly before `step` only.
    fn flux(
        &self,
        step: usize,
        z: &[f64],
        incs: &BrownianIncrements,
        out: &mut [f64],
    ) -> Result<()>;

    /// Sup of the effective diffusivity `dq/dz`.
    fn peak_diffusivity(&self) -> f64;
}

pub(crate) struct Stepper<'a, F: Flux> {
    flux: &'a F,
    noise: &'a NoiseModel,
    incs: &'a BrownianIncrements,
    fourier: Fourier,
    dt: f64,
    options: SolverOptions,
    abar: f64,
    mask: Vec<f64>,
    q: Vec<f64>,
    coeff: Vec<f64>,
}

impl<'a, F: Flux> Stepper<'a, F> {
    pub(crate) fn new(
        flux: &'a F,
        grid: &Grid1D,
        noise: &'a NoiseModel,
        incs: &'a BrownianIncrements,
        dt: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        if !grid.is_compatible(noise.grid()) {
            return Err(Error::GridMismatch(
                "state and noise live on different grids".into(),
            ));
        }
        if incs.n_modes() != noise.n_modes() {
            return Err(Error::invalid(format!(
                "noise model has {} modes but the increments carry {}",
                noise.n_modes(),
                incs.n_modes()
            )));
        }
        if (incs.dt() - dt).abs() > 1e-12 * dt {
            return Err(Error::invalid(format!(
                "increments were sampled at dt = {} but the solver uses dt = {dt}",
                incs.dt()
            )));
        }
        let abar = flux.peak_diffusivity();
        if options.scheme == Scheme::Explicit {
            let limit = explicit_dt_limit(grid, abar);
            if dt > limit {
                return Err(Error::Stability { dt, limit });
            }
        }
        let n = grid.len() as i64;
        let mask = (0..grid.len())
            .map(|j| {
                if options.dealias && 3 * grid.mode_index(j).abs() > n {
                    0.0
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            flux,
            noise,
            incs,
            fourier: Fourier::new(grid),
            dt,
            options,
            abar,
            mask,
            q: vec![0.0; grid.len()],
            coeff: vec![0.0; grid.len()],
        })
    }

    /// Advances `z` in place by one step.
    pub(crate) fn step(&mut self, step: usize, z: &mut [f64]) -> Result<()> {
        if step >= self.incs.n_steps() {
            return Err(Error::OutOfRange(format!(
                "step {step} outside the {} available increments",
                self.incs.n_steps()
            )));
        }
        self.flux.flux(step, z, self.incs, &mut self.q)?;
        increment_coefficient(self.noise, self.incs, step, step + 1, &mut self.coeff);
        let dt = self.dt;
        match self.options.scheme {
            Scheme::Explicit => {
                let mut spec = self.fourier.forward(&self.q);
                for ((c, &k), m) in spec
                    .iter_mut()
                    .zip(self.fourier.wavenumbers())
                    .zip(&self.mask)
                {
                    *c *= -k * k * m;
                }
                let lap = self.fourier.inverse_real(spec);
                for ((zj, l), c) in z.iter_mut().zip(&lap).zip(&self.coeff) {
                    *zj = *zj + dt * l + c * *zj;
                }
            }
            Scheme::SemiImplicit => {
                let abar = self.abar;
                let remainder: Vec<f64> = self
                    .q
                    .iter()
                    .zip(z.iter())
                    .map(|(q, v)| q - abar * v)
                    .collect();
                let noise: Vec<f64> = self
                    .coeff
                    .iter()
                    .zip(z.iter())
                    .map(|(c, v)| c * v)
                    .collect();
                let rs = self.fourier.forward(&remainder);
                let zs = self.fourier.forward(z);
                let ns = self.fourier.forward(&noise);
                let out: Vec<Complex64> = zs
                    .iter()
                    .zip(&rs)
                    .zip(&ns)
                    .zip(self.fourier.wavenumbers())
                    .zip(&self.mask)
                    .map(|((((zh, rh), nh), &k), m)| {
                        let k2 = k * k;
                        let half = 0.5 * dt * abar * k2;
                        (zh * (1.0 - half) - rh * (dt * k2 * m) + nh) / (1.0 + half)
                    })
                    .collect();
                let next = self.fourier.inverse_real(out);
                z.copy_from_slice(&next);
            }
        }
        if let Some(node) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step,
                node,
                state: z.to_vec(),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_schedule(
    x0: &RealField,
    incs: &BrownianIncrements,
    schedule: &Schedule,
) -> Result<()> {
    if !x0.is_finite() {
        return Err(Error::invalid("initial condition has non-finite values"));
    }
    if schedule.n_steps > incs.n_steps() {
        return Err(Error::ScheduleMismatch(format!(
            "{} steps requested but only {} increments available",
            schedule.n_steps,
            incs.n_steps()
        )));
    }
    Ok(())
}

pub(crate) fn solve<F: Flux>(
    flux: &F,
    x0: &RealField,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    schedule: &Schedule,
    options: SolverOptions,
) -> Result<Trajectory> {
    check_schedule(x0, incs, schedule)?;
    let mut traj = Trajectory::start(x0, schedule.dt, schedule.stride, schedule.n_steps);
    if schedule.n_steps == 0 {
        return Ok(traj);
    }
    let mut stepper = Stepper::new(flux, x0.grid(), noise, incs, schedule.dt, options)?;
    let mut z = x0.values().to_vec();
    for step in 0..schedule.n_steps {
        stepper.step(step, &mut z)?;
        traj.record(step + 1, &z);
    }
    Ok(traj)
}

pub(crate) fn single_step<F: Flux>(
    flux: &F,
    state: &SolverState,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    dt: f64,
    options: SolverOptions,
) -> Result<SolverState> {
    let mut stepper = Stepper::new(flux, state.z.grid(), noise, incs, dt, options)?;
    let mut z = state.z.values().to_vec();
    stepper.step(state.step, &mut z)?;
    Ok(SolverState {
        z: RealField::from_raw(*state.z.grid(), z),
        step: state.step + 1,
    })
}

fn warn_if_touching_boundary(phi: &RealField) {
    let peak = phi.sup_norm();
    if peak > 0.0 && phi.boundary_leakage() > 1e-12 * peak {
        tracing::warn!(
            leakage = phi.boundary_leakage(),
            "test function reaches the outer tenth of the domain"
        );
    }
}

/// `<phi, z(t)> - <phi, z(0)> - int_0^t <phi'', q(z)> ds - int phi z dmu` on the snapshot
/// schedule, discretized with the same left-point rule as the solver.
pub(crate) fn weak_form_residual<F: Flux>(
    flux: &F,
    traj: &Trajectory,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    phi: &RealField,
) -> Result<Vec<f64>> {
    if !traj.grid().is_compatible(phi.grid()) {
        return Err(Error::GridMismatch("test function on another grid".into()));
    }
    warn_if_touching_boundary(phi);
    let fourier = Fourier::new(phi.grid());
    let phi2 = fourier.second_derivative(phi.values());
    let weighted: Vec<Vec<f64>> = (0..traj.len())
        .map(|k| {
            traj.values(k)
                .iter()
                .zip(phi.values())
                .map(|(z, p)| z * p)
                .collect()
        })
        .collect();
    let phi_z = Trajectory::from_snapshots(
        *traj.grid(),
        traj.dt(),
        traj.stride(),
        traj.n_steps(),
        weighted,
    )?;
    let stochastic = ito_integral(&phi_z, noise, incs)?.total();

    let dx = phi.grid().dx();
    let pair = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * dx;
    let base = pair(phi.values(), traj.values(0));
    let mut q = vec![0.0; phi.len()];
    let mut drift = 0.0;
    let mut out = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let lhs = pair(phi.values(), traj.values(k));
        out.push(lhs - base - drift - stochastic[k]);
        if k + 1 < traj.len() {
            flux.flux(traj.step_of(k), traj.values(k), incs, &mut q)?;
            let h = (traj.step_of(k + 1) - traj.step_of(k)) as f64 * traj.dt();
            drift += h * pair(&phi2, &q);
        }
    }
    Ok(out)
}
