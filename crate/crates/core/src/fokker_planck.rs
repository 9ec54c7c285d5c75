//! Stochastic Fokker-Planck equation `dz = d^2_xi (a z) dt + z dmu`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Assumption, Error, Result};
use crate::noise::{BrownianIncrements, IncrementsView, NoiseModel};
use crate::spectral::{Grid1D, RealField};
use crate::stepper::{self, Flux, Schedule, SolverOptions, SolverState};
use crate::trajectory::Trajectory;

/// What a path-dependent coefficient may look at when evaluated at `step`.
pub struct CoefficientContext<'a> {
    pub step: usize,
    pub grid: &'a Grid1D,
    /// Increments of steps `0..step` only.
    pub history: IncrementsView<'a>,
}

pub type CoefficientCallback = dyn Fn(&CoefficientContext<'_>, &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Rule {
    Static(Vec<f64>),
    PerStep(Arc<Vec<Vec<f64>>>),
    PathDependent(Arc<CoefficientCallback>),
}

/// Bounded, nonnegative, possibly degenerate diffusion coefficient `a(t, xi)`.
#[derive(Clone)]
pub struct DiffusionCoefficient {
    grid: Grid1D,
    sup_bound: f64,
    rule: Rule,
}

impl fmt::Debug for DiffusionCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.rule {
            Rule::Static(_) => "static",
            Rule::PerStep(_) => "per-step",
            Rule::PathDependent(_) => "path-dependent",
        };
        f.debug_struct("DiffusionCoefficient")
            .field("sup_bound", &self.sup_bound)
            .field("kind", &kind)
            .finish()
    }
}

fn check_bound(sup_bound: f64) -> Result<()> {
    if sup_bound.is_finite() && sup_bound >= 0.0 {
        Ok(())
    } else {
        Err(Error::violation(
            Assumption::BoundedCoefficient,
            format!("declared sup bound must be finite and nonnegative, got {sup_bound}"),
        ))
    }
}

fn check_values(values: &[f64], sup_bound: f64, step: usize) -> Result<()> {
    match values.iter().position(|&a| !(a >= 0.0 && a <= sup_bound)) {
        None => Ok(()),
        Some(j) => Err(Error::violation(
            Assumption::BoundedCoefficient,
            format!(
                "a = {} at node {j}, step {step} is outside [0, {sup_bound}]",
                values[j]
            ),
        )),
    }
}

impl DiffusionCoefficient {
    pub fn constant(grid: Grid1D, value: f64) -> Result<Self> {
        Self::from_values(grid, vec![value; grid.len()], value)
    }

    /// Time-independent table with declared sup bound.
    pub fn from_values(grid: Grid1D, values: Vec<f64>, sup_bound: f64) -> Result<Self> {
        check_bound(sup_bound)?;
        if values.len() != grid.len() {
            return Err(Error::invalid(
                "coefficient table length differs from the grid",
            ));
        }
        check_values(&values, sup_bound, 0)?;
        Ok(Self {
            grid,
            sup_bound,
            rule: Rule::Static(values),
        })
    }

    /// `value` on `(0, L)` with smooth ramps of width `L/8` at both ends, zero on `[-L, 0]`.
    pub fn half_degenerate(grid: Grid1D, value: f64) -> Result<Self> {
        let l = grid.half_length();
        let ramp = l / 8.0;
        let step = |u: f64| {
            let f = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
            f(u) / (f(u) + f(1.0 - u))
        };
        let values = grid
            .nodes()
            .into_iter()
            .map(|x| value * step(x / ramp) * step((l - x) / ramp))
            .collect();
        Self::from_values(grid, values, value)
    }

    /// One table per step; steps past the end reuse the last table.
    pub fn per_step(grid: Grid1D, tables: Vec<Vec<f64>>, sup_bound: f64) -> Result<Self> {
        check_bound(sup_bound)?;
        if tables.is_empty() {
            return Err(Error::invalid("need at least one coefficient table"));
        }
        for (s, t) in tables.iter().enumerate() {
            if t.len() != grid.len() {
                return Err(Error::invalid(
                    "coefficient table length differs from the grid",
                ));
            }
            check_values(t, sup_bound, s)?;
        }
        Ok(Self {
            grid,
            sup_bound,
            rule: Rule::PerStep(Arc::new(tables)),
        })
    }

    /// Coefficient computed from the noise history; checked against `sup_bound` on every call.
    pub fn path_dependent(
        grid: Grid1D,
        sup_bound: f64,
        rule: impl Fn(&CoefficientContext<'_>, &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        check_bound(sup_bound)?;
        Ok(Self {
            grid,
            sup_bound,
            rule: Rule::PathDependent(Arc::new(rule)),
        })
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// The common value when `a` is a single constant in space and time.
    pub fn as_constant(&self) -> Option<f64> {
        match &self.rule {
            Rule::Static(v) if v.iter().all(|&x| x == v[0]) => Some(v[0]),
            _ => None,
        }
    }

    /// `a(step, .)` on the grid.
    pub fn evaluate(&self, step: usize, incs: &BrownianIncrements, out: &mut [f64]) -> Result<()> {
        match &self.rule {
            Rule::Static(v) => out.copy_from_slice(v),
            Rule::PerStep(t) => out.copy_from_slice(&t[step.min(t.len() - 1)]),
            Rule::PathDependent(f) => {
                let ctx = CoefficientContext {
                    step,
                    grid: &self.grid,
                    history: incs.view(step),
                };
                f(&ctx, out);
                check_values(out, self.sup_bound, step)?;
            }
        }
        Ok(())
    }

    pub fn field_at(&self, step: usize, incs: &BrownianIncrements) -> Result<RealField> {
        let mut out = vec![0.0; self.grid.len()];
        self.evaluate(step, incs, &mut out)?;
        RealField::new(self.grid, out)
    }
}

struct FpFlux<'a> {
    a: &'a DiffusionCoefficient,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl<'a> FpFlux<'a> {
    fn new(a: &'a DiffusionCoefficient) -> Self {
        Self {
            a,
            scratch: std::cell::RefCell::new(vec![0.0; a.grid.len()]),
        }
    }
}

impl Flux for FpFlux<'_> {
    fn flux(
        &self,
        step: usize,
        z: &[f64],
        incs: &BrownianIncrements,
        out: &mut [f64],
    ) -> Result<()> {
        let mut a = self.scratch.borrow_mut();
        self.a.evaluate(step, incs, &mut a)?;
        for ((o, ai), zi) in out.iter_mut().zip(a.iter()).zip(z) {
            *o = ai * zi;
        }
        Ok(())
    }

    fn peak_diffusivity(&self) -> f64 {
        self.a.sup_bound
    }
}

fn check_grid(state: &RealField, a: &DiffusionCoefficient) -> Result<()> {
    if state.grid().is_compatible(&a.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch(
            "coefficient built for another grid".into(),
        ))
    }
}

/// One Euler-Maruyama step of the Fokker-Planck equation.
pub fn step_fp(
    state: &SolverState,
    a: &DiffusionCoefficient,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    dt: f64,
    options: SolverOptions,
) -> Result<SolverState> {
    check_grid(&state.z, a)?;
    stepper::single_step(&FpFlux::new(a), state, noise, incs, dt, options)
}

pub fn solve_fp(
    x0: &RealField,
    a: &DiffusionCoefficient,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    schedule: &Schedule,
    options: SolverOptions,
) -> Result<Trajectory> {
    check_grid(x0, a)?;
    stepper::solve(&FpFlux::new(a), x0, noise, incs, schedule, options)
}

/// `<phi, z(t)> - <x0, phi> - int_0^t <a phi'', z> ds - int phi z dmu` along the
/// snapshot schedule, with left-point sums matching the solver.
pub fn weak_form_residual_fp(
    traj: &Trajectory,
    a: &DiffusionCoefficient,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    phi: &RealField,
) -> Result<Vec<f64>> {
    check_grid(phi, a)?;
    stepper::weak_form_residual(&FpFlux::new(a), traj, noise, incs, phi)
}
