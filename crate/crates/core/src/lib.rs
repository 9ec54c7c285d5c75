//! Spectral solvers for the stochastic Fokker-Planck and porous-media equations on a
//! periodic grid, driven by multiplicative Brownian-field noise, together with the
//! `H^-1` energy diagnostics used to probe uniqueness numerically.

pub mod energy;
pub mod error;
pub mod fokker_planck;
pub mod noise;
pub mod porous_media;
pub mod spectral;
pub mod stepper;
pub mod trajectory;

pub use energy::{
    gronwall_check, gronwall_constant_fp, gronwall_constant_pme, member_increments,
    uniqueness_experiment, uniqueness_experiment_with, EnergyLedger, ExperimentMode,
    ExperimentReport, ExperimentSetup, MemberOutcome, Model,
};
pub use error::{Assumption, Error, Result};
pub use fokker_planck::{
    solve_fp, step_fp, weak_form_residual_fp, CoefficientContext, DiffusionCoefficient,
};
pub use noise::{
    build_noise_basis, derive_seed, BrownianIncrements, NoiseFamily, NoiseModel, NoiseSpec, Window,
};
pub use porous_media::{
    psi_alpha_check, solve_pme, step_pme, weak_form_residual_pme, Nonlinearity, PsiSpec,
};
pub use spectral::{make_grid, Grid1D, MollifierSpec, RealField};
pub use stepper::{explicit_dt_limit, Schedule, Scheme, SolverOptions, SolverState};
pub use trajectory::Trajectory;
