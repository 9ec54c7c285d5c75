//! `H^-1` energy method: the distance `g = |z^1 - z^2|^2_{H^-1}` between two solutions
//! driven by the same noise, its martingale part, Gronwall constants, localization,
//! mollifier diagnostics and end-to-end uniqueness experiments.

mod experiment;
mod ladder;
mod ledger;

pub use experiment::{
    member_increments, run_member, uniqueness_experiment, uniqueness_experiment_with, Constants,
    ExperimentMode, ExperimentReport, ExperimentSetup, MemberOutcome, OracleReport, Paths,
    RefinementReport, Verdicts,
};
pub use ladder::{mollified_energy_path, LadderQuantity, LadderReport, DEFAULT_LADDER};
pub use ledger::{
    difference, energy_path, ensemble_check, gronwall_check, localization_times, martingale_path,
    pathwise_residual, BoundChain, CheckOptions, EnergyLedger, EnsembleVerdict, GronwallReport,
    LocalizationTime, Margins, MartingalePath, PathwiseSummary,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fokker_planck::{solve_fp, DiffusionCoefficient};
use crate::noise::{BrownianIncrements, NoiseModel};
use crate::porous_media::{solve_pme, Nonlinearity};
use crate::spectral::RealField;
use crate::stepper::{Schedule, SolverOptions};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    FokkerPlanck,
    PorousMedia,
}

/// One of the two equations together with its coefficient.
#[derive(Debug, Clone)]
pub enum Model {
    FokkerPlanck(DiffusionCoefficient),
    PorousMedia(Nonlinearity),
}

impl Model {
    pub fn kind(&self) -> EquationKind {
        match self {
            Model::FokkerPlanck(_) => EquationKind::FokkerPlanck,
            Model::PorousMedia(_) => EquationKind::PorousMedia,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Model::FokkerPlanck(a) => format!("fokker_planck(|a|_inf = {})", a.sup_bound()),
            Model::PorousMedia(psi) => format!("porous_media(psi = {})", psi.name()),
        }
    }

    pub fn solve(
        &self,
        x0: &RealField,
        noise: &NoiseModel,
        incs: &BrownianIncrements,
        schedule: &Schedule,
        options: SolverOptions,
    ) -> Result<Trajectory> {
        match self {
            Model::FokkerPlanck(a) => solve_fp(x0, a, noise, incs, schedule, options),
            Model::PorousMedia(psi) => solve_pme(x0, psi, noise, incs, schedule, options),
        }
    }

    /// Gronwall constant of the matching energy inequality.
    pub fn gronwall_constant(&self, noise: &NoiseModel) -> f64 {
        match self {
            Model::FokkerPlanck(a) => gronwall_constant_fp(noise, a),
            Model::PorousMedia(psi) => gronwall_constant_pme(noise, psi),
        }
    }

    /// Weight of the dissipation integral on the left of the energy inequality.
    pub fn dissipation_weight(&self) -> f64 {
        match self {
            Model::FokkerPlanck(_) => 1.0,
            Model::PorousMedia(_) => 0.5,
        }
    }

    /// `a (z1 - z2)` or `psi(X1) - psi(X2)` at `step`.
    pub(crate) fn drift_difference(
        &self,
        step: usize,
        z1: &[f64],
        z2: &[f64],
        incs: &BrownianIncrements,
        out: &mut [f64],
    ) -> Result<()> {
        match self {
            Model::FokkerPlanck(a) => {
                a.evaluate(step, incs, out)?;
                for ((o, u), v) in out.iter_mut().zip(z1).zip(z2) {
                    *o *= u - v;
                }
            }
            Model::PorousMedia(psi) => {
                for ((o, &u), &v) in out.iter_mut().zip(z1).zip(z2) {
                    *o = psi.eval(u) - psi.eval(v);
                }
            }
        }
        Ok(())
    }
}

/// `sum_i C(e^i)^2 + 2 C(e^0) + |a|_inf`.
pub fn gronwall_constant_fp(noise: &NoiseModel, a: &DiffusionCoefficient) -> f64 {
    noise_part(noise) + a.sup_bound()
}

/// `2 C(e^0) + sum_i C(e^i)^2 + 1 / alpha`.
pub fn gronwall_constant_pme(noise: &NoiseModel, psi: &Nonlinearity) -> f64 {
    noise_part(noise) + 1.0 / psi.alpha()
}

fn noise_part(noise: &NoiseModel) -> f64 {
    noise
        .modes()
        .iter()
        .map(|m| m.multiplier_bound.powi(2))
        .sum::<f64>()
        + 2.0 * noise.drift().multiplier_bound
}
