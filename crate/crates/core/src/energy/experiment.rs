use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ladder::{mollified_energy_path, LadderReport};
use super::ledger::{energy_path, gronwall_check, CheckOptions, EnergyLedger, GronwallReport};
use super::{EquationKind, Model};
use crate::error::{Error, Result};
use crate::noise::{derive_seed, BrownianIncrements, NoiseModel, TailReport};
use crate::porous_media::time_integrated_l2;
use crate::spectral::{Fourier, RealField};
use crate::stepper::{Schedule, SolverOptions};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// Ensemble of pairs `x0` and `x0 + delta * perturbation` on shared noise paths.
    Perturbation,
    /// The same data at `dt, dt/2, ...` on one path per member, compared on the coarse schedule.
    Refinement,
    /// Noise-free constant-coefficient run against the exact Fourier solution.
    HeatOracle,
}

/// Everything an experiment needs besides the mode.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub model: Model,
    pub noise: NoiseModel,
    pub x0: RealField,
    pub perturbation: RealField,
    pub delta: f64,
    pub schedule: Schedule,
    pub options: SolverOptions,
    pub ensemble: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    /// Mollifier ladder evaluated on member 0; empty to skip.
    pub epsilons: Vec<f64>,
    pub check: CheckOptions,
    /// Number of halvings of `dt` in refinement mode.
    pub refinements: usize,
    /// Smallest acceptable ratio `E g(dt) / E g(dt/2)` in refinement mode.
    pub refinement_ratio: f64,
    /// Largest acceptable `L^2` error in heat-oracle mode.
    pub oracle_tolerance: f64,
}

impl ExperimentSetup {
    pub fn new(model: Model, noise: NoiseModel, x0: RealField, schedule: Schedule) -> Self {
        let perturbation = RealField::zeros(*x0.grid());
        Self {
            model,
            noise,
            x0,
            perturbation,
            delta: 0.0,
            schedule,
            options: SolverOptions::default(),
            ensemble: 1,
            seed: 0,
            levels: Vec::new(),
            epsilons: Vec::new(),
            check: CheckOptions::default(),
            refinements: 2,
            refinement_ratio: 1.8,
            oracle_tolerance: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        self.x0.check_same_grid(&self.perturbation)?;
        if !self.x0.grid().is_compatible(self.noise.grid()) {
            return Err(Error::GridMismatch(
                "initial condition and noise live on different grids".into(),
            ));
        }
        if self.ensemble == 0 {
            return Err(Error::invalid("ensemble size must be positive"));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        if self.levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("localization levels must be increasing"));
        }
        Ok(())
    }

    fn perturbed(&self) -> RealField {
        let values = self
            .x0
            .values()
            .iter()
            .zip(self.perturbation.values())
            .map(|(x, p)| x + self.delta * p)
            .collect();
        RealField::new(*self.x0.grid(), values).expect("finite perturbation of a finite field")
    }
}

/// Increments of ensemble member `m`, drawn with seed `derive_seed(seed, m)`.
pub fn member_increments(setup: &ExperimentSetup, m: usize) -> Result<BrownianIncrements> {
    BrownianIncrements::sample(
        setup.noise.n_modes(),
        setup.schedule.n_steps,
        setup.schedule.dt,
        derive_seed(setup.seed, m as u64),
    )
}

/// One perturbation pair on a given path.
#[derive(Debug, Clone)]
pub struct MemberOutcome {
    pub traj1: Trajectory,
    pub traj2: Trajectory,
    pub ledger: EnergyLedger,
}

pub fn run_member(setup: &ExperimentSetup, incs: &BrownianIncrements) -> Result<MemberOutcome> {
    let s = &setup.schedule;
    let traj1 = setup
        .model
        .solve(&setup.x0, &setup.noise, incs, s, setup.options)?;
    let traj2 = if setup.delta == 0.0 {
        setup
            .model
            .solve(&setup.x0, &setup.noise, incs, s, setup.options)?
    } else {
        setup
            .model
            .solve(&setup.perturbed(), &setup.noise, incs, s, setup.options)?
    };
    let ledger = EnergyLedger::build(
        &traj1,
        &traj2,
        &setup.model,
        &setup.noise,
        incs,
        &setup.levels,
    )?;
    Ok(MemberOutcome {
        traj1,
        traj2,
        ledger,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    #[serde(rename = "C")]
    pub c: f64,
    pub per_mode: Vec<f64>,
    pub drift: f64,
    /// `|a|_inf` for Fokker-Planck, `1/alpha` for porous media.
    pub coefficient: f64,
    pub alpha: Option<f64>,
    pub noise_partial_sum: f64,
    pub noise_tail: Option<TailReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub t: Vec<f64>,
    pub g: Vec<f64>,
    #[serde(rename = "M")]
    pub martingale: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub integral_g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub dts: Vec<f64>,
    pub times: Vec<f64>,
    /// Ensemble mean of `g(T)` between levels `r` and `r + 1`, on the schedule of level `r`.
    pub mean_g_final: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `log2` of the ratios: the measured order of `g` in `dt`.
    pub orders: Vec<f64>,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub diffusivity: f64,
    pub times: Vec<f64>,
    pub l2_error: Vec<f64>,
    pub max_l2_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub pathwise: Option<bool>,
    pub ensemble: Option<bool>,
    pub dissipation: Option<bool>,
    pub bound_chain: Option<bool>,
    pub ladder: Option<bool>,
    pub refinement: Option<bool>,
    pub oracle: Option<bool>,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        [
            self.pathwise,
            self.ensemble,
            self.dissipation,
            self.bound_chain,
            self.ladder,
            self.refinement,
            self.oracle,
        ]
        .iter()
        .all(|v| v.unwrap_or(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub equation: EquationKind,
    pub model: String,
    pub mode: ExperimentMode,
    pub members: usize,
    pub constants: Constants,
    /// Member 0.
    pub paths: Option<Paths>,
    pub gronwall: Option<GronwallReport>,
    pub ladder: Option<LadderReport>,
    pub refinement: Option<RefinementReport>,
    pub oracle: Option<OracleReport>,
    /// `int_0^T |z^j|^2_{L^2}` of member 0's two runs.
    pub integral_l2: Option<[f64; 2]>,
    /// `int_0^T |z^j|^2_{L^1}` of member 0's two runs.
    pub l1_energy: Option<[f64; 2]>,
    /// Largest `|z|` in the outer tenth of the domain over member 0's snapshots.
    pub boundary_leakage: f64,
    pub verdicts: Verdicts,
    pub pass: bool,
}

fn constants(setup: &ExperimentSetup) -> Constants {
    let (coefficient, alpha) = match &setup.model {
        Model::FokkerPlanck(a) => (a.sup_bound(), None),
        Model::PorousMedia(psi) => (1.0 / psi.alpha(), Some(psi.alpha())),
    };
    Constants {
        c: setup.model.gronwall_constant(&setup.noise),
        per_mode: setup.noise.multiplier_bounds(),
        drift: setup.noise.drift().multiplier_bound,
        coefficient,
        alpha,
        noise_partial_sum: setup.noise.partial_sum(),
        noise_tail: setup.noise.tail(),
    }
}

fn leakage(traj: &Trajectory) -> f64 {
    (0..traj.len())
        .map(|k| traj.snapshot(k).boundary_leakage())
        .fold(0.0, f64::max)
}

fn empty_report(setup: &ExperimentSetup, mode: ExperimentMode, members: usize) -> ExperimentReport {
    ExperimentReport {
        equation: setup.model.kind(),
        model: setup.model.describe(),
        mode,
        members,
        constants: constants(setup),
        paths: None,
        gronwall: None,
        ladder: None,
        refinement: None,
        oracle: None,
        integral_l2: None,
        l1_energy: None,
        boundary_leakage: 0.0,
        verdicts: Verdicts::default(),
        pass: false,
    }
}

/// Runs `mode` with increments drawn per member from the setup's seed.
pub fn uniqueness_experiment(
    mode: ExperimentMode,
    setup: &ExperimentSetup,
) -> Result<ExperimentReport> {
    uniqueness_experiment_with(mode, setup, |m| member_increments(setup, m)).map(|(r, _)| r)
}

/// As [`uniqueness_experiment`] with caller-supplied increments for perturbation mode
/// (other modes draw their own). Also returns member 0's outcome when there is one.
pub fn uniqueness_experiment_with(
    mode: ExperimentMode,
    setup: &ExperimentSetup,
    increments: impl Fn(usize) -> Result<BrownianIncrements> + Sync,
) -> Result<(ExperimentReport, Option<MemberOutcome>)> {
    setup.validate()?;
    match mode {
        ExperimentMode::Perturbation => perturbation(setup, increments),
        ExperimentMode::Refinement => refinement(setup).map(|r| (r, None)),
        ExperimentMode::HeatOracle => heat_oracle(setup).map(|r| (r, None)),
    }
}

fn perturbation(
    setup: &ExperimentSetup,
    increments: impl Fn(usize) -> Result<BrownianIncrements> + Sync,
) -> Result<(ExperimentReport, Option<MemberOutcome>)> {
    let first_incs = increments(0)?;
    let first = run_member(setup, &first_incs)?;
    let rest = (1..setup.ensemble)
        .into_par_iter()
        .map(|m| run_member(setup, &increments(m)?).map(|o| o.ledger))
        .collect::<Result<Vec<_>>>()?;
    let ledgers: Vec<EnergyLedger> = std::iter::once(first.ledger.clone()).chain(rest).collect();
    let gronwall = gronwall_check(&ledgers, setup.check)?;

    let mut report = empty_report(setup, ExperimentMode::Perturbation, ledgers.len());
    if !setup.epsilons.is_empty() {
        report.ladder = Some(mollified_energy_path(
            &first.traj1,
            &first.traj2,
            &setup.model,
            &setup.noise,
            &first_incs,
            &setup.epsilons,
        )?);
    }
    let l = &first.ledger;
    report.paths = Some(Paths {
        t: l.times.clone(),
        g: l.g.clone(),
        martingale: l.martingale.clone(),
        dissipation: l.dissipation.clone(),
        integral_g: l.integral_g.clone(),
    });
    report.integral_l2 = Some([
        time_integrated_l2(&first.traj1),
        time_integrated_l2(&first.traj2),
    ]);
    report.l1_energy = Some(l.l1_energy);
    report.boundary_leakage = leakage(&first.traj1).max(leakage(&first.traj2));
    report.verdicts = Verdicts {
        pathwise: Some(gronwall.pathwise.iter().all(|p| p.pass)),
        ensemble: gronwall
            .ensemble
            .iter()
            .map(|e| e.pass)
            .reduce(|a, b| Some(a? && b?))
            .flatten(),
        dissipation: Some(gronwall.dissipation_pass),
        bound_chain: gronwall.bound_chain.as_ref().map(|b| b.pass),
        ladder: report.ladder.as_ref().map(|r| r.pass),
        ..Verdicts::default()
    };
    report.gronwall = Some(gronwall);
    report.pass = report.verdicts.all_pass();
    Ok((report, Some(first)))
}

fn refinement(setup: &ExperimentSetup) -> Result<ExperimentReport> {
    if setup.refinements == 0 {
        return Err(Error::invalid("refinement mode needs at least one halving"));
    }
    let levels = setup.refinements + 1;
    let finest_factor = 1usize << setup.refinements;
    let base = setup.schedule;
    let finest_dt = base.dt / finest_factor as f64;
    let schedules: Vec<Schedule> = (0..levels)
        .map(|r| {
            Schedule::new(
                base.dt / (1usize << r) as f64,
                base.n_steps << r,
                base.stride << r,
            )
        })
        .collect::<Result<_>>()?;

    let finals: Vec<Vec<f64>> = (0..setup.ensemble)
        .into_par_iter()
        .map(|m| -> Result<Vec<f64>> {
            let fine = BrownianIncrements::sample(
                setup.noise.n_modes(),
                base.n_steps * finest_factor,
                finest_dt,
                derive_seed(setup.seed, m as u64),
            )?;
            let trajs = schedules
                .iter()
                .enumerate()
                .map(|(r, s)| {
                    let incs = fine.coarsen(finest_factor >> r)?;
                    setup
                        .model
                        .solve(&setup.x0, &setup.noise, &incs, s, setup.options)
                })
                .collect::<Result<Vec<_>>>()?;
            trajs
                .windows(2)
                .map(|w| energy_path(&w[0], &w[1]).map(|g| *g.last().expect("nonempty path")))
                .collect()
        })
        .collect::<Result<_>>()?;

    let n = setup.ensemble as f64;
    let mean_g_final: Vec<f64> = (0..levels - 1)
        .map(|r| finals.iter().map(|f| f[r]).sum::<f64>() / n)
        .collect();
    let ratios: Vec<f64> = mean_g_final.windows(2).map(|w| w[0] / w[1]).collect();
    let orders = ratios.iter().map(|r| r.log2()).collect();
    let pass = !ratios.is_empty() && ratios.iter().all(|&r| r >= setup.refinement_ratio);
    let mut report = empty_report(setup, ExperimentMode::Refinement, setup.ensemble);
    report.refinement = Some(RefinementReport {
        dts: schedules.iter().map(|s| s.dt).collect(),
        times: vec![base.final_time()],
        mean_g_final,
        ratios,
        orders,
        threshold: setup.refinement_ratio,
        pass,
    });
    report.verdicts.refinement = Some(pass);
    report.pass = report.verdicts.all_pass();
    Ok(report)
}

fn heat_oracle(setup: &ExperimentSetup) -> Result<ExperimentReport> {
    if !setup.noise.is_off() {
        return Err(Error::invalid(
            "the heat oracle needs the noise switched off",
        ));
    }
    let diffusivity = match &setup.model {
        Model::FokkerPlanck(a) => a
            .as_constant()
            .ok_or_else(|| Error::invalid("the heat oracle needs a constant coefficient"))?,
        Model::PorousMedia(psi) => match psi.spec() {
            Some(crate::porous_media::PsiSpec::Identity) => 0.5,
            Some(crate::porous_media::PsiSpec::Linear { slope }) => 0.5 * slope,
            _ => return Err(Error::invalid("the heat oracle needs a linear psi")),
        },
    };
    let s = setup.schedule;
    let incs = BrownianIncrements::sample(0, s.n_steps, s.dt, setup.seed)?;
    let traj = setup
        .model
        .solve(&setup.x0, &setup.noise, &incs, &s, setup.options)?;
    let fourier = Fourier::new(setup.x0.grid());
    let spectrum = fourier.forward(setup.x0.values());
    let dx = setup.x0.grid().dx();
    let l2_error: Vec<f64> = traj
        .times()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let decayed = spectrum
                .iter()
                .zip(fourier.wavenumbers())
                .map(|(c, &kk)| c * (-diffusivity * kk * kk * t).exp())
                .collect();
            let exact = fourier.inverse_real(decayed);
            (exact
                .iter()
                .zip(traj.values(k))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                * dx)
                .sqrt()
        })
        .collect();
    let max_l2_error = l2_error.iter().fold(0.0, |m: f64, &v| m.max(v));
    let pass = max_l2_error < setup.oracle_tolerance;
    let mut report = empty_report(setup, ExperimentMode::HeatOracle, 1);
    report.boundary_leakage = leakage(&traj);
    report.integral_l2 = Some([time_integrated_l2(&traj); 2]);
    report.oracle = Some(OracleReport {
        diffusivity,
        times: traj.times().to_vec(),
        l2_error,
        max_l2_error,
        tolerance: setup.oracle_tolerance,
        pass,
    });
    report.verdicts.oracle = Some(pass);
    report.pass = pass;
    Ok(report)
}
