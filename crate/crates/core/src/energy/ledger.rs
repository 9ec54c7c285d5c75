use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::noise::{BrownianIncrements, NoiseModel};
use crate::spectral::Fourier;
use crate::trajectory::Trajectory;

/// `z^1 - z^2` snapshot by snapshot.
pub fn difference(traj1: &Trajectory, traj2: &Trajectory) -> Result<Trajectory> {
    traj1.same_schedule(traj2)?;
    let snaps = (0..traj1.len())
        .map(|k| {
            traj1
                .values(k)
                .iter()
                .zip(traj2.values(k))
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    Trajectory::from_snapshots(
        *traj1.grid(),
        traj1.dt(),
        traj1.stride(),
        traj1.n_steps(),
        snaps,
    )
}

/// `g(t) = |z^1(t) - z^2(t)|^2_{H^-1}` at every snapshot.
pub fn energy_path(traj1: &Trajectory, traj2: &Trajectory) -> Result<Vec<f64>> {
    let diff = difference(traj1, traj2)?;
    let fourier = Fourier::new(diff.grid());
    Ok((0..diff.len())
        .map(|k| fourier.sobolev_norm_sq(diff.values(k), -1.0))
        .collect())
}

fn block_length(traj: &Trajectory, k: usize) -> f64 {
    (traj.step_of(k + 1) - traj.step_of(k)) as f64 * traj.dt()
}

fn check_increments(
    traj: &Trajectory,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
) -> Result<()> {
    if traj.n_steps() != incs.n_steps() {
        return Err(Error::ScheduleMismatch(format!(
            "trajectories cover {} steps but the increments cover {}",
            traj.n_steps(),
            incs.n_steps()
        )));
    }
    if incs.n_modes() != noise.n_modes() {
        return Err(Error::invalid(format!(
            "noise model has {} modes but the increments carry {}",
            noise.n_modes(),
            incs.n_modes()
        )));
    }
    if !traj.grid().is_compatible(noise.grid()) {
        return Err(Error::GridMismatch(
            "trajectories and noise live on different grids".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingalePath {
    pub times: Vec<f64>,
    /// `M_t = 2 sum_i int <z, e^i z>_{H^-1} dW^i`, left-point rule.
    pub values: Vec<f64>,
    /// `sum_i int_0^T <z, e^i z>^2_{H^-1} ds`.
    pub summability: f64,
}

/// Martingale part of `d g` for `z = z^1 - z^2`.
pub fn martingale_path(
    traj1: &Trajectory,
    traj2: &Trajectory,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
) -> Result<MartingalePath> {
    let diff = difference(traj1, traj2)?;
    check_increments(&diff, noise, incs)?;
    let fourier = Fourier::new(diff.grid());
    let mut values = vec![0.0];
    let mut acc = 0.0;
    let mut summability = 0.0;
    let mut ez = vec![0.0; diff.grid().len()];
    for k in 0..diff.len() - 1 {
        let z = diff.values(k);
        let w = fourier.bessel_potential(z, -2.0);
        let (from, to) = (diff.step_of(k), diff.step_of(k + 1));
        let h = block_length(&diff, k);
        for i in 1..=noise.n_modes() {
            let pairing = h_minus1_against(
                &w,
                noise.mode(i).field.values(),
                z,
                &mut ez,
                diff.grid().dx(),
            );
            acc += 2.0 * pairing * incs.block_increment(i, from, to);
            summability += h * pairing * pairing;
        }
        values.push(acc);
    }
    Ok(MartingalePath {
        times: diff.times().to_vec(),
        values,
        summability,
    })
}

/// `<z, e z>_{H^-1}` given `w = (I - Delta)^{-1} z`.
fn h_minus1_against(w: &[f64], e: &[f64], z: &[f64], scratch: &mut [f64], dx: f64) -> f64 {
    for ((s, a), b) in scratch.iter_mut().zip(e).zip(z) {
        *s = a * b;
    }
    w.iter()
        .zip(scratch.iter())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * dx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationTime {
    pub level: f64,
    /// `None` when neither criterion is met on the recorded horizon.
    pub time: Option<f64>,
    pub index: Option<usize>,
}

/// First snapshot at which `int_0^t |z|^2_{L^2} >= level` or `|z(t)|^2_{H^-2} >= level`.
pub fn localization_times(diff: &Trajectory, levels: &[f64]) -> Vec<LocalizationTime> {
    let fourier = Fourier::new(diff.grid());
    let dx = diff.grid().dx();
    let mut integrated = Vec::with_capacity(diff.len());
    let mut h_minus2 = Vec::with_capacity(diff.len());
    let mut acc = 0.0;
    for k in 0..diff.len() {
        integrated.push(acc);
        let z = diff.values(k);
        h_minus2.push(fourier.sobolev_norm_sq(z, -2.0));
        if k + 1 < diff.len() {
            acc += block_length(diff, k) * z.iter().map(|v| v * v).sum::<f64>() * dx;
        }
    }
    levels
        .iter()
        .map(|&level| {
            let index = (0..diff.len()).find(|&k| integrated[k] >= level || h_minus2[k] >= level);
            LocalizationTime {
                level,
                time: index.map(|k| diff.times()[k]),
                index,
            }
        })
        .collect()
}

/// Witness of the termwise bound `2<(I-Delta)^{-1}X, D> <= 2ab <= a^2/alpha + alpha b^2
/// <= g/alpha + <D, X>` with `a = |(I-Delta)^{-1}X|_{L^2}`, `b = |D|_{L^2}`, `D = psi(X^1) - psi(X^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundChain {
    /// Largest relative excess of a left side over its right side; `<= 0` means the chain holds.
    pub max_violation: f64,
    pub pass: bool,
}

/// Everything the energy inequality needs for one pair of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub dt: f64,
    pub g: Vec<f64>,
    pub martingale: Vec<f64>,
    /// Weighted cumulative dissipation `w int <z, q> ds`.
    pub dissipation: Vec<f64>,
    /// Unweighted `<z, q>` at each snapshot; `q = a z` or `psi(X^1) - psi(X^2)`.
    pub dissipation_rate: Vec<f64>,
    pub dissipation_weight: f64,
    /// `int_0^t g ds`.
    pub integral_g: Vec<f64>,
    pub h_minus2_sq: Vec<f64>,
    /// `int_0^t |z|^2_{L^2} ds`.
    pub integral_l2: Vec<f64>,
    pub constant: f64,
    pub localization: Vec<LocalizationTime>,
    pub summability: f64,
    /// `int_0^T |z^j|^2_{L^1} ds` for each trajectory, the grid stand-in for the variation norm.
    pub l1_energy: [f64; 2],
    pub bound_chain: Option<BoundChain>,
}

impl EnergyLedger {
    pub fn build(
        traj1: &Trajectory,
        traj2: &Trajectory,
        model: &Model,
        noise: &NoiseModel,
        incs: &BrownianIncrements,
        levels: &[f64],
    ) -> Result<Self> {
        let diff = difference(traj1, traj2)?;
        check_increments(&diff, noise, incs)?;
        let grid = *diff.grid();
        let dx = grid.dx();
        let fourier = Fourier::new(&grid);
        let martingale = martingale_path(traj1, traj2, noise, incs)?;
        let alpha = match model {
            Model::PorousMedia(psi) => Some(psi.alpha()),
            Model::FokkerPlanck(_) => None,
        };
        let weight = model.dissipation_weight();

        let n = diff.len();
        let mut g = Vec::with_capacity(n);
        let mut h_minus2_sq = Vec::with_capacity(n);
        let mut rate = Vec::with_capacity(n);
        let mut q = vec![0.0; grid.len()];
        let mut chain_violation = f64::NEG_INFINITY;
        let mut l1_energy = [0.0; 2];
        for k in 0..n {
            let z = diff.values(k);
            let w = fourier.bessel_potential(z, -2.0);
            let gk = z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * dx;
            g.push(gk);
            h_minus2_sq.push(w.iter().map(|v| v * v).sum::<f64>() * dx);
            model.drift_difference(
                diff.step_of(k),
                traj1.values(k),
                traj2.values(k),
                incs,
                &mut q,
            )?;
            let zq = z.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() * dx;
            rate.push(zq);
            if let Some(alpha) = alpha {
                let lhs = 2.0 * w.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() * dx;
                let a = (w.iter().map(|v| v * v).sum::<f64>() * dx).sqrt();
                let b = (q.iter().map(|v| v * v).sum::<f64>() * dx).sqrt();
                let steps = [
                    lhs,
                    2.0 * a * b,
                    a * a / alpha + alpha * b * b,
                    gk / alpha + zq,
                ];
                let scale = steps
                    .iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs()))
                    .max(f64::MIN_POSITIVE);
                for pair in steps.windows(2) {
                    chain_violation = chain_violation.max((pair[0] - pair[1]) / scale);
                }
            }
            if k + 1 < n {
                let h = block_length(&diff, k);
                for (slot, traj) in l1_energy.iter_mut().zip([traj1, traj2]) {
                    let l1 = traj.values(k).iter().map(|v| v.abs()).sum::<f64>() * dx;
                    *slot += h * l1 * l1;
                }
            }
        }
        let cumulative = |f: &dyn Fn(usize) -> f64| {
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(n);
            for k in 0..n {
                out.push(acc);
                if k + 1 < n {
                    acc += block_length(&diff, k) * f(k);
                }
            }
            out
        };
        let dissipation = cumulative(&|k| weight * rate[k]);
        let integral_g = cumulative(&|k| g[k]);
        let integral_l2 = cumulative(&|k| diff.values(k).iter().map(|v| v * v).sum::<f64>() * dx);
        let bound_chain = alpha.map(|_| BoundChain {
            max_violation: chain_violation,
            pass: chain_violation <= 1e-10,
        });
        Ok(Self {
            times: diff.times().to_vec(),
            dt: diff.dt(),
            g,
            martingale: martingale.values,
            dissipation,
            dissipation_rate: rate,
            dissipation_weight: weight,
            integral_g,
            h_minus2_sq,
            integral_l2,
            constant: model.gronwall_constant(noise),
            localization: localization_times(&diff, levels),
            summability: martingale.summability,
            l1_energy,
            bound_chain,
        })
    }

    pub fn sup_g(&self) -> f64 {
        self.g.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn min_dissipation_rate(&self) -> f64 {
        self.dissipation_rate
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// `max_{k <= until} [g_k + D_k - g_0 - M_k - c G_k]`.
pub fn pathwise_residual(ledger: &EnergyLedger, c: f64, until: usize) -> f64 {
    (0..=until.min(ledger.g.len() - 1))
        .map(|k| {
            ledger.g[k] + ledger.dissipation[k]
                - ledger.g[0]
                - ledger.martingale[k]
                - c * ledger.integral_g[k]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    /// Relative tolerance on the exponential envelope.
    pub tolerance: f64,
    /// Pathwise slack is `slack_factor * dt * (1 + C) * sup g`.
    pub slack_factor: f64,
    /// Allowed negative excursion of `<z, q>`.
    pub dissipation_floor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 0.05,
            slack_factor: 10.0,
            dissipation_floor: 1e-10,
        }
    }
}

/// Margins of a check evaluated at `C`, `2C` and `C/2`; positive means the inequality holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub at_c: f64,
    pub at_double_c: f64,
    pub at_half_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseSummary {
    pub level: Option<f64>,
    pub pass: bool,
    /// Smallest `slack - residual` over members.
    pub margins: Margins,
    pub worst_member: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    pub level: Option<f64>,
    pub members: usize,
    pub times: Vec<f64>,
    pub mean_g: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `e^{Ct} mean g(0) (1 + tol)`.
    pub envelope: Vec<f64>,
    pub margins: Margins,
    /// `None` with fewer than two members, where no standard error exists.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub constant: f64,
    pub options: CheckOptions,
    pub pathwise: Vec<PathwiseSummary>,
    pub ensemble: Vec<EnsembleVerdict>,
    pub min_dissipation_rate: f64,
    pub dissipation_pass: bool,
    pub bound_chain: Option<BoundChain>,
    pub pass: bool,
}

fn stop_index(ledger: &EnergyLedger, level: Option<usize>) -> usize {
    let last = ledger.g.len() - 1;
    level
        .and_then(|j| ledger.localization.get(j))
        .and_then(|l| l.index)
        .map_or(last, |k| k.min(last))
}

fn pathwise_summary(
    ledgers: &[EnergyLedger],
    level: Option<usize>,
    options: &CheckOptions,
) -> PathwiseSummary {
    let mut margins = Margins {
        at_c: f64::INFINITY,
        at_double_c: f64::INFINITY,
        at_half_c: f64::INFINITY,
    };
    let mut worst_member = 0;
    for (m, ledger) in ledgers.iter().enumerate() {
        let c = ledger.constant;
        let slack = options.slack_factor * ledger.dt * (1.0 + c) * ledger.sup_g();
        let until = stop_index(ledger, level);
        let margin = |c: f64| slack - pathwise_residual(ledger, c, until);
        let at_c = margin(c);
        if at_c < margins.at_c {
            margins.at_c = at_c;
            worst_member = m;
        }
        margins.at_double_c = margins.at_double_c.min(margin(2.0 * c));
        margins.at_half_c = margins.at_half_c.min(margin(0.5 * c));
    }
    PathwiseSummary {
        level: level.and_then(|j| ledgers.first().map(|l| l.localization[j].level)),
        pass: margins.at_c >= 0.0,
        margins,
        worst_member,
    }
}

/// Ensemble mean of `g(t ^ stop)` against `e^{Ct} mean g(0) (1 + tol) + 3 SE`.
/// `level` indexes the ledgers' localization levels; `None` means no stopping.
pub fn ensemble_check(
    ledgers: &[EnergyLedger],
    level: Option<usize>,
    tolerance: f64,
) -> Result<EnsembleVerdict> {
    let first = ledgers
        .first()
        .ok_or_else(|| Error::invalid("ensemble check needs at least one ledger"))?;
    if ledgers.iter().any(|l| l.times != first.times) {
        return Err(Error::ScheduleMismatch(
            "ledgers use different snapshot times".into(),
        ));
    }
    let n = ledgers.len() as f64;
    let len = first.times.len();
    let stopped: Vec<Vec<f64>> = ledgers
        .iter()
        .map(|l| {
            let stop = stop_index(l, level);
            (0..len).map(|k| l.g[k.min(stop)]).collect()
        })
        .collect();
    let mut mean_g = vec![0.0; len];
    for path in &stopped {
        for (m, v) in mean_g.iter_mut().zip(path) {
            *m += v;
        }
    }
    mean_g.iter_mut().for_each(|m| *m /= n);
    let std_error: Vec<f64> = (0..len)
        .map(|k| {
            if ledgers.len() < 2 {
                return 0.0;
            }
            let var = stopped
                .iter()
                .map(|p| (p[k] - mean_g[k]).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    let c = first.constant;
    let bound = |c: f64, k: usize| (c * first.times[k]).exp() * mean_g[0] * (1.0 + tolerance);
    let margin = |c: f64| {
        (0..len)
            .map(|k| bound(c, k) + 3.0 * std_error[k] - mean_g[k])
            .fold(f64::INFINITY, f64::min)
    };
    let margins = Margins {
        at_c: margin(c),
        at_double_c: margin(2.0 * c),
        at_half_c: margin(0.5 * c),
    };
    Ok(EnsembleVerdict {
        level: level.map(|j| first.localization[j].level),
        members: ledgers.len(),
        times: first.times.clone(),
        envelope: (0..len).map(|k| bound(c, k)).collect(),
        mean_g,
        std_error,
        pass: (ledgers.len() >= 2).then_some(margins.at_c >= 0.0),
        margins,
    })
}

/// Pathwise and ensemble verdicts, unlocalized and at every localization level.
pub fn gronwall_check(ledgers: &[EnergyLedger], options: CheckOptions) -> Result<GronwallReport> {
    let first = ledgers
        .first()
        .ok_or_else(|| Error::invalid("Gronwall check needs at least one ledger"))?;
    let levels: Vec<Option<usize>> = std::iter::once(None)
        .chain((0..first.localization.len()).map(Some))
        .collect();
    let pathwise: Vec<PathwiseSummary> = levels
        .iter()
        .map(|&l| pathwise_summary(ledgers, l, &options))
        .collect();
    let ensemble = levels
        .iter()
        .map(|&l| ensemble_check(ledgers, l, options.tolerance))
        .collect::<Result<Vec<_>>>()?;
    let min_rate = ledgers
        .iter()
        .map(EnergyLedger::min_dissipation_rate)
        .fold(f64::INFINITY, f64::min);
    let bound_chain = ledgers
        .iter()
        .filter_map(|l| l.bound_chain.clone())
        .reduce(|a, b| {
            if b.max_violation > a.max_violation {
                b
            } else {
                a
            }
        });
    let dissipation_pass = min_rate >= -options.dissipation_floor;
    let pass = pathwise.iter().all(|p| p.pass)
        && ensemble.iter().all(|e| e.pass != Some(false))
        && dissipation_pass
        && bound_chain.as_ref().is_none_or(|b| b.pass);
    Ok(GronwallReport {
        constant: first.constant,
        options,
        pathwise,
        ensemble,
        min_dissipation_rate: min_rate,
        dissipation_pass,
        bound_chain,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::DiffusionCoefficient;
    use crate::spectral::{Grid1D, RealField};
    use std::f64::consts::PI;

    fn traj(grid: Grid1D, f: impl Fn(usize, f64) -> f64, n_steps: usize) -> Trajectory {
        let nodes = grid.nodes();
        let snaps = (0..=n_steps)
            .map(|k| nodes.iter().map(|&x| f(k, x)).collect())
            .collect();
        Trajectory::from_snapshots(grid, 0.01, 1, n_steps, snaps).unwrap()
    }

    #[test]
    fn identical_trajectories_have_zero_energy() {
        let g = Grid1D::new(3.0, 32).unwrap();
        let t = traj(g, |k, x| (k as f64 * 0.1 + x).sin(), 5);
        assert!(energy_path(&t, &t).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_and_cosine_differences() {
        let l = 2.5;
        let g = Grid1D::new(l, 64).unwrap();
        let zero = traj(g, |_, _| 0.0, 2);
        let c = traj(g, |_, _| 0.3, 2);
        for v in energy_path(&c, &zero).unwrap() {
            assert!((v - 0.09 * 2.0 * l).abs() < 1e-12);
        }
        let d = 1e-2;
        let cosine = traj(g, |_, x| d * (PI * x / l).cos(), 2);
        let k = PI / l;
        let expected = d * d * l / (1.0 + k * k);
        assert!((energy_path(&cosine, &zero).unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn schedules_must_match() {
        let g = Grid1D::new(1.0, 16).unwrap();
        assert!(matches!(
            energy_path(&traj(g, |_, _| 0.0, 2), &traj(g, |_, _| 0.0, 3)),
            Err(Error::ScheduleMismatch(_))
        ));
    }

    #[test]
    fn localization_edge_cases() {
        let g = Grid1D::new(1.0, 16).unwrap();
        let zero = traj(g, |_, _| 0.0, 4);
        let t = localization_times(&zero, &[1e-3, 1.0]);
        assert!(t.iter().all(|l| l.time.is_none()));
        let one = traj(g, |_, _| 1.0, 4);
        let t = localization_times(&one, &[0.0, 1e300]);
        assert_eq!(t[0].time, Some(0.0));
        assert_eq!(t[1].time, None);
        let t = localization_times(&one, &[0.05, 0.1, 0.5]);
        let idx: Vec<_> = t.iter().map(|l| l.index.unwrap()).collect();
        assert!(idx.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn noise_free_martingale_vanishes() {
        let g = Grid1D::new(1.0, 16).unwrap();
        let a = traj(g, |k, x| x.cos() * k as f64, 4);
        let b = traj(g, |_, _| 0.0, 4);
        let incs = BrownianIncrements::sample(0, 4, 0.01, 0).unwrap();
        let m = martingale_path(&a, &b, &NoiseModel::off(g), &incs).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_pair_passes_every_check() {
        let g = Grid1D::new(2.0, 32).unwrap();
        let t = traj(g, |k, x| (-(x * x)).exp() * (1.0 + 0.01 * k as f64), 6);
        let modes = vec![RealField::from_fn(g, |x| 0.2 * x.cos()).unwrap()];
        let noise = NoiseModel::from_fields(g, RealField::zeros(g), modes).unwrap();
        let incs = BrownianIncrements::sample(1, 6, 0.01, 2).unwrap();
        let model = Model::FokkerPlanck(DiffusionCoefficient::constant(g, 0.5).unwrap());
        let ledger = EnergyLedger::build(&t, &t, &model, &noise, &incs, &[1.0]).unwrap();
        assert!(ledger.g.iter().chain(&ledger.martingale).all(|&v| v == 0.0));
        let report = gronwall_check(&[ledger.clone(), ledger], CheckOptions::default()).unwrap();
        assert!(report.pass);
        assert_eq!(report.pathwise.len(), 2);
    }
}
