use serde::{Deserialize, Serialize};

use super::ledger::difference;
use super::Model;
use crate::error::{Error, Result};
use crate::noise::{BrownianIncrements, NoiseModel};
use crate::spectral::{Fourier, Mollifier, MollifierSpec};
use crate::trajectory::Trajectory;

/// Default mollifier widths, in units of the domain scale.
pub const DEFAULT_LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Allowed relative increase between consecutive rungs.
const MONOTONE_SLACK: f64 = 0.05;

/// One discrepancy measured along the ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderQuantity {
    pub name: String,
    pub values: Vec<f64>,
    pub nonincreasing: bool,
    /// Least-squares slope of `log sqrt(value)` against `log epsilon`; `None` when
    /// the quantity vanishes or only one width is given.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub epsilons: Vec<f64>,
    pub g: Vec<f64>,
    /// `g_eps(t) = |(z^1 - z^2)(t) * phi_eps|^2_{H^-1}`, one path per width.
    pub g_eps: Vec<Vec<f64>>,
    /// `max_t |g_eps(t) - g(t)|` per width.
    pub energy_gap: Vec<f64>,
    pub quantities: Vec<LadderQuantity>,
    pub min_rate: Option<f64>,
    pub pass: bool,
}

fn fitted_rate(eps: &[f64], values: &[f64]) -> Option<f64> {
    if eps.len() < 2 || values.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| 0.5 * v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Mollified energies and the four integrated discrepancies
/// `int |z_eps - z|^2`, `int |q_eps - q|^2`, `sum_i int |(e^i z)_eps - e^i z|^2` and
/// `sum_i int (<z_eps, (e^i z)_eps>_{H^-1} - <z, e^i z>_{H^-1})^2` along a decreasing
/// list of widths, where `q` is the drift difference of `model`.
pub fn mollified_energy_path(
    traj1: &Trajectory,
    traj2: &Trajectory,
    model: &Model,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    epsilons: &[f64],
) -> Result<LadderReport> {
    if epsilons.is_empty() {
        return Err(Error::invalid("empty mollifier ladder"));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid(
            "mollifier widths must be strictly decreasing",
        ));
    }
    let diff = difference(traj1, traj2)?;
    if diff.n_steps() != incs.n_steps() {
        return Err(Error::ScheduleMismatch(
            "trajectories and increments cover different steps".into(),
        ));
    }
    let grid = *diff.grid();
    if !grid.is_compatible(noise.grid()) {
        return Err(Error::GridMismatch(
            "trajectories and noise live on different grids".into(),
        ));
    }
    let mollifiers = epsilons
        .iter()
        .map(|&e| Mollifier::new(&grid, MollifierSpec::new(e)))
        .collect::<Result<Vec<_>>>()?;
    let fourier = Fourier::new(&grid);
    let dx = grid.dx();
    let l2_gap =
        |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() * dx;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() * dx;

    let n_eps = epsilons.len();
    let mut g = Vec::with_capacity(diff.len());
    let mut g_eps = vec![Vec::with_capacity(diff.len()); n_eps];
    let mut sums = vec![[0.0_f64; 4]; n_eps];
    let mut q = vec![0.0; grid.len()];
    for k in 0..diff.len() {
        let z = diff.values(k);
        let w = fourier.bessel_potential(z, -2.0);
        g.push(dot(z, &w));
        let smoothed: Vec<Vec<f64>> = mollifiers.iter().map(|m| m.apply_values(z)).collect();
        for (j, ze) in smoothed.iter().enumerate() {
            g_eps[j].push(fourier.sobolev_norm_sq(ze, -1.0));
        }
        if k + 1 == diff.len() {
            break;
        }
        let h = (diff.step_of(k + 1) - diff.step_of(k)) as f64 * diff.dt();
        model.drift_difference(
            diff.step_of(k),
            traj1.values(k),
            traj2.values(k),
            incs,
            &mut q,
        )?;
        let ez: Vec<Vec<f64>> = noise
            .modes()
            .iter()
            .map(|m| m.field.values().iter().zip(z).map(|(e, v)| e * v).collect())
            .collect();
        let pairings: Vec<f64> = ez.iter().map(|f| dot(&w, f)).collect();
        for (j, m) in mollifiers.iter().enumerate() {
            let ze = &smoothed[j];
            let we = fourier.bessel_potential(ze, -2.0);
            sums[j][0] += h * l2_gap(ze, z);
            sums[j][1] += h * l2_gap(&m.apply_values(&q), &q);
            for (f, p) in ez.iter().zip(&pairings) {
                let fe = m.apply_values(f);
                sums[j][2] += h * l2_gap(&fe, f);
                sums[j][3] += h * (dot(&we, &fe) - p).powi(2);
            }
        }
    }

    let names = [
        "int |z_eps - z|^2",
        "int |q_eps - q|^2",
        "sum_i int |(e^i z)_eps - e^i z|^2",
        "sum_i int (<z_eps, (e^i z)_eps> - <z, e^i z>)^2",
    ];
    let quantities: Vec<LadderQuantity> = names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let values: Vec<f64> = sums.iter().map(|s| s[c]).collect();
            LadderQuantity {
                name: (*name).to_string(),
                nonincreasing: values
                    .windows(2)
                    .all(|w| w[1] <= w[0] * (1.0 + MONOTONE_SLACK)),
                rate: fitted_rate(epsilons, &values),
                values,
            }
        })
        .collect();
    let energy_gap = g_eps
        .iter()
        .map(|path| {
            path.iter()
                .zip(&g)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let min_rate = quantities.iter().filter_map(|q| q.rate).reduce(f64::min);
    let pass = quantities.iter().all(|q| q.nonincreasing) && min_rate.is_none_or(|r| r >= 1.0);
    Ok(LadderReport {
        epsilons: epsilons.to_vec(),
        g,
        g_eps,
        energy_gap,
        quantities,
        min_rate,
        pass,
    })
}
