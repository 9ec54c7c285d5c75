//! Noise basis `e^0, e^1, .., e^N` and the multiplier-norm calculus.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::spectral::{sobolev_norm, Fourier, Grid1D, RealField};

/// Smooth plateau window: 1 on `|xi| <= half_width - taper`, 0 on `|xi| >= half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub half_width: f64,
    pub taper: f64,
}

fn smooth_pos(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

fn smooth_pos_prime(u: f64) -> f64 {
    if u > 0.0 {
        smooth_pos(u) / (u * u)
    } else {
        0.0
    }
}

/// C-infinity step from 0 (u <= 0) to 1 (u >= 1).
fn smooth_step(u: f64) -> f64 {
    let a = smooth_pos(u);
    let b = smooth_pos(1.0 - u);
    a / (a + b)
}

fn smooth_step_prime(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let a = smooth_pos(u);
    let b = smooth_pos(1.0 - u);
    let da = smooth_pos_prime(u);
    let db = -smooth_pos_prime(1.0 - u);
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

impl Window {
    fn validate(&self, grid: &Grid1D) -> Result<()> {
        if !(self.taper > 0.0
            && self.half_width > self.taper
            && self.half_width <= grid.half_length())
        {
            return Err(Error::invalid(format!(
                "window needs 0 < taper < half_width <= L, got taper {} half_width {} L {}",
                self.taper,
                self.half_width,
                grid.half_length()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        smooth_step((self.half_width - x.abs()) / self.taper)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        -x.signum() * smooth_step_prime((self.half_width - x.abs()) / self.taper) / self.taper
    }

    /// `sup |w'|`, from a dense sample of the transition profile.
    pub fn derivative_sup(&self) -> f64 {
        let m = 20_000;
        (1..m)
            .map(|j| smooth_step_prime(j as f64 / m as f64))
            .fold(0.0_f64, f64::max)
            / self.taper
    }
}

/// Built-in families of noise modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseFamily {
    /// `e^i = (c / i^p) w(xi) cos(i pi xi / L)`; summable iff `p > 3/2`.
    Trig { c: f64, p: f64 },
    /// `e^i = (c / i^p) exp(-(xi - x_i)^2 / (2 width^2))` with low-discrepancy
    /// centres `x_i` in `[-spread, spread]`; summable iff `p > 1/2`.
    Gaussian {
        c: f64,
        p: f64,
        width: f64,
        spread: f64,
    },
    /// User-tabulated node values, one array per mode; derivatives taken spectrally.
    Tabulated { modes: Vec<Vec<f64>> },
}

/// Full noise description: family, truncation, drift basis and optional window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub n_modes: usize,
    /// `e^0 = drift * w` (or the constant `drift` without a window).
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub window: Option<Window>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// Closed-form value of the neglected sum.
    Exact,
    /// Closed-form upper bound.
    Bound,
}

/// Neglected mass `sum_{i>N} (|e^i|^2 + |(e^i)'|^2)` of the truncated family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub kind: TailKind,
    pub value: f64,
}

/// One basis function with its derivative and the derived norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMode {
    pub field: RealField,
    pub derivative: RealField,
    pub sup: f64,
    pub derivative_sup: f64,
    pub multiplier_bound: f64,
}

impl NoiseMode {
    pub fn new(field: RealField, derivative: RealField) -> Result<Self> {
        field.check_same_grid(&derivative)?;
        let sup = field.sup_norm();
        let derivative_sup = derivative.sup_norm();
        Ok(Self {
            multiplier_bound: multiplier_norm_bound(&field, &derivative),
            field,
            derivative,
            sup,
            derivative_sup,
        })
    }

    /// Derivative computed spectrally.
    pub fn from_field(field: RealField) -> Result<Self> {
        let d = crate::spectral::derivative(&field, 1)?;
        Self::new(field, d)
    }

    fn weight(&self) -> f64 {
        self.sup * self.sup + self.derivative_sup * self.derivative_sup
    }
}

/// Immutable noise model shared read-only by every solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    grid: Grid1D,
    drift: NoiseMode,
    modes: Vec<NoiseMode>,
    partial_sum: f64,
    tail: Option<TailReport>,
}

impl NoiseModel {
    /// Builds a model from explicit fields, derivatives taken spectrally.
    pub fn from_fields(grid: Grid1D, drift: RealField, modes: Vec<RealField>) -> Result<Self> {
        let drift = NoiseMode::from_field(drift)?;
        let modes = modes
            .into_iter()
            .map(NoiseMode::from_field)
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(
            grid,
            drift,
            modes,
            Some(TailReport {
                kind: TailKind::Exact,
                value: 0.0,
            }),
        )
    }

    /// No noise at all: `N = 0`, `e^0 = 0`.
    pub fn off(grid: Grid1D) -> Self {
        let zero = RealField::zeros(grid);
        let drift = NoiseMode::new(zero.clone(), zero).expect("same grid");
        Self {
            grid,
            drift,
            modes: Vec::new(),
            partial_sum: 0.0,
            tail: Some(TailReport {
                kind: TailKind::Exact,
                value: 0.0,
            }),
        }
    }

    fn assemble(
        grid: Grid1D,
        drift: NoiseMode,
        modes: Vec<NoiseMode>,
        tail: Option<TailReport>,
    ) -> Result<Self> {
        for m in std::iter::once(&drift).chain(&modes) {
            if !m.field.grid().is_compatible(&grid) {
                return Err(Error::GridMismatch("noise mode on a different grid".into()));
            }
        }
        let partial_sum = modes.iter().map(NoiseMode::weight).sum();
        Ok(Self {
            grid,
            drift,
            modes,
            partial_sum,
            tail,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn drift(&self) -> &NoiseMode {
        &self.drift
    }

    /// Mode `i` for `i in 1..=N`.
    pub fn mode(&self, i: usize) -> &NoiseMode {
        &self.modes[i - 1]
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    /// `sum_{i=1}^N (|e^i|^2 + |(e^i)'|^2)` over grid sup norms.
    pub fn partial_sum(&self) -> f64 {
        self.partial_sum
    }

    pub fn tail(&self) -> Option<TailReport> {
        self.tail
    }

    pub fn multiplier_bounds(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.multiplier_bound).collect()
    }

    pub fn is_off(&self) -> bool {
        self.modes.is_empty() && self.drift.sup == 0.0
    }
}

/// `sum_{i>n} i^{-s}` for `s > 1`: a few explicit terms plus an Euler-Maclaurin tail.
pub fn zeta_tail(s: f64, n: usize) -> f64 {
    debug_assert!(s > 1.0);
    let explicit = 64;
    let head: f64 = (n + 1..=n + explicit).map(|i| (i as f64).powf(-s)).sum();
    let k = (n + explicit + 1) as f64;
    let rest = k.powf(1.0 - s) / (s - 1.0) + 0.5 * k.powf(-s) + s * k.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * k.powf(-s - 3.0) / 720.0;
    head + rest
}

/// Build the truncated basis `{e^0, e^1..e^N}` for a family.
pub fn build_noise_basis(spec: &NoiseSpec, grid: &Grid1D) -> Result<NoiseModel> {
    if let Some(w) = &spec.window {
        w.validate(grid)?;
    }
    let window_value = |x: f64| spec.window.map_or(1.0, |w| w.value(x));
    let window_derivative = |x: f64| spec.window.map_or(0.0, |w| w.derivative(x));
    let nodes = grid.nodes();

    let drift_field = RealField::new(
        *grid,
        nodes
            .iter()
            .map(|&x| spec.drift * window_value(x))
            .collect(),
    )?;
    let drift_derivative = RealField::new(
        *grid,
        nodes
            .iter()
            .map(|&x| spec.drift * window_derivative(x))
            .collect(),
    )?;
    let drift = NoiseMode::new(drift_field, drift_derivative)?;

    let l = grid.half_length();
    let (modes, tail) = match &spec.family {
        NoiseFamily::Trig { c, p } => {
            check_amplitude(*c)?;
            if !(*p > 1.5) {
                return Err(Error::violation(
                    Assumption::NoiseSummability,
                    format!(
                        "trigonometric family needs p > 3/2 for sum_i (i pi / L)^2 c^2 / i^(2p) to converge, got p = {p}"
                    ),
                ));
            }
            let mut modes = Vec::with_capacity(spec.n_modes);
            for i in 1..=spec.n_modes {
                let amp = c / (i as f64).powf(*p);
                let k = i as f64 * PI / l;
                let f: Vec<f64> = nodes
                    .iter()
                    .map(|&x| amp * window_value(x) * (k * x).cos())
                    .collect();
                let df: Vec<f64> = nodes
                    .iter()
                    .map(|&x| {
                        amp * (window_derivative(x) * (k * x).cos()
                            - window_value(x) * k * (k * x).sin())
                    })
                    .collect();
                modes.push(NoiseMode::new(
                    RealField::new(*grid, f)?,
                    RealField::new(*grid, df)?,
                )?);
            }
            let n = spec.n_modes;
            let q = PI / l;
            let tail = match &spec.window {
                None => TailReport {
                    kind: TailKind::Exact,
                    value: c * c * (zeta_tail(2.0 * p, n) + q * q * zeta_tail(2.0 * p - 2.0, n)),
                },
                Some(w) => {
                    let w1 = w.derivative_sup();
                    TailReport {
                        kind: TailKind::Bound,
                        value: c
                            * c
                            * ((1.0 + w1 * w1) * zeta_tail(2.0 * p, n)
                                + 2.0 * w1 * q * zeta_tail(2.0 * p - 1.0, n)
                                + q * q * zeta_tail(2.0 * p - 2.0, n)),
                    }
                }
            };
            (modes, Some(tail))
        }
        NoiseFamily::Gaussian {
            c,
            p,
            width,
            spread,
        } => {
            check_amplitude(*c)?;
            if !(*p > 0.5) {
                return Err(Error::violation(
                    Assumption::NoiseSummability,
                    format!("gaussian family needs p > 1/2, got p = {p}"),
                ));
            }
            if !(*width > 0.0 && *spread >= 0.0 && spread + 6.0 * width <= l) {
                return Err(Error::invalid(format!(
                    "gaussian bumps need width > 0 and spread + 6 width <= L, got width {width} spread {spread} L {l}"
                )));
            }
            let period = grid.period();
            let golden = 0.5 * (5.0_f64.sqrt() - 1.0);
            let mut modes = Vec::with_capacity(spec.n_modes);
            for i in 1..=spec.n_modes {
                let amp = c / (i as f64).powf(*p);
                let center = spread * (2.0 * (i as f64 * golden).fract() - 1.0);
                let offsets: Vec<f64> = nodes
                    .iter()
                    .map(|&x| (x - center + 0.5 * period).rem_euclid(period) - 0.5 * period)
                    .collect();
                let f: Vec<f64> = offsets
                    .iter()
                    .map(|d| amp * (-d * d / (2.0 * width * width)).exp())
                    .collect();
                let df: Vec<f64> = offsets
                    .iter()
                    .zip(&f)
                    .map(|(d, v)| -d / (width * width) * v)
                    .collect();
                modes.push(NoiseMode::new(
                    RealField::new(*grid, f)?,
                    RealField::new(*grid, df)?,
                )?);
            }
            let d1 = 1.0 / (width * std::f64::consts::E.sqrt());
            let tail = TailReport {
                kind: TailKind::Exact,
                value: c * c * (1.0 + d1 * d1) * zeta_tail(2.0 * p, spec.n_modes),
            };
            (modes, Some(tail))
        }
        NoiseFamily::Tabulated { modes: tables } => {
            if tables.len() < spec.n_modes {
                return Err(Error::invalid(format!(
                    "tabulated family has {} modes but {} were requested",
                    tables.len(),
                    spec.n_modes
                )));
            }
            let modes = tables
                .iter()
                .take(spec.n_modes)
                .map(|t| NoiseMode::from_field(RealField::new(*grid, t.clone())?))
                .collect::<Result<Vec<_>>>()?;
            (modes, None)
        }
    };
    NoiseModel::assemble(*grid, drift, modes, tail)
}

fn check_amplitude(c: f64) -> Result<()> {
    if c.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("amplitude must be finite, got {c}")))
    }
}

/// `C(e) = sqrt(2) (|e|_inf^2 + |e'|_inf^2)^{1/2}` with grid sup norms.
pub fn multiplier_norm_bound(e: &RealField, e_prime: &RealField) -> f64 {
    let a = e.sup_norm();
    let b = e_prime.sup_norm();
    SQRT_2 * (a * a + b * b).sqrt()
}

/// Probe-based lower bound on the multiplier norm of `g -> e g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMultiplierNorm {
    /// `sup_g |e g|_{H^-1} / |g|_{H^-1}`.
    pub h_minus1: f64,
    /// `sup_g |e g|_{H^1} / |g|_{H^1}`.
    pub h1: f64,
    pub probes_used: usize,
    pub probes_skipped: usize,
}

impl EmpiricalMultiplierNorm {
    pub fn value(&self) -> f64 {
        self.h_minus1.max(self.h1)
    }
}

pub fn multiplier_norm_empirical(
    e: &RealField,
    probes: &[RealField],
) -> Result<EmpiricalMultiplierNorm> {
    let fourier = Fourier::new(e.grid());
    let mut out = EmpiricalMultiplierNorm {
        h_minus1: 0.0,
        h1: 0.0,
        probes_used: 0,
        probes_skipped: 0,
    };
    for (idx, g) in probes.iter().enumerate() {
        e.check_same_grid(g)?;
        let gm1 = fourier.sobolev_norm_sq(g.values(), -1.0).sqrt();
        let gp1 = fourier.sobolev_norm_sq(g.values(), 1.0).sqrt();
        if gm1 == 0.0 || gp1 == 0.0 {
            tracing::warn!(
                probe = idx,
                "zero probe skipped in multiplier norm estimate"
            );
            out.probes_skipped += 1;
            continue;
        }
        let eg = e.mul(g)?;
        out.h_minus1 = out
            .h_minus1
            .max(fourier.sobolev_norm_sq(eg.values(), -1.0).sqrt() / gm1);
        out.h1 = out.h1.max(sobolev_norm(&eg, 1.0) / gp1);
        out.probes_used += 1;
    }
    Ok(out)
}

/// Seeded probe family: random band-limited fields (modes `|m| <= n/8`)
/// alternating with Gaussians of random centre, width in `[4 dx, L/4]` and amplitude.
pub fn multiplier_probes(grid: &Grid1D, count: usize, seed: u64) -> Vec<RealField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.half_length();
    let max_mode = (grid.len() / 8).max(1);
    let nodes = grid.nodes();
    (0..count)
        .map(|j| {
            let values: Vec<f64> = if j % 2 == 0 {
                let coeffs: Vec<(f64, f64)> = (0..=max_mode)
                    .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect();
                nodes
                    .iter()
                    .map(|&x| {
                        coeffs
                            .iter()
                            .enumerate()
                            .map(|(m, (a, b))| {
                                let k = PI * m as f64 / l;
                                let decay = 1.0 / (1.0 + m as f64);
                                decay
                                    * (a * (k * x).cos()
                                        + if m == 0 { 0.0 } else { b * (k * x).sin() })
                            })
                            .sum()
                    })
                    .collect()
            } else {
                let center = rng.random_range(-0.8 * l..0.8 * l);
                let width = rng.random_range(4.0 * grid.dx()..0.25 * l);
                let amp: f64 = rng.random_range(0.1..10.0);
                let period = grid.period();
                nodes
                    .iter()
                    .map(|&x| {
                        let d = (x - center + 0.5 * period).rem_euclid(period) - 0.5 * period;
                        amp * (-d * d / (2.0 * width * width)).exp()
                    })
                    .collect()
            };
            RealField::new(*grid, values).expect("probe values are finite")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig_spec(c: f64, p: f64, n: usize) -> NoiseSpec {
        NoiseSpec {
            family: NoiseFamily::Trig { c, p },
            n_modes: n,
            drift: 0.0,
            window: None,
        }
    }

    #[test]
    fn trig_sup_norms_follow_amplitudes() {
        let g = Grid1D::new(PI, 256).unwrap();
        let m = build_noise_basis(&trig_spec(1.0, 2.0, 4), &g).unwrap();
        for i in 1..=4 {
            let expected = 1.0 / (i * i) as f64;
            assert!((m.mode(i).sup - expected).abs() < 1e-12, "mode {i}");
        }
    }

    #[test]
    fn divergent_family_is_rejected() {
        let g = Grid1D::new(PI, 64).unwrap();
        let err = build_noise_basis(&trig_spec(1.0, 1.0, 4), &g).unwrap_err();
        assert!(matches!(
            err,
            Error::AssumptionViolation {
                assumption: Assumption::NoiseSummability,
                ..
            }
        ));
        assert!(build_noise_basis(&trig_spec(1.0, 1.5, 4), &g).is_err());
    }

    #[test]
    fn empty_family_is_deterministic() {
        let g = Grid1D::new(PI, 64).unwrap();
        let m = build_noise_basis(&trig_spec(1.0, 2.0, 0), &g).unwrap();
        assert_eq!(m.n_modes(), 0);
        assert!(m.is_off());
        assert_eq!(m.partial_sum(), 0.0);
    }

    #[test]
    fn stored_partial_sum_and_bounds_are_consistent() {
        let g = Grid1D::new(5.0, 128).unwrap();
        let spec = NoiseSpec {
            family: NoiseFamily::Trig { c: 0.7, p: 2.5 },
            n_modes: 6,
            drift: 0.3,
            window: Some(Window {
                half_width: 4.0,
                taper: 1.5,
            }),
        };
        let m = build_noise_basis(&spec, &g).unwrap();
        let recomputed: f64 = m
            .modes()
            .iter()
            .map(|e| e.field.sup_norm().powi(2) + e.derivative.sup_norm().powi(2))
            .sum();
        assert!((recomputed - m.partial_sum()).abs() < 1e-12);
        for e in m.modes() {
            let c = SQRT_2 * (e.sup.powi(2) + e.derivative_sup.powi(2)).sqrt();
            assert!((c - e.multiplier_bound).abs() < 1e-12);
        }
        assert_eq!(m.tail().unwrap().kind, TailKind::Bound);
    }

    #[test]
    fn window_derivative_matches_finite_difference() {
        let w = Window {
            half_width: 3.0,
            taper: 1.0,
        };
        for x in [-2.7, -2.5, -2.1, 2.2, 2.5, 2.9] {
            let h = 1e-6;
            let fd = (w.value(x + h) - w.value(x - h)) / (2.0 * h);
            assert!((fd - w.derivative(x)).abs() < 1e-6, "x = {x}");
        }
        assert_eq!(w.value(0.0), 1.0);
        assert_eq!(w.value(3.5), 0.0);
        // The step profile peaks at the midpoint with slope 2.
        assert!((w.derivative_sup() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zeta_tail_matches_known_values() {
        // zeta(2) = pi^2/6, zeta(4) = pi^4/90.
        assert!((zeta_tail(2.0, 0) - PI * PI / 6.0).abs() < 1e-12);
        assert!((zeta_tail(4.0, 0) - PI.powi(4) / 90.0).abs() < 1e-12);
        let direct: f64 = (11..200_000).map(|i| (i as f64).powi(-3)).sum();
        assert!((zeta_tail(3.0, 10) - direct).abs() < 1e-10);
    }

    #[test]
    fn multiplier_bound_examples() {
        let g = Grid1D::new(PI, 64).unwrap();
        let one = RealField::constant(g, 1.0);
        let zero = RealField::zeros(g);
        assert!((multiplier_norm_bound(&one, &zero) - SQRT_2).abs() < 1e-15);
        assert_eq!(multiplier_norm_bound(&zero, &zero), 0.0);
        // sin has a node at xi = pi/2 and cos at xi = 0 on this grid.
        let s = RealField::from_fn(g, f64::sin).unwrap();
        let c = RealField::from_fn(g, f64::cos).unwrap();
        assert!((multiplier_norm_bound(&s, &c) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_norm_of_identity_and_zero() {
        let g = Grid1D::new(PI, 64).unwrap();
        let probes = multiplier_probes(&g, 20, 3);
        let one = multiplier_norm_empirical(&RealField::constant(g, 1.0), &probes).unwrap();
        assert!((one.value() - 1.0).abs() < 1e-12);
        let zero = multiplier_norm_empirical(&RealField::zeros(g), &probes).unwrap();
        assert_eq!(zero.value(), 0.0);
    }

    #[test]
    fn zero_probe_is_skipped() {
        let g = Grid1D::new(PI, 32).unwrap();
        let probes = vec![RealField::zeros(g), RealField::constant(g, 2.0)];
        let r = multiplier_norm_empirical(&RealField::constant(g, 3.0), &probes).unwrap();
        assert_eq!(r.probes_skipped, 1);
        assert_eq!(r.probes_used, 1);
        assert!((r.value() - 3.0).abs() < 1e-12);
    }
}
