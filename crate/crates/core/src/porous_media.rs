//! Stochastic porous-media equation `dX = 1/2 d^2_xi psi(X) dt + X dmu`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::noise::{BrownianIncrements, NoiseModel};
use crate::spectral::RealField;
use crate::stepper::{self, Flux, Schedule, SolverOptions, SolverState};
use crate::trajectory::Trajectory;

/// Named nonlinearities with a closed-form Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    Identity,
    /// `slope * x`.
    Linear {
        slope: f64,
    },
    /// `amplitude * atan(rate * x)`.
    Arctan {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    /// `sign(x) min(|x|, K)^m / (m K^(m-1))`: the power law `x|x|^(m-1)` cut at `K`
    /// and rescaled to slope at most one.
    SaturatedPower {
        m: f64,
        k: f64,
    },
    Zero,
}

fn one() -> f64 {
    1.0
}

/// Monotone Lipschitz `psi` with `psi(0) = 0` and its declared Lipschitz constant.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz: f64,
    spec: Option<PsiSpec>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Nonlinearity {
    pub fn from_spec(spec: PsiSpec) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let (name, lip, f): (String, f64, Arc<dyn Fn(f64) -> f64 + Send + Sync>) = match spec {
            PsiSpec::Identity => ("identity".into(), 1.0, Arc::new(|x| x)),
            PsiSpec::Linear { slope } => {
                positive("slope", slope)?;
                (
                    format!("linear(slope={slope})"),
                    slope,
                    Arc::new(move |x| slope * x),
                )
            }
            PsiSpec::Arctan { amplitude, rate } => {
                positive("amplitude", amplitude)?;
                positive("rate", rate)?;
                (
                    format!("arctan(amplitude={amplitude}, rate={rate})"),
                    amplitude * rate,
                    Arc::new(move |x: f64| amplitude * (rate * x).atan()),
                )
            }
            PsiSpec::SaturatedPower { m, k } => {
                if !(m.is_finite() && m >= 1.0) {
                    return Err(Error::invalid(format!(
                        "saturated power needs m >= 1, got {m}"
                    )));
                }
                positive("K", k)?;
                let scale = m * k.powf(m - 1.0);
                (
                    format!("saturated_power(m={m}, K={k}, truncated at |x| = {k})"),
                    1.0,
                    Arc::new(move |x: f64| x.signum() * x.abs().min(k).powf(m) / scale),
                )
            }
            // Any positive constant is a valid Lipschitz bound for the zero map.
            PsiSpec::Zero => ("zero".into(), 1.0, Arc::new(|_| 0.0)),
        };
        Ok(Self {
            name,
            f,
            lipschitz: lip,
            spec: Some(spec),
        })
    }

    pub fn identity() -> Self {
        Self::from_spec(PsiSpec::Identity).expect("identity is valid")
    }

    pub fn arctan() -> Self {
        Self::from_spec(PsiSpec::Arctan {
            amplitude: 1.0,
            rate: 1.0,
        })
        .expect("arctan is valid")
    }

    /// User-supplied `psi`; run [`psi_alpha_check`] before trusting the declared constant.
    pub fn custom(
        name: impl Into<String>,
        lipschitz: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::violation(
                Assumption::MonotoneLipschitz,
                format!("declared Lipschitz constant must be positive, got {lipschitz}"),
            ));
        }
        Ok(Self {
            name: name.into(),
            f: Arc::new(f),
            lipschitz,
            spec: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> Option<PsiSpec> {
        self.spec
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `alpha = 1 / Lip(psi)`, the constant in `(psi(r) - psi(s))(r - s) >= alpha (psi(r) - psi(s))^2`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.lipschitz
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn apply(&self, field: &RealField) -> RealField {
        field.map(|x| self.eval(x))
    }
}

/// Witnessed constants of a pair-lattice sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiReport {
    pub pairs: usize,
    pub max_lipschitz_ratio: f64,
    /// `min (psi(r) - psi(s))(r - s) / (psi(r) - psi(s))^2` over pairs with `psi(r) != psi(s)`;
    /// infinite when `psi` is constant on the lattice.
    pub min_alpha: f64,
    pub psi_at_zero: f64,
}

/// `n` equispaced points on `[lo, hi]`, for [`psi_alpha_check`].
pub fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n)
        .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
        .collect()
}

/// Checks monotonicity, the declared Lipschitz constant and the alpha inequality on
/// every ordered pair of `points`.
pub fn psi_alpha_check(psi: &Nonlinearity, points: &[f64]) -> Result<PsiReport> {
    if points.len() < 2 {
        return Err(Error::invalid("lattice needs at least two points"));
    }
    let psi0 = psi.eval(0.0);
    if psi0 != 0.0 {
        return Err(Error::violation(
            Assumption::MonotoneLipschitz,
            format!("{}: psi(0) = {psi0}", psi.name()),
        ));
    }
    let values: Vec<f64> = points.iter().map(|&x| psi.eval(x)).collect();
    let lip = psi.lipschitz();
    let alpha = psi.alpha();
    let mut max_ratio = 0.0_f64;
    let mut min_alpha = f64::INFINITY;
    for (i, (&r, &pr)) in points.iter().zip(&values).enumerate() {
        for (&s, &ps) in points.iter().zip(&values).skip(i + 1) {
            let dr = r - s;
            let dp = pr - ps;
            if dr == 0.0 {
                continue;
            }
            if dp * dr < 0.0 {
                return Err(Error::violation(
                    Assumption::MonotoneLipschitz,
                    format!("{}: decreasing between {s} and {r}", psi.name()),
                ));
            }
            let ratio = (dp / dr).abs();
            max_ratio = max_ratio.max(ratio);
            if ratio > lip * (1.0 + 1e-12) {
                return Err(Error::violation(
                    Assumption::MonotoneLipschitz,
                    format!(
                        "{}: slope {ratio} between {s} and {r} exceeds the declared constant {lip}",
                        psi.name()
                    ),
                ));
            }
            if dp != 0.0 {
                let witnessed = dp * dr / (dp * dp);
                min_alpha = min_alpha.min(witnessed);
                if witnessed < alpha - 1e-9 {
                    return Err(Error::violation(
                        Assumption::MonotoneLipschitz,
                        format!(
                            "{}: alpha {witnessed} witnessed below 1/Lip = {alpha}",
                            psi.name()
                        ),
                    ));
                }
            }
        }
    }
    Ok(PsiReport {
        pairs: points.len() * (points.len() - 1) / 2,
        max_lipschitz_ratio: max_ratio,
        min_alpha,
        psi_at_zero: psi0,
    })
}

struct PmeFlux<'a> {
    psi: &'a Nonlinearity,
}

impl Flux for PmeFlux<'_> {
    fn flux(
        &self,
        _step: usize,
        z: &[f64],
        _incs: &BrownianIncrements,
        out: &mut [f64],
    ) -> Result<()> {
        for (o, &x) in out.iter_mut().zip(z) {
            *o = 0.5 * self.psi.eval(x);
        }
        Ok(())
    }

    fn peak_diffusivity(&self) -> f64 {
        0.5 * self.psi.lipschitz()
    }
}

pub fn step_pme(
    state: &SolverState,
    psi: &Nonlinearity,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    dt: f64,
    options: SolverOptions,
) -> Result<SolverState> {
    stepper::single_step(&PmeFlux { psi }, state, noise, incs, dt, options)
}

pub fn solve_pme(
    x0: &RealField,
    psi: &Nonlinearity,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    schedule: &Schedule,
    options: SolverOptions,
) -> Result<Trajectory> {
    stepper::solve(&PmeFlux { psi }, x0, noise, incs, schedule, options)
}

/// `<phi, X(t)> - <phi, X(0)> - 1/2 int_0^t <psi(X), phi''> ds - int phi X dmu`.
pub fn weak_form_residual_pme(
    traj: &Trajectory,
    psi: &Nonlinearity,
    noise: &NoiseModel,
    incs: &BrownianIncrements,
    phi: &RealField,
) -> Result<Vec<f64>> {
    stepper::weak_form_residual(&PmeFlux { psi }, traj, noise, incs, phi)
}

/// `int_0^T |X(s)|^2_{L^2} ds` by the left-point rule on the snapshot schedule.
pub fn time_integrated_l2(traj: &Trajectory) -> f64 {
    let dx = traj.grid().dx();
    (0..traj.len().saturating_sub(1))
        .map(|k| {
            let h = (traj.step_of(k + 1) - traj.step_of(k)) as f64 * traj.dt();
            h * traj.values(k).iter().map(|v| v * v).sum::<f64>() * dx
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid1D;

    #[test]
    fn builtins_pass_the_lattice_check() {
        let pts = lattice(-10.0, 10.0, 100);
        for spec in [
            PsiSpec::Identity,
            PsiSpec::Linear { slope: 2.5 },
            PsiSpec::Arctan {
                amplitude: 1.0,
                rate: 1.0,
            },
            PsiSpec::Arctan {
                amplitude: 2.0,
                rate: 0.5,
            },
            PsiSpec::SaturatedPower { m: 2.0, k: 5.0 },
            PsiSpec::SaturatedPower { m: 3.0, k: 1.0 },
            PsiSpec::Zero,
        ] {
            let psi = Nonlinearity::from_spec(spec).unwrap();
            let r = psi_alpha_check(&psi, &pts).unwrap();
            assert_eq!(r.pairs, 4950);
            assert!(r.max_lipschitz_ratio <= psi.lipschitz() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn identity_is_the_equality_case() {
        let r = psi_alpha_check(&Nonlinearity::identity(), &lattice(-3.0, 3.0, 100)).unwrap();
        assert!((r.max_lipschitz_ratio - 1.0).abs() < 1e-12);
        assert!((r.min_alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arctan_alpha_is_at_least_one() {
        let r = psi_alpha_check(&Nonlinearity::arctan(), &lattice(-5.0, 5.0, 100)).unwrap();
        assert!(r.max_lipschitz_ratio <= 1.0);
        assert!(r.min_alpha >= 1.0 - 1e-9);
    }

    #[test]
    fn square_is_rejected() {
        let sq = Nonlinearity::custom("square", 1.0, |x| x * x).unwrap();
        let err = psi_alpha_check(&sq, &lattice(0.0, 10.0, 100)).unwrap_err();
        assert!(matches!(
            err,
            Error::AssumptionViolation {
                assumption: Assumption::MonotoneLipschitz,
                ..
            }
        ));
        let shifted = Nonlinearity::custom("shifted", 1.0, |x| x + 1.0).unwrap();
        assert!(psi_alpha_check(&shifted, &lattice(-1.0, 1.0, 10)).is_err());
        let decreasing = Nonlinearity::custom("neg", 1.0, |x| -x).unwrap();
        assert!(psi_alpha_check(&decreasing, &lattice(-1.0, 1.0, 10)).is_err());
    }

    #[test]
    fn saturated_power_is_flat_past_the_cut() {
        let psi = Nonlinearity::from_spec(PsiSpec::SaturatedPower { m: 2.0, k: 5.0 }).unwrap();
        assert_eq!(psi.eval(0.0), 0.0);
        assert!((psi.eval(5.0) - 2.5).abs() < 1e-15);
        assert_eq!(psi.eval(7.0), psi.eval(5.0));
        assert_eq!(psi.eval(-7.0), -psi.eval(7.0));
        assert!((psi.eval(1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let g = Grid1D::new(2.0, 32).unwrap();
        let modes = vec![RealField::from_fn(g, |x| 0.3 * x.cos()).unwrap()];
        let noise = NoiseModel::from_fields(g, RealField::constant(g, 0.1), modes).unwrap();
        let incs = BrownianIncrements::sample(1, 10, 1e-3, 4).unwrap();
        let s = Schedule::new(1e-3, 10, 1).unwrap();
        let t = solve_pme(
            &RealField::zeros(g),
            &Nonlinearity::arctan(),
            &noise,
            &incs,
            &s,
            SolverOptions::default(),
        )
        .unwrap();
        assert!((0..t.len()).all(|k| t.values(k).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn integrated_l2_of_constant_path() {
        let g = Grid1D::new(1.0, 16).unwrap();
        let t = Trajectory::from_snapshots(g, 0.1, 1, 10, vec![vec![2.0; 16]; 11]).unwrap();
        assert!((time_integrated_l2(&t) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn spec_round_trip() {
        let spec = PsiSpec::SaturatedPower { m: 2.0, k: 5.0 };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"saturated_power","m":2.0,"k":5.0}"#);
        let back: PsiSpec = serde_json::from_str(r#"{"kind":"arctan"}"#).unwrap();
        assert_eq!(
            back,
            PsiSpec::Arctan {
                amplitude: 1.0,
                rate: 1.0
            }
        );
    }
}
