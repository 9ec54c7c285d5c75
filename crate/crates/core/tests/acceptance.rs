//! End-to-end acceptance checks. Each criterion prints one `[PASS]`/`[FAIL]` line;
//! the binary exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use spde_core::energy::{
    gronwall_constant_fp, gronwall_constant_pme, mollified_energy_path, run_member,
    uniqueness_experiment, ExperimentMode, ExperimentReport, ExperimentSetup, Model,
    DEFAULT_LADDER,
};
use spde_core::noise::{
    build_noise_basis, ito_integral, multiplier_norm_bound, multiplier_norm_empirical,
    multiplier_probes, BrownianIncrements, NoiseFamily, NoiseModel, NoiseSpec, Window,
};
use spde_core::porous_media::{solve_pme, Nonlinearity, PsiSpec};
use spde_core::{
    solve_fp, DiffusionCoefficient, Grid1D, RealField, Schedule, Scheme, SolverOptions, Trajectory,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn l2_distance(a: &[f64], b: &[f64], dx: f64) -> f64 {
    (a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() * dx).sqrt()
}

fn trig_noise(grid: Grid1D, c: f64, n_modes: usize, window: Option<Window>) -> NoiseModel {
    let spec = NoiseSpec {
        family: NoiseFamily::Trig { c, p: 2.0 },
        n_modes,
        drift: 0.0,
        window,
    };
    build_noise_basis(&spec, &grid).expect("valid noise spec")
}

fn heat_oracle() -> Outcome {
    let start = Instant::now();
    let l = PI;
    let grid = Grid1D::new(l, 256).unwrap();
    let a0 = 0.3;
    let a = DiffusionCoefficient::constant(grid, a0).unwrap();
    let x0 = RealField::from_fn(grid, |x| (PI * x / l).cos()).unwrap();
    let dt = 1e-3;
    let schedule = Schedule::new(dt, 1000, 100).unwrap();
    let incs = BrownianIncrements::sample(0, 1000, dt, 1).unwrap();
    let options = SolverOptions {
        scheme: Scheme::SemiImplicit,
        dealias: false,
    };
    let traj = solve_fp(&x0, &a, &NoiseModel::off(grid), &incs, &schedule, options)
        .map_err(|e| e.to_string())?;
    let k = PI / l;
    let worst = (0..traj.len())
        .map(|s| {
            let t = traj.times()[s];
            let exact: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|&x| (k * x).cos() * (-a0 * k * k * t).exp())
                .collect();
            l2_distance(traj.values(s), &exact, grid.dx())
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    check(
        worst < 1e-6 && elapsed < Duration::from_secs(5),
        format!(
            "heat oracle L2 error {worst:.3e} (< 1e-6), {:.2}s (< 5s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn gbm_strong_order() -> Outcome {
    let start = Instant::now();
    let grid = Grid1D::new(PI, 64).unwrap();
    let noise = trig_noise(grid, 0.5, 1, None);
    let a = DiffusionCoefficient::constant(grid, 0.0).unwrap();
    let x0 = RealField::from_fn(grid, |x| 1.0 + 0.5 * (-x * x).exp()).unwrap();
    let e: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| 0.5 * (PI * x / PI).cos())
        .collect();
    // 100-path estimates of the ratio scatter with sd ~0.13 around sqrt(2); 1000 paths keep it near 0.04.
    let paths = 1000;
    let coarse = 64;
    let errors: Vec<[f64; 2]> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let fine =
                BrownianIncrements::sample(1, 2 * coarse, 0.5 / coarse as f64, 7_000 + p as u64)
                    .unwrap();
            let w_t: f64 = fine.row(1).iter().sum();
            let exact: Vec<f64> = x0
                .values()
                .iter()
                .zip(&e)
                .map(|(x, ei)| x * (ei * w_t - 0.5 * ei * ei).exp())
                .collect();
            let mut out = [0.0; 2];
            for (slot, factor) in [(0, 2), (1, 1)] {
                let incs = fine.coarsen(factor).unwrap();
                let s = Schedule::new(incs.dt(), incs.n_steps(), incs.n_steps()).unwrap();
                let traj = solve_fp(&x0, &a, &noise, &incs, &s, SolverOptions::default()).unwrap();
                out[slot] = l2_distance(traj.last().values(), &exact, grid.dx()).powi(2);
            }
            out
        })
        .collect();
    let rms = |slot: usize| (errors.iter().map(|e| e[slot]).sum::<f64>() / paths as f64).sqrt();
    let ratio = rms(0) / rms(1);
    let elapsed = start.elapsed();
    check(
        (1.25..=1.60).contains(&ratio) && elapsed < Duration::from_secs(60),
        format!(
            "GBM strong error over {paths} paths {:.3e} at dt = 1/{coarse}, {:.3e} at dt/2, ratio {ratio:.3} (in [1.25, 1.60]), {:.2}s",
            rms(0),
            rms(1),
            elapsed.as_secs_f64()
        ),
    )
}

fn ito_isometry() -> Outcome {
    let start = Instant::now();
    let grid = Grid1D::new(PI, 64).unwrap();
    let noise = trig_noise(grid, 1.0, 8, None);
    let dt = 0.01;
    let n_steps = 100;
    let snaps: Vec<Vec<f64>> = (0..=n_steps)
        .map(|k| {
            let t = k as f64 * dt;
            grid.nodes()
                .iter()
                .map(|&x| (1.0 + t) * (-(x - 0.3) * (x - 0.3)).exp())
                .collect()
        })
        .collect();
    let path = Trajectory::from_snapshots(grid, dt, 1, n_steps, snaps.clone()).unwrap();

    let mut quadrature = 0.0;
    for snap in &snaps[..n_steps] {
        for i in 1..=8 {
            let e = noise.mode(i).field.values();
            let pairing: f64 = e.iter().zip(snap).map(|(a, b)| a * b).sum::<f64>() * grid.dx();
            quadrature += pairing * pairing * dt;
        }
    }

    let seeds = 10_000;
    let samples: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let incs = BrownianIncrements::sample(8, n_steps, dt, 90_000 + s as u64).unwrap();
            *ito_integral(&path, &noise, &incs)
                .unwrap()
                .martingale
                .last()
                .unwrap()
        })
        .collect();
    let n = seeds as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let se = ((m4 - var * var) / n).sqrt();
    let elapsed = start.elapsed();
    check(
        (var - quadrature).abs() <= 3.0 * se && elapsed < Duration::from_secs(60),
        format!(
            "Ito isometry variance {var:.5e} vs quadrature {quadrature:.5e}, |diff| {:.2e} <= 3 SE {:.2e}, {:.2}s",
            (var - quadrature).abs(),
            3.0 * se,
            elapsed.as_secs_f64()
        ),
    )
}

fn multiplier_bound() -> Outcome {
    let grid = Grid1D::new(4.0, 128).unwrap();
    let probes = multiplier_probes(&grid, 100, 31);
    let window = Some(Window {
        half_width: 3.5,
        taper: 1.0,
    });
    let families = [
        (NoiseFamily::Trig { c: 1.0, p: 2.0 }, None),
        (NoiseFamily::Trig { c: 0.5, p: 1.75 }, window),
        (
            NoiseFamily::Gaussian {
                c: 1.0,
                p: 1.0,
                width: 0.3,
                spread: 2.0,
            },
            None,
        ),
    ];
    let mut worst = 0.0_f64;
    let mut members = 0;
    for (family, window) in families {
        let spec = NoiseSpec {
            family,
            n_modes: 8,
            drift: 0.7,
            window,
        };
        let model = build_noise_basis(&spec, &grid).map_err(|e| e.to_string())?;
        for mode in std::iter::once(model.drift()).chain(model.modes()) {
            let bound = multiplier_norm_bound(&mode.field, &mode.derivative);
            let emp = multiplier_norm_empirical(&mode.field, &probes)
                .unwrap()
                .value();
            worst = worst.max(emp / bound);
            members += 1;
        }
    }
    let l = grid.half_length();
    let sine = RealField::from_fn(grid, |x| (PI * x / l).sin()).unwrap();
    let dsine = RealField::from_fn(grid, |x| PI / l * (PI * x / l).cos()).unwrap();
    worst = worst.max(
        multiplier_norm_empirical(&sine, &probes).unwrap().value()
            / multiplier_norm_bound(&sine, &dsine),
    );
    let one = RealField::constant(grid, 1.0);
    let unit = multiplier_norm_empirical(&one, &probes).unwrap().value();
    check(
        worst <= 1.0 + 1e-8 && (unit - 1.0).abs() <= 1e-6,
        format!("multiplier norms: worst empirical/bound {worst:.4} over {members} modes and sin (<= 1 + 1e-8), e = 1 gives {unit:.12}"),
    )
}

fn uniqueness_setup(
    model: Model,
    grid: Grid1D,
    noise: NoiseModel,
    amplitude: f64,
) -> ExperimentSetup {
    let l = grid.half_length();
    let x0 = RealField::from_fn(grid, |x| amplitude * (-x * x).exp()).unwrap();
    let mut setup = ExperimentSetup::new(model, noise, x0, Schedule::new(2e-3, 500, 1).unwrap());
    setup.perturbation = RealField::from_fn(grid, |x| (PI * x / l).cos()).unwrap();
    setup.delta = 1e-2;
    setup.ensemble = 200;
    setup.seed = 20_240_601;
    setup.levels = vec![1e-4, 1e-3, 1e-2];
    setup
}

fn gronwall_grid() -> (Grid1D, NoiseModel) {
    let grid = Grid1D::new(8.0, 128).unwrap();
    let noise = trig_noise(
        grid,
        0.5,
        4,
        Some(Window {
            half_width: 6.5,
            taper: 1.5,
        }),
    );
    (grid, noise)
}

fn summarize(report: &ExperimentReport) -> String {
    let gr = report.gronwall.as_ref().unwrap();
    format!(
        "C = {:.4}, pathwise margin {:.3e}, ensemble margin {:.3e}, min <z,q> {:.3e}",
        gr.constant,
        gr.pathwise
            .iter()
            .map(|p| p.margins.at_c)
            .fold(f64::INFINITY, f64::min),
        gr.ensemble
            .iter()
            .map(|e| e.margins.at_c)
            .fold(f64::INFINITY, f64::min),
        gr.min_dissipation_rate
    )
}

fn fp_gronwall() -> Outcome {
    let start = Instant::now();
    let (grid, noise) = gronwall_grid();
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, a) in [
        (
            "a = 1/2",
            DiffusionCoefficient::constant(grid, 0.5).unwrap(),
        ),
        (
            "degenerate a",
            DiffusionCoefficient::half_degenerate(grid, 0.5).unwrap(),
        ),
    ] {
        let expected: f64 = noise
            .modes()
            .iter()
            .map(|m| independent_bound(&m.field, &m.derivative).powi(2))
            .sum::<f64>()
            + 2.0 * independent_bound(&noise.drift().field, &noise.drift().derivative)
            + 0.5;
        let c = gronwall_constant_fp(&noise, &a);
        let setup = uniqueness_setup(Model::FokkerPlanck(a), grid, noise.clone(), 1.0);
        let report = uniqueness_experiment(ExperimentMode::Perturbation, &setup)
            .map_err(|e| e.to_string())?;
        let gr = report.gronwall.as_ref().unwrap();
        let ok = gr.pathwise.iter().all(|p| p.pass)
            && gr.ensemble.iter().all(|e| e.pass == Some(true))
            && gr.dissipation_pass
            && (c - expected).abs() < 1e-12;
        pass &= ok;
        lines.push(format!("{name}: {}", summarize(&report)));
    }
    let elapsed = start.elapsed();
    check(
        pass && elapsed < Duration::from_secs(300),
        format!(
            "FP Gronwall, 200 paths: {}; {:.1}s",
            lines.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

/// `sqrt(2) (max|e|^2 + max|e'|^2)^{1/2}` evaluated directly from node values.
fn independent_bound(e: &RealField, de: &RealField) -> f64 {
    let a = e.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let b = de.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (2.0 * (a * a + b * b)).sqrt()
}

fn pme_gronwall() -> Outcome {
    let start = Instant::now();
    let (grid, noise) = gronwall_grid();
    let mut lines = Vec::new();
    let mut pass = true;
    for spec in [
        PsiSpec::Arctan {
            amplitude: 1.0,
            rate: 1.0,
        },
        PsiSpec::SaturatedPower { m: 2.0, k: 5.0 },
    ] {
        let psi = Nonlinearity::from_spec(spec).unwrap();
        let expected: f64 = noise
            .modes()
            .iter()
            .map(|m| independent_bound(&m.field, &m.derivative).powi(2))
            .sum::<f64>()
            + 2.0 * independent_bound(&noise.drift().field, &noise.drift().derivative)
            + psi.lipschitz();
        let c = gronwall_constant_pme(&noise, &psi);
        let name = psi.name().to_string();
        let setup = uniqueness_setup(Model::PorousMedia(psi), grid, noise.clone(), 2.0);
        let report = uniqueness_experiment(ExperimentMode::Perturbation, &setup)
            .map_err(|e| e.to_string())?;
        let gr = report.gronwall.as_ref().unwrap();
        let chain = gr.bound_chain.as_ref().is_some_and(|b| b.pass);
        let ok = gr.pathwise.iter().all(|p| p.pass)
            && gr.ensemble.iter().all(|e| e.pass == Some(true))
            && gr.min_dissipation_rate >= -1e-10
            && chain
            && (c - expected).abs() < 1e-12;
        pass &= ok;
        lines.push(format!(
            "{name}: {}, bound chain {}",
            summarize(&report),
            if chain { "holds" } else { "violated" }
        ));
    }
    let elapsed = start.elapsed();
    check(
        pass,
        format!(
            "PME Gronwall, 200 paths: {}; {:.1}s",
            lines.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

fn zero_delta_exactness() -> Outcome {
    let (grid, noise) = gronwall_grid();
    let mut all_zero = true;
    for model in [
        Model::FokkerPlanck(DiffusionCoefficient::half_degenerate(grid, 0.5).unwrap()),
        Model::PorousMedia(Nonlinearity::arctan()),
    ] {
        let mut setup = uniqueness_setup(model, grid, noise.clone(), 1.0);
        setup.delta = 0.0;
        let incs = BrownianIncrements::sample(4, 500, 2e-3, 99).unwrap();
        let out = run_member(&setup, &incs).map_err(|e| e.to_string())?;
        all_zero &= out.ledger.g.iter().all(|&g| g == 0.0);
        all_zero &= out.traj1 == out.traj2;
    }
    check(
        all_zero,
        format!("delta = 0 gives g identically 0 for both equations: {all_zero}"),
    )
}

fn mollifier_ladder() -> Outcome {
    let l = 8.0;
    let grid = Grid1D::new(l, 4096).unwrap();
    let noise = trig_noise(
        grid,
        0.5,
        4,
        Some(Window {
            half_width: 6.4,
            taper: 2.0,
        }),
    );
    let options = SolverOptions {
        scheme: Scheme::SemiImplicit,
        dealias: false,
    };
    let mut lines = Vec::new();
    let mut pass = true;
    for model in [
        Model::FokkerPlanck(DiffusionCoefficient::constant(grid, 0.5).unwrap()),
        Model::FokkerPlanck(DiffusionCoefficient::half_degenerate(grid, 0.5).unwrap()),
        Model::PorousMedia(Nonlinearity::arctan()),
    ] {
        let x0 = RealField::from_fn(grid, |x| (-8.0 * x * x).exp()).unwrap();
        let mut setup = ExperimentSetup::new(
            model,
            noise.clone(),
            x0,
            Schedule::new(1e-3, 100, 5).unwrap(),
        );
        setup.options = options;
        setup.perturbation = RealField::from_fn(grid, |x| (PI * x / l).cos()).unwrap();
        setup.delta = 1e-2;
        let incs = BrownianIncrements::sample(4, 100, 1e-3, 5).unwrap();
        let out = run_member(&setup, &incs).map_err(|e| e.to_string())?;
        let r = mollified_energy_path(
            &out.traj1,
            &out.traj2,
            &setup.model,
            &noise,
            &incs,
            &DEFAULT_LADDER,
        )
        .map_err(|e| e.to_string())?;
        let monotone = r.quantities.iter().all(|q| q.nonincreasing);
        let rate = r.min_rate.unwrap_or(f64::NAN);
        pass &= monotone && rate >= 1.0;
        lines.push(format!(
            "{}: nonincreasing {monotone}, min rate {rate:.2}",
            setup.model.describe()
        ));
    }
    check(
        pass,
        format!("epsilon ladder {:?}: {}", DEFAULT_LADDER, lines.join("; ")),
    )
}

fn conservation() -> Outcome {
    let grid = Grid1D::new(8.0, 128).unwrap();
    let noise = NoiseModel::off(grid);
    let n_steps = 10_000;
    let dt = 2e-3;
    let incs = BrownianIncrements::sample(0, n_steps, dt, 0).unwrap();
    let schedule = Schedule::new(dt, n_steps, 1000).unwrap();
    let x0 = RealField::from_fn(grid, |x| {
        (-(x - 0.5) * (x - 0.5)).exp() + 0.2 * (-(x + 2.0).powi(2)).exp()
    })
    .unwrap();
    let opts = SolverOptions::default();
    let runs = [
        solve_fp(
            &x0,
            &DiffusionCoefficient::constant(grid, 0.5).unwrap(),
            &noise,
            &incs,
            &schedule,
            opts,
        ),
        solve_fp(
            &x0,
            &DiffusionCoefficient::half_degenerate(grid, 0.5).unwrap(),
            &noise,
            &incs,
            &schedule,
            opts,
        ),
        solve_pme(&x0, &Nonlinearity::arctan(), &noise, &incs, &schedule, opts),
        solve_pme(
            &x0,
            &Nonlinearity::from_spec(PsiSpec::SaturatedPower { m: 2.0, k: 5.0 }).unwrap(),
            &noise,
            &incs,
            &schedule,
            opts,
        ),
    ];
    let mass0: f64 = x0.values().iter().sum::<f64>() * grid.dx();
    let mut worst = 0.0_f64;
    for run in runs {
        let traj = run.map_err(|e| e.to_string())?;
        for k in 0..traj.len() {
            let m: f64 = traj.values(k).iter().sum::<f64>() * grid.dx();
            worst = worst.max((m - mass0).abs() / mass0.abs());
        }
    }
    check(
        worst < 1e-10,
        format!("mass drift over 1e4 steps, both solvers: {worst:.3e} relative (< 1e-10)"),
    )
}

fn equivalence() -> Outcome {
    let (grid, noise) = gronwall_grid();
    let incs = BrownianIncrements::sample(4, 500, 2e-3, 4242).unwrap();
    let schedule = Schedule::new(2e-3, 500, 10).unwrap();
    let x0 = RealField::from_fn(grid, |x| (-x * x).exp()).unwrap();
    let mut worst = 0.0_f64;
    for opts in [
        SolverOptions::default(),
        SolverOptions {
            scheme: Scheme::SemiImplicit,
            dealias: false,
        },
    ] {
        let fp = solve_fp(
            &x0,
            &DiffusionCoefficient::constant(grid, 0.5).unwrap(),
            &noise,
            &incs,
            &schedule,
            opts,
        )
        .map_err(|e| e.to_string())?;
        let pme = solve_pme(
            &x0,
            &Nonlinearity::identity(),
            &noise,
            &incs,
            &schedule,
            opts,
        )
        .map_err(|e| e.to_string())?;
        for k in 0..fp.len() {
            for (a, b) in fp.values(k).iter().zip(pme.values(k)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("PME(psi = id) vs FP(a = 1/2) on one path: max snapshot difference {worst:.3e} (<= 1e-12)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("heat-equation oracle", heat_oracle),
        ("pointwise GBM oracle", gbm_strong_order),
        ("Ito isometry", ito_isometry),
        ("multiplier bound", multiplier_bound),
        ("FP Gronwall/uniqueness", fp_gronwall),
        ("PME Gronwall/uniqueness", pme_gronwall),
        ("delta = 0 exactness", zero_delta_exactness),
        ("mollifier epsilon ladder", mollifier_ladder),
        ("mass conservation", conservation),
        ("PME/FP equivalence", equivalence),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] criterion {} ({name}): {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] criterion {} ({name}): {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
