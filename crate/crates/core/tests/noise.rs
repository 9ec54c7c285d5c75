use proptest::prelude::*;
use spde_core::noise::{
    build_noise_basis, ito_integral, multiplier_norm_empirical, multiplier_probes, noise_increment,
    BrownianIncrements, NoiseFamily, NoiseModel, NoiseSpec, TailKind, Window,
};
use spde_core::spectral::{Grid1D, RealField};
use spde_core::Trajectory;
use std::f64::consts::PI;

fn family_strategy() -> impl Strategy<Value = (NoiseSpec, f64)> {
    let trig =
        (0.1f64..2.0, 1.6f64..3.0, 1usize..6, any::<bool>()).prop_map(|(c, p, n, windowed)| {
            let spec = NoiseSpec {
                family: NoiseFamily::Trig { c, p },
                n_modes: n,
                drift: 0.3,
                window: windowed.then_some(Window {
                    half_width: 3.0,
                    taper: 1.0,
                }),
            };
            (spec, 4.0)
        });
    let gaussian =
        (0.1f64..2.0, 0.6f64..2.0, 1usize..6, 0.2f64..0.5).prop_map(|(c, p, n, width)| {
            let spec = NoiseSpec {
                family: NoiseFamily::Gaussian {
                    c,
                    p,
                    width,
                    spread: 1.0,
                },
                n_modes: n,
                drift: 0.0,
                window: None,
            };
            (spec, 4.0)
        });
    prop_oneof![trig, gaussian]
}

fn random_path(grid: Grid1D, n_steps: usize, values: &[f64]) -> Trajectory {
    let n = grid.len();
    let snaps = (0..=n_steps)
        .map(|k| values[k * n..(k + 1) * n].to_vec())
        .collect();
    Trajectory::from_snapshots(grid, 0.01, 1, n_steps, snaps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn empirical_multiplier_norm_never_exceeds_the_bound((spec, l) in family_strategy(), seed in any::<u64>()) {
        let grid = Grid1D::new(l, 128).unwrap();
        let model = build_noise_basis(&spec, &grid).unwrap();
        let probes = multiplier_probes(&grid, 12, seed);
        for mode in model.modes().iter().chain(std::iter::once(model.drift())) {
            let emp = multiplier_norm_empirical(&mode.field, &probes).unwrap();
            prop_assert!(emp.value() <= mode.multiplier_bound * (1.0 + 1e-8) + 1e-300);
        }
    }

    #[test]
    fn ito_integral_is_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        z1 in prop::collection::vec(-1.0f64..1.0, 32 * 6),
        z2 in prop::collection::vec(-1.0f64..1.0, 32 * 6),
        seed in any::<u64>(),
    ) {
        let grid = Grid1D::new(2.0, 32).unwrap();
        let spec = NoiseSpec { family: NoiseFamily::Trig { c: 1.0, p: 2.0 }, n_modes: 3, drift: 0.7, window: None };
        let noise = build_noise_basis(&spec, &grid).unwrap();
        let incs = BrownianIncrements::sample(3, 5, 0.01, seed).unwrap();
        let combo: Vec<f64> = z1.iter().zip(&z2).map(|(u, v)| a * u + b * v).collect();
        let i1 = ito_integral(&random_path(grid, 5, &z1), &noise, &incs).unwrap().total();
        let i2 = ito_integral(&random_path(grid, 5, &z2), &noise, &incs).unwrap().total();
        let ic = ito_integral(&random_path(grid, 5, &combo), &noise, &incs).unwrap().total();
        for k in 0..ic.len() {
            let expected = a * i1[k] + b * i2[k];
            prop_assert!((ic[k] - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn noise_increment_is_linear_and_vanishes_at_zero(
        z in prop::collection::vec(-1.0f64..1.0, 32),
        a in -3.0f64..3.0,
        step in 0usize..5,
    ) {
        let grid = Grid1D::new(2.0, 32).unwrap();
        let spec = NoiseSpec { family: NoiseFamily::Trig { c: 1.0, p: 2.0 }, n_modes: 2, drift: 0.5, window: None };
        let noise = build_noise_basis(&spec, &grid).unwrap();
        let incs = BrownianIncrements::sample(2, 5, 0.01, 3).unwrap();
        let z = RealField::new(grid, z).unwrap();
        let base = noise_increment(&z, &noise, &incs, step).unwrap();
        let scaled = noise_increment(&z.scaled(a), &noise, &incs, step).unwrap();
        for (s, v) in scaled.values().iter().zip(base.values()) {
            prop_assert!((s - a * v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        let zero = noise_increment(&RealField::zeros(grid), &noise, &incs, step).unwrap();
        prop_assert!(zero.values().iter().all(|&v| v == 0.0));
    }
}

/// `sum_{i > n} c^2 (i^{-2p} + (pi/L)^2 i^{2-2p})` by direct summation to 10^6 plus an integral remainder.
fn trig_tail_oracle(c: f64, p: f64, l: f64, n: usize) -> f64 {
    let q2 = (PI / l).powi(2);
    let m = 1_000_000usize;
    let direct: f64 = (n + 1..=m)
        .rev()
        .map(|i| {
            let x = i as f64;
            x.powf(-2.0 * p) + q2 * x.powf(2.0 - 2.0 * p)
        })
        .sum();
    let mf = m as f64 + 0.5;
    let remainder =
        mf.powf(1.0 - 2.0 * p) / (2.0 * p - 1.0) + q2 * mf.powf(3.0 - 2.0 * p) / (2.0 * p - 3.0);
    c * c * (direct + remainder)
}

#[test]
fn trig_partial_sums_are_monotone_and_match_the_analytic_tail() {
    let (c, p) = (0.8, 2.0);
    let grid = Grid1D::new(PI, 4096).unwrap();
    let build = |n| {
        build_noise_basis(
            &NoiseSpec {
                family: NoiseFamily::Trig { c, p },
                n_modes: n,
                drift: 0.0,
                window: None,
            },
            &grid,
        )
        .unwrap()
    };
    let sums: Vec<f64> = (1..=40).map(|n| build(n).partial_sum()).collect();
    assert!(sums.windows(2).all(|w| w[1] >= w[0]));

    for n in [32, 48] {
        let tail = build(n).tail().unwrap();
        assert_eq!(tail.kind, TailKind::Exact);
        let oracle = trig_tail_oracle(c, p, PI, n);
        assert!(
            (tail.value - oracle).abs() <= 1e-6 * oracle,
            "N = {n}: {} vs {oracle}",
            tail.value
        );
    }
    let (s32, s128) = (build(32), build(128));
    let grown = s128.partial_sum() - s32.partial_sum();
    let predicted = s32.tail().unwrap().value - s128.tail().unwrap().value;
    assert!(
        (grown - predicted).abs() <= 0.01 * predicted,
        "{grown} vs {predicted}"
    );
}

#[test]
fn brownian_increment_variance_is_dt() {
    let dt = 1e-3;
    let n = 100_000;
    let incs = BrownianIncrements::sample(3, n, dt, 2024).unwrap();
    for mode in 1..=3 {
        let row = incs.row(mode);
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // Var of the sample variance of Gaussians is 2 sigma^4 / (n - 1).
        let se = (2.0 / (n as f64 - 1.0)).sqrt() * dt;
        assert!(
            (var - dt).abs() <= 5.0 * se,
            "mode {mode}: {var} vs {dt} (se {se})"
        );
    }
}

#[test]
fn stochastic_integral_of_a_deterministic_integrand_has_mean_zero() {
    let grid = Grid1D::new(3.0, 64).unwrap();
    let spec = NoiseSpec {
        family: NoiseFamily::Trig { c: 1.0, p: 2.0 },
        n_modes: 3,
        drift: 0.0,
        window: None,
    };
    let noise = build_noise_basis(&spec, &grid).unwrap();
    let n_steps = 40;
    let nodes = grid.nodes();
    let snaps = (0..=n_steps)
        .map(|k| {
            nodes
                .iter()
                .map(|&x| (1.0 + 0.02 * k as f64) * (-x * x).exp())
                .collect()
        })
        .collect();
    let z = Trajectory::from_snapshots(grid, 0.025, 1, n_steps, snaps).unwrap();
    let seeds = 4000;
    let samples: Vec<Vec<f64>> = (0..seeds)
        .map(|s| {
            let incs = BrownianIncrements::sample(3, n_steps, 0.025, 10_000 + s).unwrap();
            ito_integral(&z, &noise, &incs).unwrap().martingale
        })
        .collect();
    for k in [n_steps / 2, n_steps] {
        let xs: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!(mean.abs() <= 3.0 * se, "t index {k}: mean {mean}, se {se}");
    }
}

#[test]
fn switched_off_noise_is_recognised() {
    let grid = Grid1D::new(2.0, 16).unwrap();
    let spec = NoiseSpec {
        family: NoiseFamily::Trig { c: 1.0, p: 2.0 },
        n_modes: 0,
        drift: 0.0,
        window: None,
    };
    assert!(build_noise_basis(&spec, &grid).unwrap().is_off());
    assert!(NoiseModel::off(grid).is_off());
}
