use pcwqed::ensemble::*;
use pcwqed::spectrum::linear_grid;
use pcwqed::spin::CouplingRates;

fn rates(j: f64) -> CouplingRates {
    CouplingRates::new(1.4, j, 2.0, 12.5).unwrap()
}

#[test]
fn quadrature_and_monte_carlo_agree() {
    let grid = linear_grid(-60.0, 40.0, 41);
    let mc = PositionMethod::MonteCarlo { samples: 100_000, seed: Some(2024) };
    let quad = PositionMethod::Quadrature { bins: DEFAULT_QUADRATURE_BINS };
    for n in 1..=6 {
        for j in [0.0, -1.0] {
            let a = average_positions(n, &rates(j), &CouplingModel::BrightMode, &grid, &quad).unwrap();
            let b = average_positions(n, &rates(j), &CouplingModel::BrightMode, &grid, &mc).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-3, "n={n} j={j}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn monte_carlo_is_bit_reproducible() {
    let grid = linear_grid(-30.0, 10.0, 9);
    let spec = EnsembleSpec::new(2.5, PositionMethod::MonteCarlo { samples: 4000, seed: Some(7) }).unwrap();
    let model = CouplingModel::Exact { kappa_x: 3e-5, spread_nm: 6000.0, a_nm: 370.0 };
    let a = average_poisson(&spec, &rates(-0.5), &model, &grid).unwrap();
    let b = average_poisson(&spec, &rates(-0.5), &model, &grid).unwrap();
    assert_eq!(a, b);
    let other = EnsembleSpec::new(2.5, PositionMethod::MonteCarlo { samples: 4000, seed: Some(8) }).unwrap();
    assert_ne!(a, average_poisson(&other, &rates(-0.5), &model, &grid).unwrap());
}

#[test]
fn exact_model_rejects_quadrature() {
    let model = CouplingModel::Exact { kappa_x: 3e-5, spread_nm: 6000.0, a_nm: 370.0 };
    let quad = PositionMethod::Quadrature { bins: 100 };
    assert!(average_positions(2, &rates(0.0), &model, &[0.0, 1.0], &quad).is_err());
}

#[test]
fn empty_ensemble_is_flat() {
    let grid = linear_grid(-30.0, 10.0, 9);
    let spec = EnsembleSpec::new(0.0, PositionMethod::default()).unwrap();
    let s = average_poisson(&spec, &rates(-1.0), &CouplingModel::BrightMode, &grid).unwrap();
    assert!(s.values().iter().all(|&v| v == 1.0));
}

#[test]
fn truncation_error_is_bounded_by_the_discarded_mass() {
    let grid = linear_grid(-40.0, 20.0, 13);
    let quad = PositionMethod::default();
    let spec = EnsembleSpec::new(3.0, quad).unwrap();
    let r = rates(-0.5);
    let truncated = average_poisson(&spec, &r, &CouplingModel::BrightMode, &grid).unwrap();
    // Untruncated reference summed far past n_max with raw Poisson weights.
    let n_far = spec.n_max() + 15;
    let mut reference = vec![0.0; grid.len()];
    for n in 0..=n_far {
        let line = average_positions(n, &r, &CouplingModel::BrightMode, &grid, &quad).unwrap();
        for (acc, v) in reference.iter_mut().zip(line.values()) {
            *acc += poisson_pmf(3.0, n) * v;
        }
    }
    let discarded: f64 = (spec.n_max() + 1..=n_far).map(|n| poisson_pmf(3.0, n)).sum();
    assert!(discarded < POISSON_TAIL);
    for (a, b) in truncated.values().iter().zip(&reference) {
        // Renormalisation moves each value by at most the discarded mass per
        // unit of integrand, which here is at most 2.
        assert!((a - b).abs() <= 2.0 * discarded + 1e-12, "{a} vs {b}");
    }
}

fn poisson_pmf(mean: f64, n: usize) -> f64 {
    (n as f64 * mean.ln() - mean - (1..=n).map(|k| (k as f64).ln()).sum::<f64>()).exp()
}

#[test]
fn tm_optical_density_line() {
    let od = optical_density(3.0, 0.045, 2.0);
    assert!((od - 0.135).abs() < 1e-15);
    let width = pcwqed::units::gamma0_to_mhz(0.045 + 2.0);
    let on = od_transmission(-12.5, od, width, 12.5).unwrap();
    assert!((on - (-0.135f64).exp()).abs() < 1e-12);
    assert!((od_transmission(1e6, od, width, 12.5).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn bloch_averaging_scales_the_collective_rate() {
    let spec = EnsembleSpec::new(3.0, PositionMethod::default()).unwrap();
    let eta = effective_ratio(&rates(0.0), &spec).unwrap();
    assert!((0.3..0.6).contains(&eta), "{eta}");
    assert!((effective_ratio_pinned(&rates(0.0), 3.0).unwrap() - 1.0).abs() < 1e-6);
}
