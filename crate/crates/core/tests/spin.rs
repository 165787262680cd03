use nalgebra::DMatrix;
use num_complex::Complex64;
use pcwqed::spin::*;
use pcwqed::units::{gamma0_to_mhz, mhz_to_gamma0};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let z = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0));
            m[(i, j)] = z;
            m[(j, i)] = z;
        }
    }
    m
}

/// z^n / det(z I + g) by LU.
fn determinant_ratio(z: Complex64, g: &DMatrix<Complex64>) -> Complex64 {
    let n = g.nrows();
    let shifted = g + DMatrix::from_diagonal_element(n, n, z);
    z.powi(n as i32) / shifted.lu().determinant()
}

#[test]
fn eigenvalue_product_matches_determinant_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rates = CouplingRates::new(1.0, 0.0, 2.0, 12.5).unwrap();
    for k in 0..300 {
        let n = 1 + k % 6;
        let m = CouplingMatrix::from_entries(random_symmetric(&mut rng, n)).unwrap();
        let d = rng.random_range(-40.0..40.0);
        let z = rates.shifted_detuning(d);
        let lhs = transmission_exact(d, &rates, &m);
        let rhs = determinant_ratio(z, m.entries());
        assert!((lhs - rhs).norm() <= 1e-9 * rhs.norm(), "n={n}: {lhs} vs {rhs}");
    }
}

#[test]
fn cubic_characteristic_polynomial_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let g = random_symmetric(&mut rng, 3);
        let m = CouplingMatrix::from_entries(g.clone()).unwrap();
        // det(g − λI) expanded by cofactors.
        let det3 = |lam: Complex64| {
            let a = |i: usize, j: usize| if i == j { g[(i, j)] - lam } else { g[(i, j)] };
            a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
        };
        let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max).powi(3);
        for &lam in m.eigenvalues() {
            assert!(det3(lam).norm() < 1e-9 * scale, "{lam}");
        }
    }
}

#[test]
fn separable_matrix_has_one_bright_eigenvalue() {
    let rates = CouplingRates::new(1.4, -0.8, 2.0, 12.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=6 {
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-6000.0..6000.0)).collect();
        let cfg = AtomConfiguration::new(xs, 0.0, 370.0).unwrap();
        let m = build_coupling_matrix(&rates, &cfg).unwrap();
        let ev = m.eigenvalues();
        let bright: f64 = cfg.bloch_amplitudes().map(|u| u * u).sum();
        assert!((ev[0] - rates.peak_coupling() * bright).norm() < 1e-12 * ev[0].norm().max(1.0));
        assert!(ev[1..].iter().all(|l| l.norm() < 1e-12 * ev[0].norm()));
        for k in 0..=400 {
            let d = -100.0 + 0.5 * k as f64;
            let diff = (transmission_exact(d, &rates, &m) - transmission_bright(d, &rates, &cfg)).norm();
            assert!(diff < 1e-12, "n={n} d={d}: {diff}");
        }
    }
}

#[test]
fn coherences_match_independent_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rates = CouplingRates::new(1.0, 0.3, 1.5, 0.0).unwrap();
    let g = random_symmetric(&mut rng, 3);
    let m = CouplingMatrix::from_entries(g.clone()).unwrap();
    let drive = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5), Complex64::new(-0.3, 0.2)];
    let sigma = solve_coherences(&m, 7.0, &rates, &drive).unwrap();
    // Gauss-Jordan on the augmented system (z I + g) σ = −Ω.
    let z = rates.shifted_detuning(7.0);
    let mut aug: Vec<Vec<Complex64>> =
        (0..3).map(|i| (0..4).map(|j| if j == 3 { -drive[i] } else if i == j { g[(i, j)] + z } else { g[(i, j)] }).collect()).collect();
    for c in 0..3 {
        let p = (c..3).max_by(|&a, &b| aug[a][c].norm().total_cmp(&aug[b][c].norm())).unwrap();
        aug.swap(c, p);
        let piv = aug[c][c];
        for v in aug[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..3 {
            if r != c {
                let f = aug[r][c];
                for j in 0..4 {
                    let sub = f * aug[c][j];
                    aug[r][j] -= sub;
                }
            }
        }
    }
    for i in 0..3 {
        assert!((sigma[i] - aug[i][3]).norm() < 1e-10 * aug[i][3].norm().max(1.0));
    }
}

#[test]
fn single_atom_resonant_transmission() {
    let rates = CouplingRates::new(1.5, 0.0, 1.0, 0.0).unwrap();
    let cfg = AtomConfiguration::new(vec![0.0], 0.0, 370.0).unwrap();
    let m = build_coupling_matrix(&rates, &cfg).unwrap();
    assert!((transmission_exact(0.0, &rates, &m).norm_sqr() - 0.16).abs() < 1e-12);
}

#[test]
fn two_atom_off_diagonal_coupling() {
    let rates = CouplingRates::new(1.0, -0.5, 1.0, 0.0).unwrap();
    let a = 370.0;
    let cfg = AtomConfiguration::new(vec![0.0, a / 4.0], 0.1 / a, a).unwrap();
    let m = build_coupling_matrix(&rates, &cfg).unwrap();
    let expect = rates.peak_coupling() * 0.689_65;
    assert!((m.entries()[(0, 1)] - expect).norm() < 1e-5);
}

#[test]
fn bright_mode_error_vanishes_with_attenuation() {
    // Dark eigenvalues scale with κ_x Δx_A, and so does the line distortion.
    let spread = 6000.0;
    let rates = CouplingRates::new(0.2, -0.5, 2.0, 12.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let grid: Vec<f64> = (0..=200).map(|k| -80.0 + 0.6 * k as f64).collect();
    let deviation = |xs: &[f64], kdx: f64| {
        let cfg = AtomConfiguration::new(xs.to_vec(), kdx / spread, 370.0).unwrap();
        let m = build_coupling_matrix(&rates, &cfg).unwrap();
        grid.iter()
            .map(|&d| (transmission_exact(d, &rates, &m).norm_sqr() - transmission_bright(d, &rates, &cfg).norm_sqr()).abs())
            .fold(0.0, f64::max)
    };
    for _ in 0..20 {
        let xs: Vec<f64> = (0..3).map(|_| rng.random_range(-spread..spread)).collect();
        let (small, large) = (deviation(&xs, 0.02), deviation(&xs, 0.2));
        assert!(small < 0.2 * large + 1e-9, "{small} vs {large}");
        assert!(deviation(&xs, 0.0) < 1e-12);
    }
}

#[test]
fn lorentzian_without_exchange_and_fano_with_it() {
    let cfg = AtomConfiguration::new(vec![0.0, 100.0, 1200.0], 0.0, 370.0).unwrap();
    let sym = CouplingRates::new(1.4, 0.0, 2.0, 12.5).unwrap();
    for k in 1..50 {
        let d = 0.7 * k as f64;
        let plus = transmission_bright(-12.5 + d, &sym, &cfg).norm_sqr();
        let minus = transmission_bright(-12.5 - d, &sym, &cfg).norm_sqr();
        assert!((plus - minus).abs() < 1e-12);
    }
    let fano = CouplingRates::new(0.2, -1.5, 2.0, 12.5).unwrap();
    let s: f64 = cfg.bloch_amplitudes().map(|u| u * u).sum();
    let (b, g, big_g) = (fano.j_1d * s, 1.0, 0.5 * (2.0 + 0.2 * s));
    let p = b * b + big_g * big_g - g * g;
    let dip = (-p + (p * p + 4.0 * b * b * g * g).sqrt()) / (2.0 * b);
    let dip_mhz = gamma0_to_mhz(dip) - 12.5;
    let f = |d: f64| transmission_bright(d, &fano, &cfg).norm_sqr();
    assert!(f(dip_mhz) < f(dip_mhz + 0.01) && f(dip_mhz) < f(dip_mhz - 0.01));
    // The transmission peak sits above the pole at −ΣJ, on the far side.
    let pole_mhz = gamma0_to_mhz(-b) - 12.5;
    assert!(f(pole_mhz) > 1.0 && dip_mhz < pole_mhz);
    assert!((mhz_to_gamma0(pole_mhz + 12.5) + b).abs() < 1e-12);
}

#[test]
fn cavity_comparator_ratio_is_exact() {
    for k in 1..200 {
        let dc = -400.0 + 4.01 * k as f64;
        let q = cqed_rates(dc, 60.0, 1.0).unwrap();
        assert!((q.gamma_1d / q.j_1d - 60.0 / dc).abs() <= 1e-12 * (60.0 / dc).abs());
        let flipped = cqed_rates(-dc, 60.0, 1.0).unwrap();
        assert_eq!(flipped.j_1d, -q.j_1d);
        assert_eq!(flipped.gamma_1d, q.gamma_1d);
    }
}
