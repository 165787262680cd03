use pcwqed::decay::*;

#[test]
fn single_atom_curve_matches_position_average() {
    // I_1 is the Bloch average of emission ∝ c times excitation ∝ c,
    // with c = cos²(πu).
    let (g, gp) = (1.4, 1.0);
    let m = 100_000;
    for k in 0..=10 {
        let t = 0.5 * k as f64;
        let f = |u: f64| {
            let c = (std::f64::consts::PI * u).cos().powi(2);
            c * c * (-(g * c + gp) * t).exp()
        };
        let trap: f64 = (0..=m).map(|i| if i == 0 || i == m { 0.5 } else { 1.0 } * f(i as f64 / m as f64)).sum::<f64>() / m as f64;
        let v = intensity_n_dimensionless(1, t, g, gp).unwrap();
        assert!((v / (0.25 * g * g * trap) - 1.0).abs() < 1e-4, "t={t}");
    }
}

#[test]
fn apparent_single_atom_rate_is_eighty_percent() {
    let c = DecayCurve::for_atoms(1, &time_grid(1.0, 6.0, 1201), 1.4, 1.0).unwrap();
    let (rate, window) = fit_with_default_window(&c).unwrap();
    assert!(((rate - 1.0) / 1.4 - 0.81).abs() < 0.03);
    assert!(window.0 < window.1);
}

#[test]
fn rate_map_is_monotone_in_atom_number() {
    let rates: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 3.0, 5.0].iter().map(|&n| total_rate_for(n, 1.4).unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");
}

#[test]
fn mean_number_round_trips_through_the_rate_map() {
    // Hold-time series built so that the rate at the probe time is the
    // model rate for N̄ = 3.
    let target = total_rate_for(3.0, 1.4).unwrap();
    let asym = total_rate_for(0.0, 1.4).unwrap();
    let tau = 16.0;
    let amp = (target - asym) / (-PROBE_HOLD_MS / tau).exp();
    let pts: Vec<(f64, f64)> = (0..12).map(|k| {
        let t = 4.0 + 8.0 * k as f64;
        (t, amp * (-t / tau).exp() + asym)
    }).collect();
    let fit = fit_nbar(&pts, 1.4).unwrap();
    assert!((fit.n_bar - 3.0).abs() < 1e-4, "{}", fit.n_bar);
    assert!((fit.tau_sr_ms - tau).abs() < 1e-4);
}

#[test]
fn too_few_hold_points_are_rejected() {
    let pts: Vec<(f64, f64)> = (0..4).map(|k| (k as f64, 3.0 - 0.1 * k as f64)).collect();
    assert!(fit_nbar(&pts, 1.4).is_err());
}
