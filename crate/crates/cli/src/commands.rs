//! One function per subcommand. Each returns its tables, plots and text
//! reports without touching the file system.

use std::fmt::Write as _;

use pcwqed::decay::{fit_nbar, fit_with_default_window, time_grid, DecayCurve, NbarFit};
use pcwqed::ensemble::average_poisson;
use pcwqed::fit::{fit_te_spectrum, fit_tm_spectrum, FitReport, TeModel, TmModel};
use pcwqed::photonic::{bloch_analysis, field_profile, find_band_edges, first_resonance, GreensModel, LayerStack};
use pcwqed::spectrum::{linear_grid, Polarization, Spectrum};
use pcwqed::spin::CouplingRates;

use crate::config::{Probe, RateSource, RunConfig};
use crate::error::CliError;
use crate::output::{spectrum_table, Cell, Plot, Table};

/// Everything a subcommand produces.
#[derive(Debug, Default)]
pub struct Output {
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// (file name, contents).
    pub reports: Vec<(String, String)>,
    /// One or two lines for the terminal.
    pub summary: String,
    /// Set when results were produced but should still fail the run.
    pub failure: Option<CliError>,
}

impl Output {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn report(&self, name: &str) -> Option<&str> {
        self.reports.iter().find(|r| r.0 == name).map(|r| r.1.as_str())
    }
}

/// Stack, its lower band edge and the Green's model calibrated at the first
/// resonance below that edge.
pub struct Cavity {
    pub stack: LayerStack,
    pub nu_be: f64,
    pub model: GreensModel,
}

impl Cavity {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        let stack = cfg.stack.build()?;
        let nu_be = band_edge(cfg, &stack)?;
        let x = stack.central_antinode();
        let model = GreensModel::calibrate(stack.clone(), x, nu_be, cfg.rates.gamma_ref_gamma0)?;
        Ok(Cavity { stack, nu_be, model })
    }

    pub fn nu1(&self) -> f64 {
        self.model.nu_ref()
    }

    /// ν_BE − ν₁ in GHz.
    pub fn d1_ghz(&self) -> f64 {
        (self.nu_be - self.nu1()) * 1e3
    }
}

fn band_edge(cfg: &RunConfig, stack: &LayerStack) -> Result<f64, CliError> {
    Ok(find_band_edges(stack, cfg.stack.edge_search_min_thz, cfg.stack.edge_search_max_thz)?.0)
}

/// Rates and κ_x used by the spectrum commands.
pub fn resolve_rates(cfg: &RunConfig) -> Result<(CouplingRates, f64), CliError> {
    match cfg.rates.source {
        RateSource::Manual => Ok((cfg.manual_rates()?, cfg.ensemble.kappa_x_per_nm.unwrap_or(0.0))),
        RateSource::Greens => {
            let cav = Cavity::from_config(cfg)?;
            let nu = cfg.rates.delta_be_ghz.map_or(cav.nu1(), |d| cav.nu_be + 1e-3 * d);
            let (g, j) = cav.model.rates(nu)?;
            let rates = CouplingRates::new(g, j, cfg.rates.gamma_prime_gamma0, cfg.rates.delta_0_mhz)?;
            let kappa = match cfg.ensemble.kappa_x_per_nm {
                Some(k) => k,
                None => bloch_analysis(&cav.stack, nu)?.kappa().unwrap_or(0.0),
            };
            Ok((rates, kappa))
        }
    }
}

pub fn cmd_bands(cfg: &RunConfig) -> Result<Output, CliError> {
    let stack = cfg.stack.build()?;
    let b = &cfg.bands;
    let mut t = Table::new("bands", &["nu_THz", "delta_k_per_nm", "kappa_per_nm", "in_gap"]);
    let mut prev: Option<(f64, bool)> = None;
    let mut edges = Vec::new();
    for nu in linear_grid(b.nu_min_thz, b.nu_max_thz, b.points) {
        let p = bloch_analysis(&stack, nu)?;
        t.push(vec![nu.into(), p.delta_k().into(), p.kappa().into(), p.in_gap.into()]);
        if let Some((lo, was)) = prev {
            if was != p.in_gap {
                edges.push((refine_edge(&stack, lo, nu, was)?, p.in_gap));
            }
        }
        prev = Some((nu, p.in_gap));
    }
    let mut report = String::new();
    let _ = writeln!(report, "# band edges from bisection between sweep points, THz");
    for (nu, entering) in &edges {
        let _ = writeln!(report, "{} = {nu:.6}", if *entering { "gap_start_THz" } else { "gap_end_THz" });
    }
    let gap_rows = t.rows.iter().filter(|r| r[3] == Cell::Flag(true)).count();
    let summary = match edges.first() {
        Some((nu, _)) => format!("{} points, {gap_rows} in a gap; first edge at {nu:.6} THz", t.rows.len()),
        None => format!("{} points, no band gap in range", t.rows.len()),
    };
    let plot = Plot::new("bands", "Bloch wave vector near the band edge", &t, "nu_THz", &["delta_k_per_nm", "kappa_per_nm"]);
    Ok(Output { tables: vec![t], plots: vec![plot], reports: vec![("bands_report.txt".into(), report)], summary, failure: None })
}

fn refine_edge(stack: &LayerStack, mut lo: f64, mut hi: f64, lo_in_gap: bool) -> Result<f64, CliError> {
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if bloch_analysis(stack, mid)?.in_gap == lo_in_gap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn cmd_fields(cfg: &RunConfig) -> Result<Output, CliError> {
    let stack = cfg.stack.build()?;
    let nu = match cfg.fields.nu_thz {
        Some(nu) => nu,
        None => first_resonance(&stack, band_edge(cfg, &stack)?)?,
    };
    let prof = field_profile(&stack, nu, cfg.fields.samples_per_layer)?;
    let mut t = Table::new("fields", &["x_nm", "intensity_rel"]);
    for &(x, v) in &prof.points {
        t.push(vec![x.into(), v.into()]);
    }
    let mut cells = Table::new("field_cells", &["x_nm", "cell_peak_rel"]);
    for &(x, v) in prof.cell_peaks() {
        cells.push(vec![x.into(), v.into()]);
    }
    let peak = prof.cell_peaks().iter().map(|p| p.1).fold(0.0, f64::max);
    let bp = bloch_analysis(&stack, nu)?;
    let mut report = String::new();
    let _ = writeln!(report, "nu_THz = {nu}");
    let _ = writeln!(report, "peak_intensity_rel = {peak}");
    let _ = writeln!(report, "in_gap = {}", bp.in_gap);
    let _ = writeln!(report, "{} = {}", if bp.in_gap { "kappa_per_nm" } else { "delta_k_per_nm" }, bp.value);
    let plot = Plot::new("fields", "Intensity along the stack", &t, "x_nm", &["intensity_rel"]);
    Ok(Output {
        summary: format!("profile at {nu:.6} THz, peak cell intensity {peak:.3}"),
        tables: vec![t, cells],
        plots: vec![plot],
        reports: vec![("fields_report.txt".into(), report)],
        failure: None,
    })
}

pub fn cmd_rates(cfg: &RunConfig) -> Result<Output, CliError> {
    let cav = Cavity::from_config(cfg)?;
    let s = &cfg.sweep;
    let mut t = Table::new("rates", &["delta_be_GHz", "nu_THz", "gamma_1d_gamma0", "j_1d_gamma0", "kappa_per_nm"]);
    for d in linear_grid(s.delta_be_min_ghz, s.delta_be_max_ghz, s.points) {
        let nu = cav.nu_be + 1e-3 * d;
        let (g, j) = cav.model.rates(nu)?;
        let kappa = bloch_analysis(&cav.stack, nu)?.kappa();
        t.push(vec![d.into(), nu.into(), g.into(), j.into(), kappa.into()]);
    }
    let plot = Plot::new("rates", "Guided-mode rates", &t, "delta_be_GHz", &["gamma_1d_gamma0", "j_1d_gamma0"]);
    Ok(Output {
        summary: format!("{} sweep points; nu_BE = {:.6} THz, nu_1 = {:.6} THz", t.rows.len(), cav.nu_be, cav.nu1()),
        tables: vec![t],
        plots: vec![plot],
        reports: vec![],
        failure: None,
    })
}

/// Averaged TE spectrum or TM optical-density line from the config.
pub fn model_spectrum(cfg: &RunConfig) -> Result<Spectrum, CliError> {
    let sc = &cfg.spectrum;
    let grid = linear_grid(sc.detuning_min_mhz, sc.detuning_max_mhz, sc.points);
    match sc.polarization {
        Probe::Te => {
            let (rates, kappa) = resolve_rates(cfg)?;
            let spec = cfg.ensemble.spec(cfg.seed)?;
            let model = cfg.ensemble.model(kappa, cfg.stack.a_nm);
            let mut s = average_poisson(&spec, &rates, &model, &grid)?;
            if cfg.rates.source == RateSource::Greens {
                if let Some(d) = cfg.rates.delta_be_ghz {
                    s = s.with_delta_be(d);
                }
            }
            Ok(s)
        }
        Probe::Tm => {
            let r = &cfg.rates;
            let m = TmModel { n_bar: cfg.ensemble.n_bar };
            let p = [r.gamma_1d_tm_gamma0, r.gamma_prime_gamma0, r.delta_0_mhz];
            let vals: Vec<f64> = grid.iter().map(|&d| m.eval(&p, d)).collect();
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("TM rates give an undefined optical-density line".into()));
            }
            Ok(Spectrum::from_values(&grid, &vals)?.with_mode(Polarization::Tm))
        }
    }
}

fn dip_summary(s: &Spectrum) -> String {
    let m = s.samples().iter().min_by(|a, b| a.value.total_cmp(&b.value)).expect("non-empty grid");
    format!("minimum {:.5} at {:+.3} MHz", m.value, m.detuning_mhz)
}

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Output, CliError> {
    let s = model_spectrum(cfg)?;
    let t = spectrum_table("spectrum", &s);
    let plot = Plot::new("spectrum", "Relative transmission", &t, "detuning_MHz", &["T_over_T0"]);
    Ok(Output { summary: dip_summary(&s), tables: vec![t], plots: vec![plot], reports: vec![], failure: None })
}

/// Model spectrum plus seeded Gaussian noise. With zero noise the table is
/// identical to the one from [`cmd_spectrum`].
pub fn cmd_synth(cfg: &RunConfig) -> Result<Output, CliError> {
    let clean = model_spectrum(cfg)?;
    let noise = cfg.synth.noise_rel;
    let s = if noise > 0.0 {
        let noisy = clean.with_noise(noise, cfg.seed)?;
        // Monte Carlo spectra carry their own sampling error.
        let samples = noisy
            .samples()
            .iter()
            .zip(clean.samples())
            .map(|(n, c)| pcwqed::spectrum::SpectrumSample { sigma: n.sigma.hypot(c.sigma), ..*n })
            .collect();
        Spectrum::new(samples)?.with_mode(clean.mode)
    } else {
        clean
    };
    let t = spectrum_table("synth", &s);
    let plot = Plot::new("synth", "Synthetic transmission", &t, "detuning_MHz", &["T_over_T0"]);
    Ok(Output {
        summary: format!("{} points, noise {noise}, seed {}", s.len(), cfg.seed),
        tables: vec![t],
        plots: vec![plot],
        reports: vec![],
        failure: None,
    })
}

fn write_params(out: &mut String, r: &FitReport) {
    let _ = writeln!(out, "converged = {}", r.converged);
    let _ = writeln!(out, "iterations = {}", r.iterations);
    let _ = writeln!(out, "chi2 = {}", r.chi2);
    for ((name, v), (s, b)) in r.names.iter().zip(&r.values).zip(r.sigmas.iter().zip(&r.at_bound)) {
        let _ = writeln!(out, "{name} = {{ value = {v}, sigma = {s}, at_bound = {b} }}");
    }
}

fn residual_table(name: &str, s: &Spectrum, model: impl Fn(f64) -> f64) -> Table {
    let mut t = Table::new(name, &["detuning_MHz", "T_over_T0", "model", "residual"]);
    for smp in s.samples() {
        let m = model(smp.detuning_mhz);
        t.push(vec![smp.detuning_mhz.into(), smp.value.into(), m.into(), (smp.value - m).into()]);
    }
    t
}

/// Fits TE and/or TM spectra with N̄ fixed from the config.
pub fn cmd_fit(cfg: &RunConfig, te: Option<&Spectrum>, tm: Option<&Spectrum>) -> Result<Output, CliError> {
    if te.is_none() && tm.is_none() {
        return Err(CliError::Config("fit needs a TE and/or a TM spectrum".into()));
    }
    let n_bar = cfg.ensemble.n_bar;
    let mut out = Output::default();
    let mut report = format!("n_bar = {n_bar}\n");
    let mut unconverged = Vec::new();
    let mut te_fit = None;
    if let Some(s) = te {
        let r = fit_te_spectrum(s, n_bar)?;
        let m = TeModel::new(n_bar)?;
        out.tables.push(residual_table("fit_te", s, |d| m.eval(&r.values, d)));
        report.push_str("\n[te]\n");
        write_params(&mut report, &r);
        let (g, j) = (r.values[0], r.values[1]);
        if j != 0.0 {
            // R = Γ_1D/(−J_1D) with the covariance term kept.
            let ratio = g / -j;
            let c = &r.covariance;
            let rel2 = c[(0, 0)] / (g * g) + c[(1, 1)] / (j * j) - 2.0 * c[(0, 1)] / (g * j);
            let _ = writeln!(report, "ratio_gamma_over_minus_j = {{ value = {ratio}, sigma = {} }}", ratio.abs() * rel2.max(0.0).sqrt());
        }
        if !r.converged {
            unconverged.push("TE");
        }
        te_fit = Some(r);
    }
    let mut tm_fit = None;
    if let Some(s) = tm {
        let r = fit_tm_spectrum(s, n_bar)?;
        let m = TmModel { n_bar };
        out.tables.push(residual_table("fit_tm", s, |d| m.eval(&r.values, d)));
        report.push_str("\n[tm]\n");
        write_params(&mut report, &r);
        if !r.converged {
            unconverged.push("TM");
        }
        tm_fit = Some(r);
    }
    let mut summary = Vec::new();
    if let Some(r) = &te_fit {
        summary.push(format!("TE gamma_1d = {:.4} ± {:.4}", r.values[0], r.sigmas[0]));
    }
    if let Some(r) = &tm_fit {
        summary.push(format!("TM gamma_1d = {:.4} ± {:.4}", r.values[0], r.sigmas[0]));
    }
    if let (Some(a), Some(b)) = (&te_fit, &tm_fit) {
        let e = a.values[0] / b.values[0];
        let sigma = e * ((a.sigmas[0] / a.values[0]).powi(2) + (b.sigmas[0] / b.values[0]).powi(2)).sqrt();
        report.push_str("\n[enhancement]\n");
        let _ = writeln!(report, "te_over_tm = {{ value = {e}, sigma = {sigma} }}");
        summary.push(format!("TE/TM = {e:.1} ± {sigma:.1}"));
    }
    for t in &out.tables {
        out.plots.push(Plot::new(&t.name, "Data and fitted model", t, "detuning_MHz", &["T_over_T0", "model"]));
    }
    out.reports.push(("fit_report.toml".into(), report));
    out.summary = summary.join("; ");
    if !unconverged.is_empty() {
        out.failure = Some(CliError::NotConverged(unconverged.join(", ")));
    }
    Ok(out)
}

/// Hold-time series Γ_tot(t_m) in units of Γ′ from the configured empirical
/// form.
pub fn hold_series(cfg: &RunConfig) -> Vec<(f64, f64)> {
    let d = &cfg.decay;
    (0..d.hold_points)
        .map(|k| {
            let t = d.hold_min_ms + d.hold_step_ms * k as f64;
            (t, d.gamma_sr_gamma_prime * (-t / d.tau_sr_ms).exp() + d.asymptote_gamma_prime)
        })
        .collect()
}

pub fn cmd_decay(cfg: &RunConfig) -> Result<Output, CliError> {
    let d = &cfg.decay;
    let gp = cfg.rates.gamma_prime_gamma0;
    let g1d = d.gamma_1d_gamma_prime * gp;
    let n_bar = cfg.ensemble.n_bar;
    let times = time_grid(gp, d.lifetimes, d.time_points);
    let single = DecayCurve::for_atoms(1, &times, g1d, gp)?;
    let mixed = DecayCurve::poisson(n_bar, &times, g1d, gp)?;
    let mut curve = Table::new("decay_curve", &["t_us", "I_single_rel", "I_poisson_rel"]);
    let (s0, m0) = (single.samples[0].1, mixed.samples[0].1);
    for (a, b) in single.samples.iter().zip(&mixed.samples) {
        curve.push(vec![a.0.into(), (a.1 / s0).into(), (b.1 / m0).into()]);
    }
    let (rate1, w1) = fit_with_default_window(&single)?;
    let (rate_n, _) = fit_with_default_window(&mixed)?;
    let apparent = (rate1 - gp) / g1d;

    let pts = hold_series(cfg);
    let nf: NbarFit = fit_nbar(&pts, d.gamma_1d_gamma_prime)?;
    let mut holds = Table::new("decay_holds", &["hold_ms", "gamma_tot_gamma_prime", "fit_gamma_prime"]);
    for &(t, v) in &pts {
        let f = nf.gamma_sr * (-t / nf.tau_sr_ms).exp() + nf.asymptote;
        holds.push(vec![t.into(), v.into(), f.into()]);
    }

    let mut r = String::new();
    let _ = writeln!(r, "[curves]");
    let _ = writeln!(r, "gamma_prime_gamma0 = {gp}");
    let _ = writeln!(r, "gamma_1d_gamma0 = {g1d}");
    let _ = writeln!(r, "single_rate_gamma0 = {rate1}");
    let _ = writeln!(r, "single_window_us = [{}, {}]", w1.0, w1.1);
    let _ = writeln!(r, "apparent_over_true_gamma_1d = {apparent}");
    let _ = writeln!(r, "poisson_rate_gamma0 = {rate_n}");
    let _ = writeln!(r, "\n[holds]");
    let _ = writeln!(r, "n_bar_at_probe = {}", nf.n_bar);
    let _ = writeln!(r, "tau_sr_ms = {}", nf.tau_sr_ms);
    let _ = writeln!(r, "gamma_sr_gamma_prime = {}", nf.gamma_sr);
    let _ = writeln!(r, "asymptote_gamma_prime = {}", nf.asymptote);
    let _ = writeln!(r, "eta_sr = {}", nf.eta_sr);
    let _ = writeln!(r, "converged = {}", nf.report.converged);

    let failure = (!nf.report.converged).then(|| CliError::NotConverged("hold-time series".into()));
    Ok(Output {
        summary: format!("apparent single-atom ratio {apparent:.3}; N̄(4 ms) = {:.3}, η_SR = {:.3}", nf.n_bar, nf.eta_sr),
        plots: vec![
            Plot::new("decay_curve", "Fluorescence decay", &curve, "t_us", &["I_single_rel", "I_poisson_rel"]),
            Plot::new("decay_holds", "Total decay rate against hold time", &holds, "hold_ms", &["gamma_tot_gamma_prime", "fit_gamma_prime"]),
        ],
        tables: vec![curve, holds],
        reports: vec![("decay_report.toml".into(), r)],
        failure,
    })
}

/// The band-edge sweep. The first row is the first resonance ν₁; the rest
/// follow the configured grid. R = Γ_1D/(−J_1D); the cavity comparator is
/// γ_c/Δ_c with Δ_c measured from ν₁.
pub fn cmd_fig4(cfg: &RunConfig) -> Result<Output, CliError> {
    let cav = Cavity::from_config(cfg)?;
    let d1 = cav.d1_ghz();
    let gamma_c = cfg.cqed.gamma_c_ghz;
    let s = &cfg.sweep;
    let mut t = Table::new("fig4", &["delta_be_GHz", "gamma_1d_gamma0", "minus_j_1d_gamma0", "R", "R_cqed"]);
    let detunings = std::iter::once(-d1).chain(linear_grid(s.delta_be_min_ghz, s.delta_be_max_ghz, s.points));
    for d in detunings {
        let nu = cav.nu_be + 1e-3 * d;
        let (g, j) = cav.model.rates(nu)?;
        let dc = d + d1;
        let cqed = (dc != 0.0).then(|| gamma_c / dc);
        t.push(vec![d.into(), g.into(), (-j).into(), (g / -j).into(), cqed.into()]);
    }
    let sweep = Table { rows: t.rows[1..].to_vec(), ..t.clone() };
    let mut r = String::new();
    let _ = writeln!(r, "nu_be_THz = {}", cav.nu_be);
    let _ = writeln!(r, "nu_1_THz = {}", cav.nu1());
    let _ = writeln!(r, "d1_GHz = {d1}");
    let _ = writeln!(r, "gamma_c_GHz = {gamma_c}");
    let (g1, j1) = cav.model.rates(cav.nu1())?;
    let _ = writeln!(r, "gamma_1d_at_nu1_gamma0 = {g1}");
    let _ = writeln!(r, "j_1d_at_nu1_gamma0 = {j1}");
    Ok(Output {
        summary: format!("{} rows; D1 = {d1:.2} GHz, nu_BE = {:.6} THz", t.rows.len(), cav.nu_be),
        plots: vec![
            Plot::new("fig4_rates", "Dissipative and coherent rates", &t, "delta_be_GHz", &["gamma_1d_gamma0", "minus_j_1d_gamma0"]),
            Plot::new("fig4_ratio", "Dissipative to coherent ratio", &sweep, "delta_be_GHz", &["R", "R_cqed"]),
        ],
        tables: vec![t],
        reports: vec![("fig4_report.toml".into(), r)],
        failure: None,
    })
}
