//! Fitters for cavity intensity profiles, band-edge dispersion and the TE
//! and TM transmission lines.

use std::f64::consts::PI;

use crate::ensemble::{od_transmission, optical_density, BrightAverager};
use crate::error::{Error, Result};
use crate::spectrum::Spectrum;
use crate::spin::CouplingRates;
use crate::units::{gamma0_to_mhz, mhz_to_gamma0, GAMMA0_MHZ};

use super::lsq::{least_squares, Bounds, FitReport, LsqOptions};

/// Cavity intensity I₁|e^{iδk x} − R_t e^{2iδk L} e^{−iδk x}|², written as
/// I₁[(1 − R_t)² + 4R_t sin²(δk (L − x))].
pub fn intensity_profile_model(x: f64, delta_k: f64, r_t: f64, i1: f64, length: f64) -> f64 {
    i1 * ((1.0 - r_t).powi(2) + 4.0 * r_t * (delta_k * (length - x)).sin().powi(2))
}

/// I₀ + B (sin(q u)/q)², the form used internally; smooth through q = 0.
fn floor_curvature(u: f64, q: f64, floor: f64, curvature: f64) -> f64 {
    let s = if (q * u).abs() < 1e-8 { u } else { (q * u).sin() / q };
    floor + curvature * s * s
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileFit {
    /// Standing wave; at the band edge δk → 0, R_t → 1 and I₁ diverges
    /// while the profile stays quadratic.
    Standing { delta_k: f64, r_t: f64, i1: f64, report: FitReport },
    /// Exponential decay I₁ e^{−2κx}, the deep-gap limit.
    Evanescent { kappa: f64, i1: f64, report: FitReport },
}

impl ProfileFit {
    pub fn report(&self) -> &FitReport {
        match self {
            ProfileFit::Standing { report, .. } | ProfileFit::Evanescent { report, .. } => report,
        }
    }
}

fn check_identifiable(values: &[f64], what: &str) -> Result<()> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var.sqrt() > 1e-9 * mean.abs().max(1e-300)) {
        return Err(Error::NotIdentifiable(format!("{what} is flat")));
    }
    Ok(())
}

/// Fits the cavity intensity model to (x, |E|²) samples with x measured
/// from the start of a cavity of length `length` (nm). Profiles that decay
/// monotonically are better described, and reported, as evanescent.
pub fn fit_intensity_profile(profile: &[(f64, f64)], length: f64) -> Result<ProfileFit> {
    if profile.len() < 20 {
        return Err(Error::input(format!("need >= 20 profile samples, got {}", profile.len())));
    }
    if !(length > 0.0) || profile.iter().any(|&(x, v)| !(x.is_finite() && v.is_finite())) {
        return Err(Error::input("profile samples and cavity length must be finite"));
    }
    let ys: Vec<f64> = profile.iter().map(|p| p.1).collect();
    check_identifiable(&ys, "intensity profile")?;
    // Positions are measured in units of the cavity length so that every
    // fitted parameter is of order one for the Jacobian step rule.
    let us: Vec<f64> = profile.iter().map(|p| (length - p.0) / length).collect();
    let opts = LsqOptions::default();

    // Coarse scan over q with the linear parameters solved exactly.
    let mut best = (f64::INFINITY, [0.0; 3]);
    for k in 0..=600 {
        let q = 3.0 * PI * k as f64 / 600.0;
        let basis: Vec<f64> = us.iter().map(|&u| floor_curvature(u, q, 0.0, 1.0)).collect();
        let (f, b) = nonneg_two_term(&ys, &basis);
        let chi: f64 = ys.iter().zip(&basis).map(|(y, s)| (y - f - b * s).powi(2)).sum();
        if chi < best.0 {
            best = (chi, [q, f, b]);
        }
    }
    let standing_model = |p: &[f64], out: &mut [f64]| {
        for (o, &u) in out.iter_mut().zip(&us) {
            *o = floor_curvature(u, p[0], p[1], p[2]);
        }
    };
    let bounds = Bounds::new(vec![0.0, 0.0, 0.0], vec![f64::INFINITY; 3])?;
    let standing = least_squares(&standing_model, &ys, None, &best.1, &bounds, &opts)?;

    let evanescent = if ys.iter().all(|&v| v > 0.0) {
        let xs: Vec<f64> = profile.iter().map(|p| p.0 / length).collect();
        let logs: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
        let (slope, icept) = linear_regression(&xs, &logs);
        let model = |p: &[f64], out: &mut [f64]| {
            for (o, &x) in out.iter_mut().zip(&xs) {
                *o = p[1] * (-2.0 * p[0] * x).exp();
            }
        };
        let init = [(-0.5 * slope).max(0.0), icept.exp()];
        let b = Bounds::new(vec![0.0, 0.0], vec![f64::INFINITY; 2])?;
        Some(least_squares(&model, &ys, None, &init, &b, &opts)?)
    } else {
        None
    };

    match evanescent {
        Some(ev) if ev.chi2 < standing.chi2 && ev.values[0] > 0.0 => Ok(ProfileFit::Evanescent {
            kappa: ev.values[0] / length,
            i1: ev.values[1],
            report: rescale(ev, &[1.0 / length, 1.0]).with_names(&["kappa_x", "i1"]),
        }),
        _ => {
            let (q, floor, curv) = (standing.values[0], standing.values[1], standing.values[2]);
            let (r_t, i1) = if q == 0.0 || curv == 0.0 {
                (1.0, f64::INFINITY)
            } else {
                let scale = curv / (4.0 * q * q);
                let c = floor / scale;
                let r = 0.5 * ((2.0 + c) - ((2.0 + c).powi(2) - 4.0).max(0.0).sqrt());
                (r, scale / r)
            };
            Ok(ProfileFit::Standing {
                delta_k: q / length,
                r_t,
                i1,
                report: rescale(standing, &[1.0 / length, 1.0, 1.0 / (length * length)])
                    .with_names(&["delta_k", "floor", "curvature"]),
            })
        }
    }
}

/// Maps a report from scaled parameters back to physical ones.
fn rescale(mut report: FitReport, factors: &[f64]) -> FitReport {
    for (j, &f) in factors.iter().enumerate() {
        report.values[j] *= f;
        report.sigmas[j] *= f.abs();
        for i in 0..factors.len() {
            report.covariance[(i, j)] *= f;
            report.covariance[(j, i)] *= f;
        }
    }
    report
}

/// Least squares y ≈ f + b·s with f, b ≥ 0.
fn nonneg_two_term(y: &[f64], s: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let (sy, ss, sss, ssy) = y.iter().zip(s).fold((0.0, 0.0, 0.0, 0.0), |a, (&y, &s)| {
        (a.0 + y, a.1 + s, a.2 + s * s, a.3 + s * y)
    });
    let det = n * sss - ss * ss;
    if det.abs() > 1e-300 {
        let b = (n * ssy - ss * sy) / det;
        let f = (sy - b * ss) / n;
        if f >= 0.0 && b >= 0.0 {
            return (f, b);
        }
    }
    let b_only = if sss > 0.0 { (ssy / sss).max(0.0) } else { 0.0 };
    let f_only = (sy / n).max(0.0);
    let chi = |f: f64, b: f64| y.iter().zip(s).map(|(y, s)| (y - f - b * s).powi(2)).sum::<f64>();
    if chi(0.0, b_only) < chi(f_only, 0.0) {
        (0.0, b_only)
    } else {
        (f_only, 0.0)
    }
}

/// Ordinary least-squares (slope, intercept).
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Result of [`fit_dispersion`].
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionFit {
    pub nu_be: f64,
    pub nu_be2: f64,
    pub zeta: f64,
    pub report: FitReport,
}

/// Fits δk_x(ν) = (2π/a)√((ν_BE2 − ν)(ν_BE − ν)/(4ζ² − W²)) to points below
/// the lower band edge. The quadratic (δk_x a/2π)² = (ν² − Sν + P)/D seeds
/// the nonlinear refinement.
pub fn fit_dispersion(points: &[(f64, f64)], a_nm: f64) -> Result<DispersionFit> {
    if points.len() < 6 {
        return Err(Error::input(format!("need >= 6 dispersion points, got {}", points.len())));
    }
    let mut pts = points.to_vec();
    if pts.iter().any(|&(nu, dk)| !(nu.is_finite() && dk.is_finite())) {
        return Err(Error::input("dispersion points must be finite"));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.iter().any(|p| p.1 <= 0.0) || pts.windows(2).any(|w| w[1].1 >= w[0].1) {
        return Err(Error::input(
            "δk_x must be positive and fall towards the edge; points above the band edge are mixed in",
        ));
    }
    let nus: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let dks: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let nu_top = *nus.last().unwrap();
    let ys: Vec<f64> = dks.iter().map(|d| (d * a_nm / (2.0 * PI)).powi(2)).collect();

    // Quadratic in the offset from the highest point for conditioning.
    let offs: Vec<f64> = nus.iter().map(|nu| nu - nu_top).collect();
    let [c0, c1, c2] = quadratic_fit(&offs, &ys)?;
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if !(c2 > 0.0 && disc > 0.0) {
        return Err(Error::NotIdentifiable("dispersion points do not bracket a band edge".into()));
    }
    let r1 = (-c1 - disc.sqrt()) / (2.0 * c2);
    let r2 = (-c1 + disc.sqrt()) / (2.0 * c2);
    let (lo, hi) = (r1.min(r2), r1.max(r2));
    if lo <= 0.0 {
        return Err(Error::input("points above the band edge are mixed in"));
    }
    // The edge is fitted as an offset above the highest point so the
    // Jacobian step resolves it.
    let init = [lo, hi - lo, 1.0 / c2];

    let model = |p: &[f64], out: &mut [f64]| {
        for (o, &off) in out.iter_mut().zip(&offs) {
            let prod = ((p[0] + p[1] - off) * (p[0] - off)).max(0.0);
            *o = 2.0 * PI / a_nm * (prod / p[2]).sqrt();
        }
    };
    let bounds = Bounds::new(vec![0.0, 1e-9, 1e-12], vec![f64::INFINITY; 3])?;
    let mut report = least_squares(&model, &dks, None, &init, &bounds, &LsqOptions::default())?;
    report.values[0] += nu_top;
    let (nu_be, w, d) = (report.values[0], report.values[1], report.values[2]);
    let zeta = 0.5 * (d + w * w).sqrt();
    Ok(DispersionFit {
        nu_be,
        nu_be2: nu_be + w,
        zeta,
        report: report.with_names(&["nu_be_THz", "gap_width_THz", "curvature_denominator_THz2"]),
    })
}

fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<[f64; 3]> {
    let a = nalgebra::DMatrix::from_fn(x.len(), 3, |i, j| x[i].powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(y);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::NotIdentifiable(format!("dispersion quadratic: {e}")))?;
    Ok([sol[0], sol[1], sol[2]])
}

/// Parameter names of [`fit_te_spectrum`].
pub const TE_PARAMETERS: [&str; 4] = ["gamma_1d", "j_1d", "gamma_prime", "delta_0_MHz"];

/// Parameter names of [`fit_tm_spectrum`].
pub const TM_PARAMETERS: [&str; 3] = ["gamma_1d_tm", "gamma_prime", "delta_0_MHz"];

/// Bins per atom of the s-grid used by the TE fit model.
pub const TE_FIT_BINS: usize = 400;

/// Poisson- and position-averaged bright-mode line at fixed N̄.
#[derive(Debug, Clone)]
pub struct TeModel {
    averager: BrightAverager,
    n_bar: f64,
}

impl TeModel {
    pub fn new(n_bar: f64) -> Result<Self> {
        if !(n_bar.is_finite() && n_bar >= 0.0) {
            return Err(Error::input(format!("mean atom number must be >= 0, got {n_bar}")));
        }
        Ok(TeModel { averager: BrightAverager::poisson(n_bar, TE_FIT_BINS), n_bar })
    }

    pub fn n_bar(&self) -> f64 {
        self.n_bar
    }

    /// Parameters in [`TE_PARAMETERS`] order.
    pub fn eval(&self, p: &[f64], detuning_mhz: f64) -> f64 {
        match CouplingRates::new(p[0], p[1], p[2], p[3]) {
            Ok(r) => self.averager.eval(detuning_mhz, &r),
            Err(_) => f64::NAN,
        }
    }
}

/// Dip location, depth and full width at half depth of `depth(v)`.
fn dip_features(spectrum: &Spectrum, depth: impl Fn(f64) -> f64) -> (f64, f64, f64) {
    let s = spectrum.samples();
    let d: Vec<f64> = s.iter().map(|x| depth(x.value)).collect();
    let (imax, &dmax) = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let half = 0.5 * dmax;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if d[i] < half {
                let t = (d[prev] - half) / (d[prev] - d[i]);
                return Some(s[prev].detuning_mhz + t * (s[i].detuning_mhz - s[prev].detuning_mhz));
            }
            prev = i;
        }
        None
    };
    let left = cross(&mut (0..imax).rev()).unwrap_or(s[0].detuning_mhz);
    let right = cross(&mut (imax + 1..s.len())).unwrap_or(s[s.len() - 1].detuning_mhz);
    (s[imax].detuning_mhz, dmax, (right - left).max(1e-9))
}

/// Initial TE parameters: Δ0 from the dip location, the total width from
/// the half-depth width, Γ′ and Γ_1D from depth via the J = 0 resonant form
/// |t|² = (Γ′/(Γ′ + Γ_1D s̄))² with s̄ = N̄/2, and J_1D from the
/// antisymmetric tail (|t|² ≈ 1 − 2B/Δ′ far from the line).
pub fn te_initial_guess(spectrum: &Spectrum, n_bar: f64) -> [f64; 4] {
    let (d_min, depth, fwhm) = dip_features(spectrum, |v| 1.0 - v);
    let t_min = (1.0 - depth).clamp(1e-6, 1.0);
    let total = mhz_to_gamma0(fwhm).max(1e-3);
    let gamma_prime = (total * t_min.sqrt()).max(1e-3);
    let s_bar = (0.5 * n_bar).max(1e-6);
    let gamma_1d = ((total - gamma_prime) / s_bar).max(0.0);
    let s = spectrum.samples();
    let reach = (d_min - s[0].detuning_mhz).min(s[s.len() - 1].detuning_mhz - d_min);
    let j_1d = if reach > 0.0 {
        let at = |d: f64| {
            s.iter().min_by(|a, b| (a.detuning_mhz - d).abs().total_cmp(&(b.detuning_mhz - d).abs())).unwrap().value
        };
        let b = -mhz_to_gamma0(reach) * (at(d_min + reach) - at(d_min - reach)) / 4.0;
        b / s_bar
    } else {
        0.0
    };
    [gamma_1d, j_1d, gamma_prime, -d_min]
}

fn weights_of(spectrum: &Spectrum) -> Option<Vec<f64>> {
    let sig: Vec<f64> = spectrum.samples().iter().map(|s| s.sigma).collect();
    sig.iter().all(|&v| v > 0.0).then_some(sig)
}

/// Fits Γ_1D, J_1D, Γ′ and Δ0 to a TE spectrum with N̄ held fixed.
pub fn fit_te_spectrum(spectrum: &Spectrum, n_bar: f64) -> Result<FitReport> {
    fit_te_spectrum_from(spectrum, n_bar, te_initial_guess(spectrum, n_bar))
}

pub fn fit_te_spectrum_from(spectrum: &Spectrum, n_bar: f64, init: [f64; 4]) -> Result<FitReport> {
    if spectrum.len() < 15 {
        return Err(Error::input(format!("TE fit needs >= 15 detunings, got {}", spectrum.len())));
    }
    if !(n_bar > 0.0) {
        return Err(Error::input("TE fit needs N̄ > 0"));
    }
    let ys = spectrum.values();
    check_identifiable(&ys, "TE spectrum")?;
    let model = TeModel::new(n_bar)?;
    let grid = spectrum.detunings();
    let f = |p: &[f64], out: &mut [f64]| {
        for (o, &d) in out.iter_mut().zip(&grid) {
            *o = model.eval(p, d);
        }
    };
    let bounds = Bounds::new(
        vec![0.0, f64::NEG_INFINITY, 1e-6, f64::NEG_INFINITY],
        vec![f64::INFINITY; 4],
    )?;
    let sig = weights_of(spectrum);
    let report = least_squares(&f, &ys, sig.as_deref(), &init, &bounds, &LsqOptions::default())?;
    Ok(report.with_names(&TE_PARAMETERS))
}

/// Optical-density line parameterised by (Γ_1D^TM, Γ′, Δ0) at fixed N̄.
#[derive(Debug, Clone, Copy)]
pub struct TmModel {
    pub n_bar: f64,
}

impl TmModel {
    pub fn eval(&self, p: &[f64], detuning_mhz: f64) -> f64 {
        let od = optical_density(self.n_bar, p[0], p[1]);
        let width = gamma0_to_mhz(p[0] + p[1]);
        od_transmission(detuning_mhz, od, width, p[2]).unwrap_or(f64::NAN)
    }
}

/// Initial TM parameters from the dip: OD = −ln T_min, full width of
/// −ln T gives Γ_1D^TM + Γ′, split through OD = 2N̄Γ_1D^TM/Γ′.
pub fn tm_initial_guess(spectrum: &Spectrum, n_bar: f64) -> [f64; 3] {
    let (d_min, od, fwhm) = dip_features(spectrum, |v| -v.max(1e-300).ln());
    let total = fwhm / GAMMA0_MHZ;
    let gamma_prime = (total / (1.0 + od / (2.0 * n_bar.max(1e-9)))).max(1e-3);
    [(od * gamma_prime / (2.0 * n_bar.max(1e-9))).max(0.0), gamma_prime, -d_min]
}

/// Fits Γ_1D^TM, Γ′ and Δ0 to a TM spectrum with N̄ held fixed.
pub fn fit_tm_spectrum(spectrum: &Spectrum, n_bar: f64) -> Result<FitReport> {
    if spectrum.len() < 15 {
        return Err(Error::input(format!("TM fit needs >= 15 detunings, got {}", spectrum.len())));
    }
    if !(n_bar > 0.0) {
        return Err(Error::input("TM fit needs N̄ > 0"));
    }
    let ys = spectrum.values();
    if ys.iter().any(|&v| v <= 0.0) {
        return Err(Error::input("TM transmission values must be positive"));
    }
    check_identifiable(&ys, "TM spectrum")?;
    let model = TmModel { n_bar };
    let grid = spectrum.detunings();
    let f = |p: &[f64], out: &mut [f64]| {
        for (o, &d) in out.iter_mut().zip(&grid) {
            *o = model.eval(p, d);
        }
    };
    let init = tm_initial_guess(spectrum, n_bar);
    let bounds = Bounds::new(vec![0.0, 1e-6, f64::NEG_INFINITY], vec![f64::INFINITY; 3])?;
    let sig = weights_of(spectrum);
    let report = least_squares(&f, &ys, sig.as_deref(), &init, &bounds, &LsqOptions::default())?;
    Ok(report.with_names(&TM_PARAMETERS))
}
