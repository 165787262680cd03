//! Fluorescence decay of N atoms sampling the Bloch function, exponential
//! rate extraction and mean-atom-number inference from hold-time series.
//!
//! Times are in μs and rates in units of Γ0 unless stated otherwise.

use crate::error::{Error, Result};
use crate::fit::{least_squares, Bounds, FitReport, LsqOptions};
use crate::units::GAMMA0_ANGULAR;

/// Order of the modified Bessel function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselOrder {
    Zero,
    One,
}

/// Switch from the power series to the large-argument expansion.
const ASYMPTOTIC_FROM: f64 = 30.0;

/// Below this γt the bracket uses its second-order expansion.
const SMALL_ARGUMENT: f64 = 1e-6;

/// e^{−x} I_k(x) for x ≥ 0.
pub fn bessel_i_scaled(order: BesselOrder, x: f64) -> Result<f64> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(Error::input(format!("Bessel argument must be finite and >= 0, got {x}")));
    }
    let k = match order {
        BesselOrder::Zero => 0,
        BesselOrder::One => 1,
    };
    Ok(if x < ASYMPTOTIC_FROM { (-x).exp() * series(k, x) } else { asymptotic(k, x) })
}

/// Σ_m (x/2)^{2m+k}/(m!(m+k)!).
fn series(k: u32, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = if k == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    for m in 1..500 {
        term *= q / (m as f64 * (m + k as usize) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// e^{−x} I_k(x) ≈ (2πx)^{−1/2} Σ_m (−1)^m a_m(k)/x^m, truncated at the
/// smallest term.
fn asymptotic(k: u32, x: f64) -> f64 {
    let mu = 4.0 * (k * k) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..60 {
        let next = -term * (mu - ((2 * m - 1) as f64).powi(2)) / (m as f64 * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// e^{−x} I₁(x)/x, finite at x = 0.
fn bessel_i1_over_x_scaled(x: f64) -> f64 {
    if x < ASYMPTOTIC_FROM {
        // ½ Σ (x/2)^{2m}/(m!(m+1)!)
        let q = 0.25 * x * x;
        let mut term = 0.5;
        let mut sum = term;
        for m in 1..500 {
            term *= q / (m as f64 * (m + 1) as f64);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        (-x).exp() * sum
    } else {
        asymptotic(1, x) / x
    }
}

fn check_rates(gamma_1d: f64, gamma_prime: f64) -> Result<()> {
    if !(gamma_1d.is_finite() && gamma_1d >= 0.0 && gamma_prime.is_finite() && gamma_prime > 0.0) {
        return Err(Error::input(format!(
            "need Γ_1D >= 0 and Γ′ > 0, got {gamma_1d} and {gamma_prime}"
        )));
    }
    Ok(())
}

/// Fluorescence intensity of `n` atoms after a time expressed in units of
/// 1/Γ0:
/// γ² e^{−Γ′t} Ĩ₀^{N−2} [N(N+1)/4 Ĩ₀² − (N/(4γt) + N²/2) Ĩ₀Ĩ₁ + N(N−1)/4 Ĩ₁²]
/// with Ĩ_k = e^{−γt} I_k(γt) and γ = Γ_1D/2.
pub fn intensity_n_dimensionless(n: usize, t: f64, gamma_1d: f64, gamma_prime: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("intensity of zero atoms is identically zero; handle upstream"));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::input(format!("time must be finite and >= 0, got {t}")));
    }
    check_rates(gamma_1d, gamma_prime)?;
    let gamma = 0.5 * gamma_1d;
    let x = gamma * t;
    let (i0, i1, i1_over_x) = if x < SMALL_ARGUMENT {
        (1.0 - x + 0.75 * x * x, 0.5 * x - 0.5 * x * x, 0.5 - 0.5 * x + 0.3125 * x * x)
    } else {
        (
            bessel_i_scaled(BesselOrder::Zero, x)?,
            bessel_i_scaled(BesselOrder::One, x)?,
            bessel_i1_over_x_scaled(x),
        )
    };
    let nf = n as f64;
    let bracket = 0.25 * nf * (nf + 1.0) * i0 * i0 - (0.25 * nf * i1_over_x + 0.5 * nf * nf * i1) * i0
        + 0.25 * nf * (nf - 1.0) * i1 * i1;
    let power = if n >= 2 { i0.powi(n as i32 - 2) } else { 1.0 / i0 };
    Ok((gamma * gamma * (-gamma_prime * t).exp() * power * bracket).max(0.0))
}

/// [`intensity_n_dimensionless`] with `t_us` in μs.
pub fn intensity_n(n: usize, t_us: f64, gamma_1d: f64, gamma_prime: f64) -> Result<f64> {
    intensity_n_dimensionless(n, t_us * GAMMA0_ANGULAR, gamma_1d, gamma_prime)
}

/// Intensity samples in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    /// (t in μs, intensity).
    pub samples: Vec<(f64, f64)>,
    pub gamma_prime: f64,
    pub gamma_1d: f64,
}

impl DecayCurve {
    pub fn new(samples: Vec<(f64, f64)>, gamma_1d: f64, gamma_prime: f64) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::input("decay times must be strictly increasing"));
        }
        if samples.iter().any(|s| !(s.0.is_finite() && s.1.is_finite())) {
            return Err(Error::input("decay samples must be finite"));
        }
        Ok(DecayCurve { samples, gamma_prime, gamma_1d })
    }

    /// Model curve of exactly `n` atoms.
    pub fn for_atoms(n: usize, times_us: &[f64], gamma_1d: f64, gamma_prime: f64) -> Result<Self> {
        let s = times_us
            .iter()
            .map(|&t| intensity_n(n, t, gamma_1d, gamma_prime).map(|v| (t, v)))
            .collect::<Result<Vec<_>>>()?;
        DecayCurve::new(s, gamma_1d, gamma_prime)
    }

    /// Σ_{N≥1} P_N̄(N) I_N(t) over the truncated Poisson distribution.
    pub fn poisson(n_bar: f64, times_us: &[f64], gamma_1d: f64, gamma_prime: f64) -> Result<Self> {
        let spec = crate::ensemble::EnsembleSpec::new(n_bar, Default::default())?;
        let mut w = spec.poisson_weights();
        if w.len() < 2 {
            // Sparse limit: the truncation drops every occupied term, but the
            // curve shape is still that of a single atom.
            w.push(n_bar * (-n_bar).exp());
        }
        let s = times_us
            .iter()
            .map(|&t| {
                let mut v = 0.0;
                for (n, &p) in w.iter().enumerate().skip(1) {
                    v += p * intensity_n(n, t, gamma_1d, gamma_prime)?;
                }
                Ok((t, v))
            })
            .collect::<Result<Vec<_>>>()?;
        DecayCurve::new(s, gamma_1d, gamma_prime)
    }
}

/// Decay rate (Γ0 units) from a uniform-weight straight-line fit of
/// ln I over `window` = (t_start, t_end) in μs.
pub fn fit_single_exponential(curve: &DecayCurve, window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        curve.samples.iter().copied().filter(|&(t, _)| t >= window.0 && t <= window.1).collect();
    if pts.len() < 8 {
        return Err(Error::input(format!("need >= 8 samples in the fit window, got {}", pts.len())));
    }
    if pts.iter().any(|&(_, v)| !(v > 0.0)) {
        return Err(Error::input("intensities in the fit window must be positive"));
    }
    // Dividing by a power of two first makes power-of-two rescaling of the
    // data exact, so it cannot move the fitted rate.
    let shift = binary_exponent(pts[0].1);
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ls: Vec<f64> = pts.iter().map(|p| (p.1 * 2f64.powi(-shift)).ln()).collect();
    let (slope, _) = crate::fit::linear_regression(&ts, &ls);
    Ok(-slope / GAMMA0_ANGULAR)
}

fn binary_exponent(v: f64) -> i32 {
    let biased = ((v.to_bits() >> 52) & 0x7ff) as i32;
    if biased == 0 { 0 } else { biased - 1023 }
}

/// Fit window as multiples of the fitted lifetime 1/Γ̄_tot.
pub const DEFAULT_WINDOW: (f64, f64) = (0.1, 2.0);

/// Fits over [0.1, 2]/Γ̄_tot, iterating until the window is consistent
/// with the rate it produces. Returns (rate in Γ0 units, window in μs).
pub fn fit_with_default_window(curve: &DecayCurve) -> Result<(f64, (f64, f64))> {
    let t_end = curve.samples.last().map(|s| s.0).unwrap_or(0.0);
    let t_start = curve.samples.first().map(|s| s.0).unwrap_or(0.0);
    let mut rate = fit_single_exponential(curve, (t_start, t_end))?;
    let mut window = (t_start, t_end);
    for _ in 0..50 {
        let tau = 1.0 / (rate * GAMMA0_ANGULAR);
        let next = (DEFAULT_WINDOW.0 * tau, DEFAULT_WINDOW.1 * tau);
        let r = fit_single_exponential(curve, next)?;
        let done = (r - rate).abs() <= 1e-12 * rate;
        rate = r;
        window = next;
        if done {
            break;
        }
    }
    Ok((rate, window))
}

/// Sample times (μs) covering `lifetimes` multiples of 1/Γ′ with `n` points.
pub fn time_grid(gamma_prime: f64, lifetimes: f64, n: usize) -> Vec<f64> {
    let t_max = lifetimes / (gamma_prime * GAMMA0_ANGULAR);
    (0..n).map(|k| t_max * k as f64 / (n - 1).max(1) as f64).collect()
}

/// Fitted total decay rate, in units of Γ′, of the Poisson-weighted decay
/// for a mean atom number `n_bar`; Γ_1D is given in units of Γ′.
pub fn total_rate_for(n_bar: f64, gamma_1d_over_gp: f64) -> Result<f64> {
    let gp = 1.0;
    let times = time_grid(gp, 6.0, 1201);
    let curve = DecayCurve::poisson(n_bar.max(1e-9), &times, gamma_1d_over_gp, gp)?;
    Ok(fit_with_default_window(&curve)?.0 / gp)
}

/// Result of [`fit_nbar`].
#[derive(Debug, Clone, PartialEq)]
pub struct NbarFit {
    /// N̄ at the probe hold time.
    pub n_bar: f64,
    pub tau_sr_ms: f64,
    /// Superradiant amplitude Γ̄_SR at t_m = 0, units of Γ′.
    pub gamma_sr: f64,
    /// Long-hold asymptote Γ̄_tot^(1), units of Γ′.
    pub asymptote: f64,
    /// Superradiant excess per atom at the probe time, (Γ_tot − Γ_∞)/(N̄Γ_1D).
    pub eta_sr: f64,
    pub report: FitReport,
}

/// Hold time at which N̄ is reported, ms.
pub const PROBE_HOLD_MS: f64 = 4.0;

/// Fits Γ_tot(t_m) = Γ_SR e^{−t_m/τ_SR} + Γ_∞ to (t_m in ms, Γ_tot in units of
/// Γ′) and converts the fitted rate at the probe hold time into N̄ by
/// inverting the Poisson-weighted decay model at fixed Γ_1D (units of Γ′).
pub fn fit_nbar(decay_rates: &[(f64, f64)], gamma_1d_over_gp: f64) -> Result<NbarFit> {
    let report = fit_hold_time_series(decay_rates)?;
    let (amp, tau, asym) = (report.values[0], report.values[1], report.values[2]);
    let at_probe = amp * (-PROBE_HOLD_MS / tau).exp() + asym;
    let n_bar = invert_rate_map(at_probe, gamma_1d_over_gp)?;
    let base = total_rate_for(0.0, gamma_1d_over_gp)?;
    let eta_sr = (at_probe - base) / (n_bar * gamma_1d_over_gp);
    Ok(NbarFit { n_bar, tau_sr_ms: tau, gamma_sr: amp, asymptote: asym, eta_sr, report })
}

/// Least-squares fit of the empirical hold-time form; parameters are
/// (Γ_SR, τ_SR in ms, Γ_∞).
pub fn fit_hold_time_series(decay_rates: &[(f64, f64)]) -> Result<FitReport> {
    if decay_rates.len() < 5 {
        return Err(Error::input(format!("need >= 5 hold-time points, got {}", decay_rates.len())));
    }
    let mut pts = decay_rates.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-9 * hi.abs().max(1e-300)) {
        return Err(Error::NotIdentifiable("decay rates do not change with hold time".into()));
    }
    // Seed τ from the log of the excess over a floor just below the minimum.
    let floor = lo - 0.05 * (hi - lo);
    let logs: Vec<f64> = ys.iter().map(|y| (y - floor).ln()).collect();
    let (slope, icept) = crate::fit::linear_regression(&ts, &logs);
    let tau0 = if slope < 0.0 { -1.0 / slope } else { ts[ts.len() - 1] - ts[0] };
    let init = [icept.exp(), tau0, floor];
    let model = |p: &[f64], out: &mut [f64]| {
        for (o, &t) in out.iter_mut().zip(&ts) {
            *o = p[0] * (-t / p[1]).exp() + p[2];
        }
    };
    let bounds = Bounds::new(vec![0.0, 1e-9, f64::NEG_INFINITY], vec![f64::INFINITY; 3])?;
    let r = least_squares(&model, &ys, None, &init, &bounds, &LsqOptions::default())?;
    Ok(r.with_names(&["gamma_sr", "tau_sr_ms", "asymptote"]))
}

fn invert_rate_map(target: f64, gamma_1d_over_gp: f64) -> Result<f64> {
    let f = |n: f64| total_rate_for(n, gamma_1d_over_gp).map(|r| r - target);
    let (mut lo, mut hi) = (0.0, 1.0);
    let f_lo = f(lo)?;
    if f_lo >= 0.0 {
        return Ok(0.0);
    }
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 200.0 {
            return Err(Error::numeric(format!("decay rate {target} exceeds the model range")));
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
