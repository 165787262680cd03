//! Averages over atom positions along the Bloch function and over a
//! Poisson-distributed atom number; the TM optical-density line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{least_squares, Bounds, LsqOptions};
use crate::spectrum::{Spectrum, SpectrumSample};
use crate::spin::{build_coupling_matrix, transmission_bright_sum, AtomConfiguration, CouplingRates};
use crate::units::mhz_to_gamma0;

/// Poisson mass allowed beyond the truncation point.
pub const POISSON_TAIL: f64 = 1e-6;

/// Bins per atom on the s = Σcos² grid used by quadrature averaging.
pub const DEFAULT_QUADRATURE_BINS: usize = 1000;

/// How positions are averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PositionMethod {
    /// Iterated convolution of the single-atom cos² density (bright mode only).
    Quadrature { bins: usize },
    /// Latin-hypercube Monte Carlo; a seed is mandatory.
    MonteCarlo { samples: usize, seed: Option<u64> },
}

impl Default for PositionMethod {
    fn default() -> Self {
        PositionMethod::Quadrature { bins: DEFAULT_QUADRATURE_BINS }
    }
}

/// Which transmission formula is averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingModel {
    /// Single bright mode; depends only on Σcos²(πx/a).
    BrightMode,
    /// Full coupling matrix with atoms uniform over [−spread, spread].
    Exact { kappa_x: f64, spread_nm: f64, a_nm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub n_bar: f64,
    pub method: PositionMethod,
}

impl EnsembleSpec {
    pub fn new(n_bar: f64, method: PositionMethod) -> Result<Self> {
        if !(n_bar.is_finite() && n_bar >= 0.0) {
            return Err(Error::input(format!("mean atom number must be finite and >= 0, got {n_bar}")));
        }
        validate_method(&method)?;
        Ok(EnsembleSpec { n_bar, method })
    }

    /// Smallest N whose cumulative Poisson mass exceeds 1 − 1e-6.
    pub fn n_max(&self) -> usize {
        poisson_truncation(self.n_bar).0
    }

    /// Renormalised weights P(0..=n_max).
    pub fn poisson_weights(&self) -> Vec<f64> {
        poisson_truncation(self.n_bar).1
    }
}

fn validate_method(method: &PositionMethod) -> Result<()> {
    match *method {
        PositionMethod::Quadrature { bins } if bins < 2 => {
            Err(Error::input(format!("quadrature needs at least 2 bins, got {bins}")))
        }
        PositionMethod::MonteCarlo { seed: None, .. } => {
            Err(Error::input("Monte Carlo averaging requires an explicit seed"))
        }
        PositionMethod::MonteCarlo { samples, .. } if samples < 1000 => {
            Err(Error::input(format!("Monte Carlo averaging needs >= 1000 samples, got {samples}")))
        }
        _ => Ok(()),
    }
}

fn poisson_truncation(n_bar: f64) -> (usize, Vec<f64>) {
    let mut w = vec![(-n_bar).exp()];
    let mut cum = w[0];
    let mut n = 0usize;
    while cum <= 1.0 - POISSON_TAIL {
        n += 1;
        let next = w[n - 1] * n_bar / n as f64;
        w.push(next);
        cum += next;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|p| *p /= total);
    (n, w)
}

/// Discrete distribution of s = Σcos²(πx_j/a) on the nodes k/bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SumDensity {
    bins: usize,
    weights: Vec<f64>,
}

impl SumDensity {
    /// Single-atom cos² density with bin masses and bin means both exact;
    /// each bin's mass is split between its two nodes so the mean is kept.
    pub fn single(bins: usize) -> Self {
        use std::f64::consts::FRAC_PI_2;
        let h = 1.0 / bins as f64;
        // c = cos²φ with φ uniform on [0, π/2].
        let phi = |c: f64| c.clamp(0.0, 1.0).sqrt().acos();
        let prim = |p: f64| 0.5 * p + 0.25 * (2.0 * p).sin();
        let mut w = vec![0.0; bins + 1];
        for k in 0..bins {
            let (hi, lo) = (phi(k as f64 * h), phi((k + 1) as f64 * h));
            let mass = (hi - lo) / FRAC_PI_2;
            if mass <= 0.0 {
                continue;
            }
            let mean = (prim(hi) - prim(lo)) / (hi - lo);
            let f = ((mean - k as f64 * h) / h).clamp(0.0, 1.0);
            w[k] += mass * (1.0 - f);
            w[k + 1] += mass * f;
        }
        SumDensity { bins, weights: w }
    }

    /// Point mass at s = 0.
    pub fn empty(bins: usize) -> Self {
        SumDensity { bins, weights: vec![1.0] }
    }

    pub fn convolve(&self, other: &SumDensity) -> SumDensity {
        debug_assert_eq!(self.bins, other.bins);
        let mut out = vec![0.0; self.weights.len() + other.weights.len() - 1];
        for (i, &a) in self.weights.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.weights.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        SumDensity { bins: self.bins, weights: out }
    }

    /// Densities for 0..=n atoms.
    pub fn ladder(n: usize, bins: usize) -> Vec<SumDensity> {
        let one = SumDensity::single(bins);
        let mut out = vec![SumDensity::empty(bins)];
        for k in 1..=n {
            let next = out[k - 1].convolve(&one);
            out.push(next);
        }
        out
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 1.0 / self.bins as f64;
        self.weights.iter().enumerate().map(move |(k, &w)| (k as f64 * h, w))
    }

    /// Mixture Σ_N p_N · density_N.
    pub fn mixture(ladder: &[SumDensity], probs: &[f64]) -> SumDensity {
        let bins = ladder[0].bins;
        let len = ladder.iter().zip(probs).map(|(d, _)| d.weights.len()).max().unwrap_or(1);
        let mut w = vec![0.0; len];
        for (d, &p) in ladder.iter().zip(probs) {
            for (k, &v) in d.weights.iter().enumerate() {
                w[k] += p * v;
            }
        }
        SumDensity { bins, weights: w }
    }
}

/// Precomputed bright-mode average Σ_s p(s) |t(s)|² for a fixed atom
/// number or a fixed Poisson mean.
#[derive(Debug, Clone)]
pub struct BrightAverager {
    nodes: Vec<(f64, f64)>,
}

impl BrightAverager {
    pub fn fixed(n: usize, bins: usize) -> Self {
        let d = SumDensity::ladder(n, bins).pop().expect("ladder has n + 1 entries");
        BrightAverager::from_density(&d)
    }

    pub fn poisson(n_bar: f64, bins: usize) -> Self {
        let (n_max, w) = poisson_truncation(n_bar);
        let ladder = SumDensity::ladder(n_max, bins);
        BrightAverager::from_density(&SumDensity::mixture(&ladder, &w))
    }

    fn from_density(d: &SumDensity) -> Self {
        BrightAverager { nodes: d.nodes().filter(|&(_, w)| w > 0.0).collect() }
    }

    pub fn mean_s(&self) -> f64 {
        self.nodes.iter().map(|(s, w)| s * w).sum()
    }

    pub fn eval(&self, detuning_mhz: f64, rates: &CouplingRates) -> f64 {
        self.nodes
            .iter()
            .map(|&(s, w)| w * transmission_bright_sum(detuning_mhz, rates, s).norm_sqr())
            .sum()
    }
}

fn spectrum_from(grid: &[f64], vals: Vec<(f64, f64)>) -> Result<Spectrum> {
    Spectrum::new(
        grid.iter()
            .zip(vals)
            .map(|(&d, (v, s))| SpectrumSample { detuning_mhz: d, value: v, sigma: s })
            .collect(),
    )
}

/// Stream of uniform deviates stratified into `samples` equal strata per
/// coordinate (Latin hypercube), reproducible from (seed, stream).
fn latin_hypercube(samples: usize, dims: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut col: Vec<f64> = (0..samples).map(|k| (k as f64 + rng.random::<f64>()) / samples as f64).collect();
        // Fisher-Yates with the same generator keeps the stream self-contained.
        for i in (1..samples).rev() {
            let j = rng.random_range(0..=i);
            col.swap(i, j);
        }
        cols.push(col);
    }
    cols
}

fn mean_and_error(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for v in values {
        n += 1.0;
        let d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
    }
    let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

fn seed_for_count(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Position average of |t/t0|² for exactly `n` atoms.
pub fn average_positions(
    n: usize,
    rates: &CouplingRates,
    model: &CouplingModel,
    grid: &[f64],
    method: &PositionMethod,
) -> Result<Spectrum> {
    validate_method(method)?;
    if n == 0 {
        return spectrum_from(grid, vec![(1.0, 0.0); grid.len()]);
    }
    match (*model, *method) {
        (CouplingModel::BrightMode, PositionMethod::Quadrature { bins }) => {
            let avg = BrightAverager::fixed(n, bins);
            spectrum_from(grid, grid.par_iter().map(|&d| (avg.eval(d, rates), 0.0)).collect())
        }
        (CouplingModel::Exact { .. }, PositionMethod::Quadrature { .. }) => Err(Error::input(
            "exact-model averaging supports Monte Carlo only; quadrature needs the bright-mode form",
        )),
        (CouplingModel::BrightMode, PositionMethod::MonteCarlo { samples, seed: Some(seed) }) => {
            let vals = grid
                .par_iter()
                .enumerate()
                .map(|(gi, &d)| {
                    let u = latin_hypercube(samples, n, seed_for_count(seed, n), gi as u64);
                    mean_and_error((0..samples).map(|k| {
                        let s: f64 = u.iter().map(|col| (std::f64::consts::PI * col[k]).cos().powi(2)).sum();
                        transmission_bright_sum(d, rates, s).norm_sqr()
                    }))
                })
                .collect();
            spectrum_from(grid, vals)
        }
        (CouplingModel::Exact { kappa_x, spread_nm, a_nm }, PositionMethod::MonteCarlo { samples, seed: Some(seed) }) => {
            exact_monte_carlo(n, rates, kappa_x, spread_nm, a_nm, grid, samples, seed_for_count(seed, n))
        }
        (_, PositionMethod::MonteCarlo { seed: None, .. }) => unreachable!("rejected by validate_method"),
    }
}

/// Exact-model Monte Carlo. One diagonalisation serves the whole detuning
/// grid, so configurations are drawn in fixed chunks keyed by (seed, chunk).
#[allow(clippy::too_many_arguments)]
fn exact_monte_carlo(
    n: usize,
    rates: &CouplingRates,
    kappa_x: f64,
    spread_nm: f64,
    a_nm: f64,
    grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Spectrum> {
    const CHUNK: usize = 1024;
    if !(spread_nm.is_finite() && spread_nm > 0.0) {
        return Err(Error::input(format!("position spread must be > 0 nm, got {spread_nm}")));
    }
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<(f64, f64)>> {
            let m = CHUNK.min(samples - c * CHUNK);
            let u = latin_hypercube(m, n, seed, c as u64);
            let mut acc = vec![(0.0, 0.0); grid.len()];
            for k in 0..m {
                let xs = u.iter().map(|col| spread_nm * (2.0 * col[k] - 1.0)).collect();
                let cfg = AtomConfiguration::new(xs, kappa_x, a_nm)?;
                let g = build_coupling_matrix(rates, &cfg)?;
                for (slot, &d) in acc.iter_mut().zip(grid) {
                    let t = crate::spin::transmission_exact(d, rates, &g).norm_sqr();
                    slot.0 += t;
                    slot.1 += t * t;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = samples as f64;
    let vals = (0..grid.len())
        .map(|i| {
            let (s, s2) = partial.iter().fold((0.0, 0.0), |a, p| (a.0 + p[i].0, a.1 + p[i].1));
            let mean = s / total;
            let var = ((s2 / total - mean * mean) * total / (total - 1.0)).max(0.0);
            (mean, (var / total).sqrt())
        })
        .collect();
    spectrum_from(grid, vals)
}

/// Σ_N P_N̄(N) ⟨|t/t0|²⟩_x over the truncated Poisson distribution.
pub fn average_poisson(
    spec: &EnsembleSpec,
    rates: &CouplingRates,
    model: &CouplingModel,
    grid: &[f64],
) -> Result<Spectrum> {
    validate_method(&spec.method)?;
    let weights = spec.poisson_weights();
    if let (CouplingModel::BrightMode, PositionMethod::Quadrature { bins }) = (*model, spec.method) {
        let avg = BrightAverager::poisson(spec.n_bar, bins);
        return spectrum_from(grid, grid.par_iter().map(|&d| (avg.eval(d, rates), 0.0)).collect());
    }
    let mut value = vec![0.0; grid.len()];
    let mut var = vec![0.0; grid.len()];
    for (n, &p) in weights.iter().enumerate() {
        let s = average_positions(n, rates, model, grid, &spec.method)?;
        for (i, smp) in s.samples().iter().enumerate() {
            value[i] += p * smp.value;
            var[i] += (p * smp.sigma).powi(2);
        }
    }
    spectrum_from(grid, value.into_iter().zip(var).map(|(v, s2)| (v, s2.sqrt())).collect())
}

/// exp[−OD/(1 + (2Δ′/Γ_tot)²)] with Δ′ = Δ_A + Δ0 and the full linewidth
/// Γ_tot = (Γ_1D^TM + Γ′)/2π, all in MHz.
pub fn od_transmission(detuning_mhz: f64, od: f64, linewidth_mhz: f64, delta_0_mhz: f64) -> Result<f64> {
    if !(od.is_finite() && od >= 0.0) {
        return Err(Error::input(format!("optical density must be finite and >= 0, got {od}")));
    }
    if !(linewidth_mhz.is_finite() && linewidth_mhz > 0.0) {
        return Err(Error::input(format!("linewidth must be > 0 MHz, got {linewidth_mhz}")));
    }
    let x = 2.0 * (detuning_mhz + delta_0_mhz) / linewidth_mhz;
    Ok((-od / (1.0 + x * x)).exp())
}

/// Resonant optical density 2N̄Γ_1D^TM/Γ′.
pub fn optical_density(n_bar: f64, gamma_1d_tm: f64, gamma_prime: f64) -> f64 {
    2.0 * n_bar * gamma_1d_tm / gamma_prime
}

/// Collective single-mode line |z/(z + B + iA/2)|² in angular Γ0 units.
pub fn single_mode_line(detuning_mhz: f64, total_rate: f64, shift: f64, gamma_prime: f64, delta_0_mhz: f64) -> f64 {
    let z = num_complex::Complex64::new(mhz_to_gamma0(detuning_mhz + delta_0_mhz), 0.5 * gamma_prime);
    (z / (z + num_complex::Complex64::new(shift, 0.5 * total_rate))).norm_sqr()
}

/// Detuning span used by [`effective_ratio`], ±20 Γ0.
pub const EFFECTIVE_RATIO_SPAN_GAMMA0: f64 = 20.0;

/// Fits the unaveraged single-mode line (free A, B, Γ′, Δ0) to the fully
/// averaged spectrum and returns η = A/(N̄Γ_1D).
pub fn effective_ratio(rates: &CouplingRates, spec: &EnsembleSpec) -> Result<f64> {
    let avg = match spec.method {
        PositionMethod::Quadrature { bins } => BrightAverager::poisson(spec.n_bar, bins),
        PositionMethod::MonteCarlo { .. } => {
            return Err(Error::input("effective_ratio uses the quadrature average"));
        }
    };
    ratio_against(rates, spec.n_bar, |d| avg.eval(d, rates))
}

/// η when every atom sits on an antinode: the "average" is the line of
/// s = N̄ itself.
pub fn effective_ratio_pinned(rates: &CouplingRates, n_bar: f64) -> Result<f64> {
    ratio_against(rates, n_bar, |d| transmission_bright_sum(d, rates, n_bar).norm_sqr())
}

fn ratio_against(rates: &CouplingRates, n_bar: f64, target: impl Fn(f64) -> f64 + Sync) -> Result<f64> {
    if !(n_bar > 0.0) || rates.gamma_1d <= 0.0 {
        return Err(Error::input("effective_ratio needs N̄ > 0 and Γ_1D > 0"));
    }
    let span = crate::units::gamma0_to_mhz(EFFECTIVE_RATIO_SPAN_GAMMA0);
    let grid: Vec<f64> = crate::spectrum::linear_grid(-span, span, 161);
    let data: Vec<f64> = grid.iter().map(|&d| target(d)).collect();
    let model = |p: &[f64], out: &mut [f64]| {
        for (o, &d) in out.iter_mut().zip(&grid) {
            *o = single_mode_line(d, p[0], p[1], p[2], p[3]);
        }
    };
    let init = [0.5 * n_bar * rates.gamma_1d, 0.5 * n_bar * rates.j_1d, rates.gamma_prime, rates.delta_0_mhz];
    let bounds = Bounds::new(vec![0.0, f64::NEG_INFINITY, 1e-6, f64::NEG_INFINITY], vec![f64::INFINITY; 4])?;
    let report = least_squares(&model, &data, None, &init, &bounds, &LsqOptions::default())?;
    if !report.converged {
        return Err(Error::numeric(format!(
            "single-mode fit did not converge after {} iterations",
            report.iterations
        )));
    }
    Ok(report.values[0] / (n_bar * rates.gamma_1d))
}
