//! Green's-function spin model for N atoms along the waveguide.
//!
//! Rates are in units of Γ0 and detunings enter as linear MHz; the one
//! conversion to angular Γ0 units happens in [`CouplingRates::shifted_detuning`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_unordered, sort_descending_modulus};
use crate::units::mhz_to_gamma0;

/// Peak single-atom guided-mode rates plus the non-guided background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRates {
    /// Γ_1D at a Bloch antinode, Γ0 units.
    pub gamma_1d: f64,
    /// J_1D at a Bloch antinode, Γ0 units (signed).
    pub j_1d: f64,
    /// Γ′, Γ0 units.
    pub gamma_prime: f64,
    /// Stark and Lamb shift Δ0, MHz.
    pub delta_0_mhz: f64,
}

impl CouplingRates {
    pub fn new(gamma_1d: f64, j_1d: f64, gamma_prime: f64, delta_0_mhz: f64) -> Result<Self> {
        if !(gamma_1d.is_finite() && gamma_1d >= 0.0) {
            return Err(Error::input(format!("gamma_1d must be finite and >= 0, got {gamma_1d}")));
        }
        if !(gamma_prime.is_finite() && gamma_prime > 0.0) {
            return Err(Error::input(format!("gamma_prime must be finite and > 0, got {gamma_prime}")));
        }
        if !(j_1d.is_finite() && delta_0_mhz.is_finite()) {
            return Err(Error::input("j_1d and delta_0 must be finite"));
        }
        Ok(CouplingRates { gamma_1d, j_1d, gamma_prime, delta_0_mhz })
    }

    /// Peak complex coupling J_1D + iΓ_1D/2.
    pub fn peak_coupling(&self) -> Complex64 {
        Complex64::new(self.j_1d, 0.5 * self.gamma_1d)
    }

    /// z = 2π(Δ_A + Δ0)/Γ0 + iΓ′/2 for a probe detuning Δ_A in MHz.
    pub fn shifted_detuning(&self, detuning_mhz: f64) -> Complex64 {
        Complex64::new(mhz_to_gamma0(detuning_mhz + self.delta_0_mhz), 0.5 * self.gamma_prime)
    }
}

/// Atom positions along the waveguide axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomConfiguration {
    pub positions_nm: Vec<f64>,
    /// κ_x, rad/nm.
    pub kappa_x: f64,
    pub a_nm: f64,
}

impl AtomConfiguration {
    pub fn new(positions_nm: Vec<f64>, kappa_x: f64, a_nm: f64) -> Result<Self> {
        if positions_nm.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("atom positions must be finite"));
        }
        if !(kappa_x.is_finite() && kappa_x >= 0.0) {
            return Err(Error::input(format!("kappa_x must be finite and >= 0, got {kappa_x}")));
        }
        if !(a_nm.is_finite() && a_nm > 0.0) {
            return Err(Error::input(format!("lattice constant must be > 0, got {a_nm}")));
        }
        Ok(AtomConfiguration { positions_nm, kappa_x, a_nm })
    }

    pub fn len(&self) -> usize {
        self.positions_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions_nm.is_empty()
    }

    /// Bloch amplitudes cos(πx_i/a).
    pub fn bloch_amplitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.positions_nm.iter().map(|x| (PI * x / self.a_nm).cos())
    }
}

/// Complex symmetric coupling matrix 𝔤 with its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    entries: DMatrix<Complex64>,
    eigenvalues: Vec<Complex64>,
}

impl CouplingMatrix {
    /// Wraps an arbitrary square matrix and diagonalises it.
    pub fn from_entries(entries: DMatrix<Complex64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::input("coupling matrix must be square"));
        }
        let mut eigenvalues = eigenvalues_unordered(&entries)?;
        sort_descending_modulus(&mut eigenvalues);
        Ok(CouplingMatrix { entries, eigenvalues })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Sorted by descending modulus, ties by descending real part.
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.diagonal().iter().sum()
    }
}

/// g_ij = (J_1D + iΓ_1D/2) cos(πx_i/a) cos(πx_j/a) e^{−κ_x|x_i−x_j|}.
pub fn build_coupling_matrix(rates: &CouplingRates, config: &AtomConfiguration) -> Result<CouplingMatrix> {
    let n = config.len();
    let u: Vec<f64> = config.bloch_amplitudes().collect();
    let g0 = rates.peak_coupling();
    let x = &config.positions_nm;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = g0 * (u[i] * u[j] * (-config.kappa_x * (x[i] - x[j]).abs()).exp());
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    CouplingMatrix::from_entries(m)
}

pub fn eigenvalues(matrix: &CouplingMatrix) -> Vec<Complex64> {
    matrix.eigenvalues.clone()
}

/// Solves (Δ̃ + iΓ′/2)σ + 𝔤σ = −Ω with Δ̃ the shifted angular detuning.
pub fn solve_coherences(
    matrix: &CouplingMatrix,
    detuning_mhz: f64,
    rates: &CouplingRates,
    drive: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = matrix.n();
    if drive.len() != n {
        return Err(Error::input(format!("drive has {} entries for {n} atoms", drive.len())));
    }
    let z = rates.shifted_detuning(detuning_mhz);
    let mut a = matrix.entries.clone();
    for i in 0..n {
        a[(i, i)] += z;
    }
    let rhs = DVector::from_iterator(n, drive.iter().map(|w| -w));
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numeric(format!("singular coherence system at {detuning_mhz} MHz")))?;
    let resid = (&a * &sol - &rhs).norm();
    let scale = a.norm() * sol.norm() + rhs.norm();
    if !(resid <= 1e-10 * scale.max(f64::MIN_POSITIVE)) || sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "ill-conditioned coherence system at {detuning_mhz} MHz (residual {resid:e})"
        )));
    }
    Ok(sol.iter().copied().collect())
}

/// Π_ξ z/(z + λ_ξ) with z = Δ̃ + iΓ′/2.
pub fn transmission_exact(detuning_mhz: f64, rates: &CouplingRates, matrix: &CouplingMatrix) -> Complex64 {
    let z = rates.shifted_detuning(detuning_mhz);
    matrix.eigenvalues.iter().map(|l| z / (z + l)).product()
}

/// Single-bright-mode form z/(z + Σ_i g_ii).
pub fn transmission_bright(detuning_mhz: f64, rates: &CouplingRates, config: &AtomConfiguration) -> Complex64 {
    let s: f64 = config.bloch_amplitudes().map(|u| u * u).sum();
    transmission_bright_sum(detuning_mhz, rates, s)
}

/// Bright-mode transmission given s = Σ cos²(πx_i/a).
#[inline]
pub fn transmission_bright_sum(detuning_mhz: f64, rates: &CouplingRates, s: f64) -> Complex64 {
    let z = rates.shifted_detuning(detuning_mhz);
    z / (z + rates.peak_coupling() * s)
}

/// Lorentzian-cavity comparator rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqedRates {
    pub j_1d: f64,
    pub gamma_1d: f64,
    /// Γ_1D/J_1D = γ_c/Δ_c; `None` on resonance where J_1D vanishes.
    pub ratio: Option<f64>,
}

/// J_1D = peak (Δ_c/γ_c)/(1 + Δ_c²/γ_c²), Γ_1D = peak/(1 + Δ_c²/γ_c²).
pub fn cqed_rates(delta_c_ghz: f64, gamma_c_ghz: f64, peak: f64) -> Result<CqedRates> {
    if !(gamma_c_ghz.is_finite() && gamma_c_ghz > 0.0) {
        return Err(Error::input(format!("cavity linewidth must be > 0 GHz, got {gamma_c_ghz}")));
    }
    if !(delta_c_ghz.is_finite() && peak.is_finite()) {
        return Err(Error::input("cavity detuning and peak rate must be finite"));
    }
    let x = delta_c_ghz / gamma_c_ghz;
    let lorentz = 1.0 / (1.0 + x * x);
    let ratio = (delta_c_ghz != 0.0).then(|| gamma_c_ghz / delta_c_ghz);
    Ok(CqedRates { j_1d: peak * x * lorentz, gamma_1d: peak * lorentz, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::GAMMA0_MHZ;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rates(g: f64, j: f64, gp: f64) -> CouplingRates {
        CouplingRates::new(g, j, gp, 0.0).unwrap()
    }

    #[test]
    fn single_atom_diagonal_entries() {
        let r = rates(1.4, -0.7, 2.0);
        let at0 = build_coupling_matrix(&r, &AtomConfiguration::new(vec![0.0], 0.0, 370.0).unwrap()).unwrap();
        assert_eq!(at0.entries()[(0, 0)], c(-0.7, 0.7));
        let node = build_coupling_matrix(&r, &AtomConfiguration::new(vec![185.0], 0.0, 370.0).unwrap()).unwrap();
        assert!(node.entries()[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn two_atom_off_diagonal() {
        let a = 370.0;
        let r = rates(1.4, -0.7, 2.0);
        let cfg = AtomConfiguration::new(vec![0.0, a / 4.0], 0.1 / a, a).unwrap();
        let m = build_coupling_matrix(&r, &cfg).unwrap();
        let factor = m.entries()[(0, 1)] / r.peak_coupling();
        assert!((factor.re - 0.68965).abs() < 1e-5);
        assert!(factor.im.abs() < 1e-15);
    }

    #[test]
    fn scalar_coherence() {
        let r = rates(1.5, 0.0, 1.0);
        let cfg = AtomConfiguration::new(vec![0.0], 0.0, 370.0).unwrap();
        let m = build_coupling_matrix(&r, &cfg).unwrap();
        let s = solve_coherences(&m, 0.0, &r, &[c(1.0, 0.0)]).unwrap();
        let expect = -1.0 / c(0.0, 0.5 * (1.0 + 1.5));
        assert!((s[0] - expect).norm() < 1e-14);
        let zero = solve_coherences(&m, 3.0, &r, &[c(0.0, 0.0)]).unwrap();
        assert_eq!(zero[0], c(0.0, 0.0));
        assert!(solve_coherences(&m, 0.0, &r, &[]).is_err());
    }

    #[test]
    fn single_atom_resonant_transmission() {
        let r = rates(1.5, 0.0, 1.0);
        let m = build_coupling_matrix(&r, &AtomConfiguration::new(vec![0.0], 0.0, 370.0).unwrap()).unwrap();
        let t = transmission_exact(0.0, &r, &m);
        assert!((t.norm_sqr() - 0.16).abs() < 1e-14);
    }

    #[test]
    fn no_atoms_and_far_detuning() {
        let r = rates(1.5, -0.4, 1.0);
        let empty = AtomConfiguration::new(vec![], 0.0, 370.0).unwrap();
        let m = build_coupling_matrix(&r, &empty).unwrap();
        assert_eq!(transmission_exact(5.0, &r, &m), c(1.0, 0.0));
        assert_eq!(transmission_bright(5.0, &r, &empty), c(1.0, 0.0));
        let cfg = AtomConfiguration::new(vec![0.0, 90.0, 700.0], 0.001, 370.0).unwrap();
        let m = build_coupling_matrix(&r, &cfg).unwrap();
        let far = 1e4 * GAMMA0_MHZ;
        assert!((transmission_exact(far, &r, &m) - 1.0).norm() < 1e-3);
    }

    #[test]
    fn cqed_examples() {
        let q = cqed_rates(60.0, 60.0, 2.0).unwrap();
        assert!((q.gamma_1d - q.j_1d).abs() < 1e-15);
        let q = cqed_rates(193.0, 60.0, 1.0).unwrap();
        assert!((q.ratio.unwrap() - 0.311).abs() < 5e-4);
        let q0 = cqed_rates(0.0, 60.0, 1.0).unwrap();
        assert_eq!(q0.j_1d, 0.0);
        assert!(q0.ratio.is_none());
        assert!(cqed_rates(10.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn fano_minimum_is_pulled_toward_the_shift_sign() {
        // Bright-mode |t|² = (Δ² + g²)/((Δ + B)² + G²) in angular Γ0 units.
        let r = CouplingRates::new(1.4, -2.0, 2.0, 0.0).unwrap();
        let cfg = AtomConfiguration::new(vec![0.0, 40.0, 400.0], 0.0, 370.0).unwrap();
        let s: f64 = cfg.bloch_amplitudes().map(|u| u * u).sum();
        let (b, g, big_g) = (r.j_1d * s, 0.5 * r.gamma_prime, 0.5 * (r.gamma_prime + r.gamma_1d * s));
        // Stationary points solve B Δ² + (B² + G² − g²) Δ − g² B = 0.
        let p = b * b + big_g * big_g - g * g;
        let roots = [(-p + (p * p + 4.0 * b * b * g * g).sqrt()) / (2.0 * b), (-p - (p * p + 4.0 * b * b * g * g).sqrt()) / (2.0 * b)];
        let t = |d: f64| (d * d + g * g) / ((d + b).powi(2) + big_g * big_g);
        let argmin = if t(roots[0]) < t(roots[1]) { roots[0] } else { roots[1] };
        // The dip stays near bare resonance, displaced with the sign of ΣJ,
        // while the peak sits beyond the pole at −ΣJ.
        assert!(argmin < 0.0 && argmin.abs() < b.abs());
        let argmax = if t(roots[0]) < t(roots[1]) { roots[1] } else { roots[0] };
        assert!(argmax > -b);
        let mhz = crate::units::gamma0_to_mhz(argmin);
        let eps = 1e-4;
        let f = |d| transmission_bright(d, &r, &cfg).norm_sqr();
        assert!(f(mhz) < f(mhz + eps) && f(mhz) < f(mhz - eps));
    }

    proptest! {
        #[test]
        fn coupling_matrix_is_bit_symmetric(xs in prop::collection::vec(-6000.0f64..6000.0, 0..8),
                                             kappa in 0.0f64..1e-3, j in -3.0f64..3.0, g in 0.0f64..3.0) {
            let cfg = AtomConfiguration::new(xs, kappa, 370.0).unwrap();
            let m = build_coupling_matrix(&rates(g, j, 1.0), &cfg).unwrap();
            let e = m.entries();
            for i in 0..m.n() {
                for k in 0..m.n() {
                    prop_assert_eq!(e[(i, k)], e[(k, i)]);
                }
            }
            let tr: Complex64 = m.eigenvalues().iter().sum();
            prop_assert!((tr - m.trace()).norm() <= 1e-9 * m.trace().norm().max(1e-300) + 1e-14);
        }

        #[test]
        fn lorentzian_symmetry_without_exchange(xs in prop::collection::vec(-3000.0f64..3000.0, 1..6),
                                                 g in 0.0f64..4.0, gp in 0.1f64..4.0, d0 in -30.0f64..30.0,
                                                 delta in 0.0f64..100.0) {
            let r = CouplingRates::new(g, 0.0, gp, d0).unwrap();
            let cfg = AtomConfiguration::new(xs, 0.0, 370.0).unwrap();
            let up = transmission_bright(-d0 + delta, &r, &cfg).norm_sqr();
            let down = transmission_bright(-d0 - delta, &r, &cfg).norm_sqr();
            prop_assert!((up - down).abs() < 1e-12);
        }

        #[test]
        fn passive_without_exchange(xs in prop::collection::vec(-3000.0f64..3000.0, 0..6),
                                    g in 0.0f64..4.0, gp in 0.1f64..4.0, d in -200.0f64..200.0) {
            let r = CouplingRates::new(g, 0.0, gp, 0.0).unwrap();
            let cfg = AtomConfiguration::new(xs, 0.0, 370.0).unwrap();
            prop_assert!(transmission_bright(d, &r, &cfg).norm_sqr() <= 1.0 + 1e-12);
        }

        #[test]
        fn cqed_ratio_exact(dc in -500.0f64..500.0, gc in 1.0f64..200.0, peak in 0.1f64..5.0) {
            prop_assume!(dc.abs() > 1e-6);
            let q = cqed_rates(dc, gc, peak).unwrap();
            prop_assert!((q.gamma_1d / q.j_1d - gc / dc).abs() <= 1e-12 * (gc / dc).abs());
            let m = cqed_rates(-dc, gc, peak).unwrap();
            prop_assert_eq!(m.gamma_1d, q.gamma_1d);
            prop_assert_eq!(m.j_1d, -q.j_1d);
        }
    }

    #[test]
    fn exchange_can_lift_transmission_above_baseline() {
        // With J ≠ 0 the bright-mode line is not bounded by 1: at Δ' = −ΣJ
        // the ratio is (B² + g²)/G².
        let r = CouplingRates::new(1.4, -3.0, 2.0, 0.0).unwrap();
        let cfg = AtomConfiguration::new(vec![0.0], 0.0, 370.0).unwrap();
        let d = crate::units::gamma0_to_mhz(3.0);
        assert!(transmission_bright(d, &r, &cfg).norm_sqr() > 1.0);
    }
}
