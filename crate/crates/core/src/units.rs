//! Physical constants and the single conversion point between linear
//! detunings (MHz) and angular rates expressed in units of Γ0.

use std::f64::consts::TAU;

/// Speed of light in nm·THz.
pub const C_NM_THZ: f64 = 299_792.458;

/// Free-space decay rate of the Cs D1 line, Γ0 / 2π, in MHz.
pub const GAMMA0_MHZ: f64 = 4.56;

/// Angular rate Γ0 in rad/μs.
pub const GAMMA0_ANGULAR: f64 = TAU * GAMMA0_MHZ;

/// Converts a linear detuning Δ (MHz) into the angular detuning 2πΔ
/// expressed in units of Γ0.
#[inline]
pub fn mhz_to_gamma0(detuning_mhz: f64) -> f64 {
    TAU * detuning_mhz / GAMMA0_ANGULAR
}

/// Inverse of [`mhz_to_gamma0`].
#[inline]
pub fn gamma0_to_mhz(rate: f64) -> f64 {
    rate * GAMMA0_ANGULAR / TAU
}

/// Vacuum wavenumber 2πν/c in rad/nm for a frequency in THz.
#[inline]
pub fn wavenumber(nu_thz: f64) -> f64 {
    TAU * nu_thz / C_NM_THZ
}
