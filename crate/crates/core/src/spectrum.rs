//! Sampled transmission spectra.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Probe polarisation; carried as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarization {
    #[default]
    Te,
    Tm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSample {
    pub detuning_mhz: f64,
    /// Relative transmission |t/t0|².
    pub value: f64,
    /// One-sigma uncertainty of `value`; zero for exact model output.
    pub sigma: f64,
}

/// Detuning-ordered transmission samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum {
    pub mode: Polarization,
    /// Probe detuning from the band edge, GHz, when known.
    pub delta_be_ghz: Option<f64>,
    samples: Vec<SpectrumSample>,
}

impl Spectrum {
    /// Builds a spectrum, rejecting non-finite values and unsorted
    /// detunings.
    pub fn new(samples: Vec<SpectrumSample>) -> Result<Self> {
        for s in &samples {
            if !(s.detuning_mhz.is_finite() && s.value.is_finite() && s.sigma.is_finite() && s.sigma >= 0.0) {
                return Err(Error::input(format!("invalid spectrum sample {s:?}")));
            }
        }
        if samples.windows(2).any(|w| w[1].detuning_mhz <= w[0].detuning_mhz) {
            return Err(Error::input("spectrum detunings must be strictly increasing"));
        }
        Ok(Spectrum { mode: Polarization::Te, delta_be_ghz: None, samples })
    }

    pub fn from_values(detunings_mhz: &[f64], values: &[f64]) -> Result<Self> {
        if detunings_mhz.len() != values.len() {
            return Err(Error::input("detuning and value arrays differ in length"));
        }
        Spectrum::new(
            detunings_mhz
                .iter()
                .zip(values)
                .map(|(&d, &v)| SpectrumSample { detuning_mhz: d, value: v, sigma: 0.0 })
                .collect(),
        )
    }

    pub fn with_mode(mut self, mode: Polarization) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_delta_be(mut self, ghz: f64) -> Self {
        self.delta_be_ghz = Some(ghz);
        self
    }

    pub fn samples(&self) -> &[SpectrumSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.detuning_mhz).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    /// Adds independent Gaussian noise of standard deviation `sigma` (in
    /// units of the no-atom transmission) and records it as each sample's
    /// uncertainty. Zero noise returns the values unchanged.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Spectrum> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::input(format!("noise level must be finite and >= 0, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for s in out.samples.iter_mut() {
            if sigma > 0.0 {
                let e: f64 = rng.sample(StandardNormal);
                s.value += sigma * e;
            }
            s.sigma = sigma;
        }
        Ok(out)
    }
}

/// `n` evenly spaced detunings covering [lo, hi].
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_seeded_and_sized() {
        let grid = linear_grid(0.0, 1.0, 4000);
        let clean = Spectrum::from_values(&grid, &vec![1.0; grid.len()]).unwrap();
        let a = clean.with_noise(0.02, 9).unwrap();
        assert_eq!(a, clean.with_noise(0.02, 9).unwrap());
        assert_ne!(a, clean.with_noise(0.02, 10).unwrap());
        let vals = a.values();
        let var = vals.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((var.sqrt() / 0.02 - 1.0).abs() < 0.05);
        assert_eq!(clean.with_noise(0.0, 1).unwrap().values(), clean.values());
    }

    #[test]
    fn rejects_unsorted_and_nan() {
        assert!(Spectrum::from_values(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(Spectrum::from_values(&[0.0, 1.0], &[f64::NAN, 1.0]).is_err());
        assert!(Spectrum::from_values(&[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = linear_grid(-30.0, 30.0, 25);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], -30.0);
        assert_eq!(g[24], 30.0);
        assert_eq!(g[12], 0.0);
    }
}
