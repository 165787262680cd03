//! Run configuration. Keys are dotted TOML paths whose suffix names the unit;
//! rates are in units of Γ0 unless the key says otherwise.

use std::path::Path;

use pcwqed::ensemble::{CouplingModel, EnsembleSpec, PositionMethod};
use pcwqed::photonic::{LayerStack, CALIBRATED};
use pcwqed::spin::CouplingRates;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub stack: StackConfig,
    pub bands: BandsConfig,
    pub fields: FieldsConfig,
    pub rates: RatesConfig,
    pub ensemble: EnsembleConfig,
    pub spectrum: SpectrumConfig,
    pub synth: SynthConfig,
    pub sweep: SweepConfig,
    pub decay: DecayConfig,
    pub cqed: CqedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 20150401,
            stack: StackConfig::default(),
            bands: BandsConfig::default(),
            fields: FieldsConfig::default(),
            rates: RatesConfig::default(),
            ensemble: EnsembleConfig::default(),
            spectrum: SpectrumConfig::default(),
            synth: SynthConfig::default(),
            sweep: SweepConfig::default(),
            decay: DecayConfig::default(),
            cqed: CqedConfig::default(),
        }
    }
}

/// Two-layer crystal with a graded entrance and a mirrored exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackConfig {
    pub n_high: f64,
    pub n_low: f64,
    pub fill_fraction: f64,
    pub a_nm: f64,
    pub n_cells: usize,
    pub taper_cells: usize,
    pub taper_power: f64,
    /// Defaults to the mean of the two indices.
    pub cladding_index: Option<f64>,
    pub edge_search_min_thz: f64,
    pub edge_search_max_thz: f64,
}

impl Default for StackConfig {
    fn default() -> Self {
        let c = CALIBRATED;
        StackConfig {
            n_high: c.n_high,
            n_low: c.n_low,
            fill_fraction: 0.5,
            a_nm: c.a_nm,
            n_cells: c.n_cells,
            taper_cells: c.taper_cells,
            taper_power: c.profile_power,
            cladding_index: None,
            edge_search_min_thz: 200.0,
            edge_search_max_thz: 240.0,
        }
    }
}

impl StackConfig {
    pub fn build(&self) -> Result<LayerStack, CliError> {
        let cladding = self.cladding_index.unwrap_or(0.5 * (self.n_high + self.n_low));
        Ok(LayerStack::graded_bilayer(
            self.n_high,
            self.n_low,
            self.fill_fraction,
            self.a_nm,
            self.n_cells,
            self.taper_cells,
            self.taper_power,
            cladding,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsConfig {
    pub nu_min_thz: f64,
    pub nu_max_thz: f64,
    pub points: usize,
}

impl Default for BandsConfig {
    fn default() -> Self {
        BandsConfig { nu_min_thz: 215.0, nu_max_thz: 240.0, points: 1001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldsConfig {
    /// Probe frequency; the first resonance below the band edge if unset.
    pub nu_thz: Option<f64>,
    pub samples_per_layer: usize,
}

impl Default for FieldsConfig {
    fn default() -> Self {
        FieldsConfig { nu_thz: None, samples_per_layer: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    /// Γ_1D and J_1D taken from this section.
    Manual,
    /// Γ_1D and J_1D from the stack Green's function at `delta_be_ghz`.
    Greens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    pub source: RateSource,
    pub gamma_1d_gamma0: f64,
    pub j_1d_gamma0: f64,
    pub gamma_prime_gamma0: f64,
    pub delta_0_mhz: f64,
    pub gamma_1d_tm_gamma0: f64,
    /// Γ_1D at the first resonance, fixing the Green's-function scale.
    pub gamma_ref_gamma0: f64,
    /// Probe detuning from the band edge for `source = "greens"`; the first
    /// resonance if unset.
    pub delta_be_ghz: Option<f64>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        RatesConfig {
            source: RateSource::Manual,
            gamma_1d_gamma0: 1.4,
            j_1d_gamma0: 0.0,
            gamma_prime_gamma0: 2.0,
            delta_0_mhz: 12.5,
            gamma_1d_tm_gamma0: 0.045,
            gamma_ref_gamma0: 1.5,
            delta_be_ghz: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positions {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Bright,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_bar: f64,
    pub positions: Positions,
    pub quadrature_bins: usize,
    pub mc_samples: usize,
    pub coupling: Coupling,
    /// Half-width of the uniform atom cloud for the exact coupling model.
    pub spread_nm: f64,
    /// κ_x for the exact model; taken from the stack with Green's rates and
    /// zero otherwise when unset.
    pub kappa_x_per_nm: Option<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_bar: 3.0,
            positions: Positions::Quadrature,
            quadrature_bins: 1000,
            mc_samples: 100_000,
            coupling: Coupling::Bright,
            spread_nm: 6000.0,
            kappa_x_per_nm: None,
        }
    }
}

impl EnsembleConfig {
    pub fn spec(&self, seed: u64) -> Result<EnsembleSpec, CliError> {
        let method = match self.positions {
            Positions::Quadrature => PositionMethod::Quadrature { bins: self.quadrature_bins },
            Positions::MonteCarlo => PositionMethod::MonteCarlo { samples: self.mc_samples, seed: Some(seed) },
        };
        Ok(EnsembleSpec::new(self.n_bar, method)?)
    }

    pub fn model(&self, kappa_x: f64, a_nm: f64) -> CouplingModel {
        match self.coupling {
            Coupling::Bright => CouplingModel::BrightMode,
            Coupling::Exact => CouplingModel::Exact { kappa_x, spread_nm: self.spread_nm, a_nm },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Te,
    Tm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub polarization: Probe,
    pub detuning_min_mhz: f64,
    pub detuning_max_mhz: f64,
    pub points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { polarization: Probe::Te, detuning_min_mhz: -60.0, detuning_max_mhz: 40.0, points: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Gaussian noise in units of the no-atom transmission.
    pub noise_rel: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { noise_rel: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub delta_be_min_ghz: f64,
    pub delta_be_max_ghz: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { delta_be_min_ghz: -120.0, delta_be_max_ghz: 150.0, points: 55 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    pub gamma_1d_gamma_prime: f64,
    pub lifetimes: f64,
    pub time_points: usize,
    pub hold_min_ms: f64,
    pub hold_step_ms: f64,
    pub hold_points: usize,
    pub tau_sr_ms: f64,
    pub gamma_sr_gamma_prime: f64,
    pub asymptote_gamma_prime: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            gamma_1d_gamma_prime: 1.4,
            lifetimes: 6.0,
            time_points: 1201,
            hold_min_ms: 4.0,
            hold_step_ms: 8.0,
            hold_points: 12,
            tau_sr_ms: 16.0,
            gamma_sr_gamma_prime: 1.5,
            asymptote_gamma_prime: 2.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CqedConfig {
    pub gamma_c_ghz: f64,
}

impl Default for CqedConfig {
    fn default() -> Self {
        CqedConfig { gamma_c_ghz: 60.0 }
    }
}

impl RunConfig {
    /// Parses and validates TOML text. `schema_version` must be present.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if !raw.contains_key("schema_version") {
            return Err(CliError::Config("missing schema_version".into()));
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if !(self.bands.nu_max_thz > self.bands.nu_min_thz) || self.bands.points < 2 {
            return bad("bands needs nu_max_thz > nu_min_thz and at least 2 points");
        }
        if !(self.spectrum.detuning_max_mhz > self.spectrum.detuning_min_mhz) || self.spectrum.points < 2 {
            return bad("spectrum needs detuning_max_mhz > detuning_min_mhz and at least 2 points");
        }
        if !(self.sweep.delta_be_max_ghz > self.sweep.delta_be_min_ghz) || self.sweep.points < 2 {
            return bad("sweep needs delta_be_max_ghz > delta_be_min_ghz and at least 2 points");
        }
        if !(self.synth.noise_rel >= 0.0) {
            return bad("synth.noise_rel must be >= 0");
        }
        if !(self.cqed.gamma_c_ghz > 0.0) {
            return bad("cqed.gamma_c_ghz must be > 0");
        }
        if self.decay.hold_points < 2 || !(self.decay.hold_step_ms > 0.0) || self.decay.time_points < 2 {
            return bad("decay needs at least 2 hold and time points and a positive hold step");
        }
        Ok(())
    }

    /// Rates as written in the config; Green's-function rates are resolved
    /// by the commands that own a stack.
    pub fn manual_rates(&self) -> Result<CouplingRates, CliError> {
        let r = &self.rates;
        Ok(CouplingRates::new(r.gamma_1d_gamma0, r.j_1d_gamma0, r.gamma_prime_gamma0, r.delta_0_mhz)?)
    }
}

/// Commented listing of every key with its default, itself a valid config.
pub const SCHEMA: &str = r#"# pcwqed run configuration. Units are part of each key name; rates
# without a unit suffix are in units of the free-space rate Γ0.
schema_version = 1          # required
seed = 20150401             # Monte Carlo positions and synthetic noise

[stack]
n_high = 1.8763
n_low = 1.6937
fill_fraction = 0.5         # high-index share of the lattice constant
a_nm = 370.0
n_cells = 150               # periodic cells
taper_cells = 20            # graded cells on each side
taper_power = 2.0           # taper weight ((k+1)/(taper_cells+1))^power
# cladding_index = 1.785    # default: mean of n_high and n_low
edge_search_min_thz = 200.0 # band-edge bisection range
edge_search_max_thz = 240.0

[bands]
nu_min_thz = 215.0
nu_max_thz = 240.0
points = 1001

[fields]
# nu_thz = 219.4567         # default: first resonance below the band edge
samples_per_layer = 4

[rates]
source = "manual"           # "manual" or "greens"
gamma_1d_gamma0 = 1.4
j_1d_gamma0 = 0.0
gamma_prime_gamma0 = 2.0
delta_0_mhz = 12.5
gamma_1d_tm_gamma0 = 0.045
gamma_ref_gamma0 = 1.5      # Green's scale: Γ_1D at the first resonance
# delta_be_ghz = 50.0       # Green's probe point; default: first resonance

[ensemble]
n_bar = 3.0
positions = "quadrature"    # "quadrature" or "monte_carlo"
quadrature_bins = 1000
mc_samples = 100000
coupling = "bright"         # "bright" or "exact" (exact needs monte_carlo)
spread_nm = 6000.0          # exact model: atoms uniform in ±spread
# kappa_x_per_nm = 3.3e-5   # exact model; default: from the stack or 0

[spectrum]
polarization = "te"         # "te" or "tm"
detuning_min_mhz = -60.0
detuning_max_mhz = 40.0
points = 101

[synth]
noise_rel = 0.02            # Gaussian, units of the no-atom transmission

[sweep]
delta_be_min_ghz = -120.0   # used by rates and fig4
delta_be_max_ghz = 150.0
points = 55

[decay]
gamma_1d_gamma_prime = 1.4
lifetimes = 6.0             # curve length in units of 1/Γ′
time_points = 1201
hold_min_ms = 4.0
hold_step_ms = 8.0
hold_points = 12
tau_sr_ms = 16.0
gamma_sr_gamma_prime = 1.5
asymptote_gamma_prime = 2.12

[cqed]
gamma_c_ghz = 60.0
"#;
