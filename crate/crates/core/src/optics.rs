//! Lasers, air dispersion and confocal Fabry-Perot transfer cavities.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::*;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserModel {
    /// Nominal optical frequency, Hz.
    pub carrier_frequency: f64,
    /// Free-running (Lorentzian) linewidth, Hz.
    pub free_run_linewidth: f64,
    /// Phase modulation frequency used for PDH / FM spectroscopy, Hz.
    pub modulation_frequency: f64,
    pub modulation_index: f64,
    /// Current actuator offset from the carrier, Hz.
    pub tunable_offset: f64,
}

impl LaserModel {
    pub fn from_wavelength(wavelength: f64) -> Self {
        Self {
            carrier_frequency: SPEED_OF_LIGHT / wavelength,
            free_run_linewidth: 1e6,
            modulation_frequency: 20e6,
            modulation_index: 0.5,
            tunable_offset: 0.0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_frequency > 0.0) {
            return Err(Error::InvalidModel("laser carrier frequency must be positive".into()));
        }
        if !(self.modulation_frequency > 0.0) {
            return Err(Error::InvalidModel("modulation frequency must be positive".into()));
        }
        if !(self.modulation_index >= 0.0) {
            return Err(Error::InvalidModel("modulation index must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirState {
    /// Pa
    pub pressure: f64,
    /// °C
    pub temperature: f64,
}

impl AirState {
    pub const VACUUM: AirState = AirState { pressure: 0.0, temperature: STANDARD_TEMPERATURE };

    pub fn standard() -> Self {
        Self { pressure: STANDARD_PRESSURE, temperature: STANDARD_TEMPERATURE }
    }
}

impl Default for AirState {
    fn default() -> Self {
        Self::standard()
    }
}

/// Refractivity `n - 1` of dry air.
///
/// Edlén dispersion of standard air, scaled linearly with pressure and by the
/// ideal-gas density ratio for temperature.
pub fn refractivity(wavelength: f64, air: &AirState) -> Result<f64> {
    if !(wavelength > 300e-9 && wavelength < 2000e-9) {
        return Err(Error::Domain(format!(
            "wavelength {wavelength:e} m outside the 300-2000 nm validity range"
        )));
    }
    if !(air.pressure >= 0.0) {
        return Err(Error::Domain("air pressure must be non-negative".into()));
    }
    let sigma2 = (1e-6 / wavelength).powi(2);
    let standard =
        (EDLEN_A + EDLEN_B / (EDLEN_C - sigma2) + EDLEN_D / (EDLEN_E - sigma2)) * 1e-8;
    let density = (air.pressure / STANDARD_PRESSURE)
        * (STANDARD_TEMPERATURE + ZERO_CELSIUS)
        / (air.temperature + ZERO_CELSIUS);
    Ok(standard * density)
}

/// Confocal Fabry-Perot cavity with lossless, identical mirrors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityModel {
    /// Mirror separation at the reference temperature with 0 V on the piezo, m.
    pub geometric_length: f64,
    pub finesse: f64,
    /// Length change per degree, m/°C.
    pub thermal_expansion: f64,
    /// m/V
    pub piezo_gain: f64,
    /// Symmetric actuator range, V.
    pub piezo_voltage_limit: f64,
    /// Hz
    pub piezo_resonance: f64,
    /// Temperature at which `geometric_length` holds, °C.
    pub reference_temperature: f64,
    pub air: AirState,
}

impl Default for CavityModel {
    fn default() -> Self {
        Self {
            geometric_length: 0.15,
            finesse: 270.0,
            thermal_expansion: 3.5e-6,
            piezo_gain: 2.5e-6 / 20.0,
            piezo_voltage_limit: 10.0,
            piezo_resonance: 3e3,
            reference_temperature: 25.0,
            air: AirState::standard(),
        }
    }
}

/// Which longitudinal mode `resonance_frequency` should report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeIndex {
    Index(u64),
    /// The mode closest to the given optical frequency.
    Nearest(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub mode: u64,
    pub frequency: f64,
}

impl CavityModel {
    /// Builds a cavity whose finesse follows from the mirror intensity
    /// reflectivity `R` as `pi sqrt(R) / (1 - R)`.
    pub fn with_reflectivity(mut self, reflectivity: f64) -> Result<Self> {
        if !(reflectivity > 0.0 && reflectivity < 1.0) {
            return Err(Error::InvalidModel("mirror reflectivity must lie in (0, 1)".into()));
        }
        self.finesse = PI * reflectivity.sqrt() / (1.0 - reflectivity);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.geometric_length > 0.0) {
            return Err(Error::InvalidModel("cavity length must be positive".into()));
        }
        if !(self.finesse > 0.0) {
            return Err(Error::InvalidModel("finesse must be positive".into()));
        }
        if !(self.piezo_voltage_limit > 0.0) {
            return Err(Error::InvalidModel("piezo voltage limit must be positive".into()));
        }
        if !(self.piezo_resonance > 0.0) {
            return Err(Error::InvalidModel("piezo resonance must be positive".into()));
        }
        if !(self.air.pressure >= 0.0) {
            return Err(Error::InvalidModel("air pressure must be non-negative".into()));
        }
        Ok(())
    }

    /// Mirror amplitude reflectivity consistent with the finesse.
    pub fn amplitude_reflectivity(&self) -> f64 {
        // pi r / (1 - r^2) = F
        let a = PI / self.finesse;
        0.5 * (-a + (a * a + 4.0).sqrt())
    }

    /// Intensity reflectivity `R = r^2`.
    pub fn mirror_reflectivity(&self) -> f64 {
        self.amplitude_reflectivity().powi(2)
    }

    /// Mirror separation including thermal and piezo displacement.
    pub fn effective_length(&self, temperature: f64, piezo_displacement: f64) -> f64 {
        self.geometric_length
            + self.thermal_expansion * (temperature - self.reference_temperature)
            + piezo_displacement
    }

    /// Optical mode spacing `c / (4 n L)` of the confocal geometry.
    pub fn free_spectral_range(&self, wavelength: f64) -> Result<f64> {
        self.validate()?;
        let n = 1.0 + refractivity(wavelength, &self.air)?;
        Ok(confocal_fsr(self.geometric_length, n))
    }

    /// Free spectral range in vacuum.
    pub fn vacuum_free_spectral_range(&self) -> Result<f64> {
        self.validate()?;
        Ok(confocal_fsr(self.geometric_length, 1.0))
    }

    /// FWHM of the resonances, FSR / finesse.
    pub fn linewidth(&self, wavelength: f64) -> Result<f64> {
        Ok(self.free_spectral_range(wavelength)? / self.finesse)
    }

    /// Complex field reflection for light detuned from a resonance.
    ///
    /// `F = r (e^{i phi} - 1) / (1 - r^2 e^{i phi})`, `phi = 2 pi detuning / FSR`.
    pub fn reflection_coefficient(&self, detuning: f64, fsr: f64) -> Complex64 {
        reflection(self.amplitude_reflectivity(), 2.0 * PI * detuning / fsr)
    }

    /// Absolute resonance frequency of a longitudinal mode.
    ///
    /// Uses the exact `q c / (4 n L_eff)`; see [`CavityModel::resonance_shift`] for
    /// the first-order form used inside time-domain simulations.
    pub fn resonance_frequency(
        &self,
        mode: ModeIndex,
        piezo_voltage: f64,
        temperature: f64,
        air: &AirState,
        wavelength: f64,
    ) -> Result<Resonance> {
        self.validate()?;
        self.check_piezo(piezo_voltage)?;
        let n = 1.0 + refractivity(wavelength, air)?;
        let length = self.effective_length(temperature, self.piezo_gain * piezo_voltage);
        if !(length > 0.0) {
            return Err(Error::InvalidModel("effective cavity length must be positive".into()));
        }
        let fsr = confocal_fsr(length, n);
        let q = match mode {
            ModeIndex::Index(q) => q,
            ModeIndex::Nearest(nu) => (nu / fsr).round().max(1.0) as u64,
        };
        Ok(Resonance { mode: q, frequency: q as f64 * fsr })
    }

    pub fn check_piezo(&self, voltage: f64) -> Result<()> {
        if !(voltage.abs() <= self.piezo_voltage_limit) {
            return Err(Error::ActuatorSaturation { voltage, limit: self.piezo_voltage_limit });
        }
        Ok(())
    }

    /// First-order shift of a resonance near `frequency` for a length change
    /// `delta_length` and a refractivity change `delta_refractivity`.
    ///
    /// Affine in both arguments, so it is exact under superposition of actuators.
    pub fn resonance_shift(&self, frequency: f64, delta_length: f64, delta_refractivity: f64) -> f64 {
        -frequency * (delta_length / self.geometric_length + delta_refractivity)
    }

    /// Resonance shift per volt on the piezo (static), Hz/V.
    pub fn piezo_tuning(&self, frequency: f64) -> f64 {
        self.resonance_shift(frequency, self.piezo_gain, 0.0)
    }

    /// Resonance shift per degree, Hz/°C.
    pub fn thermal_tuning(&self, frequency: f64) -> f64 {
        self.resonance_shift(frequency, self.thermal_expansion, 0.0)
    }
}

pub(crate) fn confocal_fsr(length: f64, index: f64) -> f64 {
    SPEED_OF_LIGHT / (4.0 * index * length)
}

#[inline]
pub(crate) fn reflection(r: f64, phase: f64) -> Complex64 {
    let e = Complex64::from_polar(1.0, phase);
    r * (e - 1.0) / (1.0 - r * r * e)
}
