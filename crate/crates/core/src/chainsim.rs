//! Time-domain simulation of the transfer-lock chain:
//!
//! ```text
//! Cs FM error ──> locker 1 ──> cavity 1 piezo/heater
//! cavity 1 PDH ──> reference laser (852 nm)
//! transfer PDH (852) ──> locker 2 ──> transfer cavity piezo/heater
//! transfer PDH (slave) ──> slave laser ──> Rb FM monitor (out of loop)
//! ```
//!
//! All frequencies inside the loop are offsets (Hz) from the operating point
//! found by [`initialize_resonant`]; cavity resonances move with the
//! first-order (affine) model of [`CavityModel::resonance_shift`].

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constants::*;
use crate::discriminator::{
    cs_d2_f3_catalog, fm_spectroscopy_error, gauge_scan, optimal_demod_phase, rb_d1_catalog, zero_crossing,
    DemodConfig, Gauge, LineCatalog, PdhDiscriminator,
};
use crate::error::{Error, Result};
use crate::noise::NoiseGenerator;
pub use crate::noise::{generate_noise, NoiseSpec};
use crate::optics::{refractivity, AirState, CavityModel, LaserModel};
use crate::servo::{CavityLockerState, DiscretePiezo, LaserLockState, PiezoPlant, ThermalPlant};
use crate::trace::FrequencyTrace;

/// Lab air-pressure variation, common to both cavities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSpec {
    /// Amplitude of the daily sinusoid, Pa.
    pub daily_amplitude: f64,
    /// Phase of the daily sinusoid at t = 0, rad.
    #[serde(default)]
    pub daily_phase: f64,
    /// Diffusion of the pressure random walk, Pa^2/s.
    pub walk_level: f64,
    /// Optional step change.
    #[serde(default)]
    pub step: Option<PressureStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureStep {
    /// s
    pub time: f64,
    /// Pa
    pub size: f64,
    /// Duration of the linear ramp, s. Faster changes than the cavity lockers
    /// can follow throw the transfer cavity off its lock point.
    #[serde(default = "default_rise_time")]
    pub rise_time: f64,
}

fn default_rise_time() -> f64 {
    0.1
}

impl PressureSpec {
    pub const STILL: PressureSpec = PressureSpec { daily_amplitude: 0.0, daily_phase: 0.0, walk_level: 0.0, step: None };

    pub fn validate(&self) -> Result<()> {
        if !(self.daily_amplitude >= 0.0 && self.walk_level >= 0.0) {
            return Err(Error::Configuration("pressure amplitude and walk level must be non-negative".into()));
        }
        if let Some(s) = self.step {
            if !(s.rise_time >= 0.0 && s.time.is_finite() && s.size.is_finite()) {
                return Err(Error::Configuration("pressure step needs a finite time, size and rise time".into()));
            }
        }
        Ok(())
    }

    /// Deterministic part of the pressure excursion at time `t`.
    pub fn deterministic(&self, t: f64) -> f64 {
        let daily = self.daily_amplitude * ((TAU * t / DAY + self.daily_phase).sin() - self.daily_phase.sin());
        let step = match self.step {
            Some(s) if t >= s.time + s.rise_time => s.size,
            Some(s) if t > s.time => s.size * (t - s.time) / s.rise_time,
            _ => 0.0,
        };
        daily + step
    }
}

/// Electronics-referred white noise of each discriminator, expressed as an
/// equivalent white frequency-noise level (Hz^2/Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoise {
    pub cs: f64,
    pub reference_pdh: f64,
    pub transfer_pdh: f64,
    pub slave_pdh: f64,
    pub rb: f64,
}

impl SensorNoise {
    pub const SILENT: SensorNoise = SensorNoise { cs: 0.0, reference_pdh: 0.0, transfer_pdh: 0.0, slave_pdh: 0.0, rb: 0.0 };

    fn levels(&self) -> [f64; 5] {
        [self.cs, self.reference_pdh, self.transfer_pdh, self.slave_pdh, self.rb]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserNoise {
    pub reference: NoiseSpec,
    pub slave: NoiseSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    /// s
    pub time_constant: f64,
    /// °C/W
    pub gain: f64,
    /// °C
    pub ambient: f64,
}

/// Search space for [`initialize_resonant`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitializationBounds {
    /// °C
    pub temperature_min: f64,
    /// °C
    pub temperature_max: f64,
    /// Mechanical (coarse) mirror-spacing adjustment available on top of
    /// temperature tuning, ± m.
    pub coarse_length_range: f64,
    /// Largest accepted slave detuning from its mode, in cavity linewidths.
    pub tolerance: f64,
}

/// Result of [`initialize_resonant`]: cavity temperatures, modes and the
/// residual detunings (mode minus laser, Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    pub cavity1_temperature: f64,
    pub transfer_temperature: f64,
    pub cavity1_mode: u64,
    pub transfer_reference_mode: u64,
    pub transfer_slave_mode: u64,
    pub cavity1_detuning: f64,
    pub transfer_reference_detuning: f64,
    pub transfer_slave_detuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Its carrier is replaced by the Cs lock point; the rest is used as given.
    pub reference_laser: LaserModel,
    pub slave_laser: LaserModel,
    pub cavity1: CavityModel,
    pub transfer_cavity: CavityModel,
    /// [cavity 1, transfer cavity]
    pub lockers: [CavityLockerState; 2],
    /// [reference laser, slave laser]
    pub laser_locks: [LaserLockState; 2],
    pub piezo_damping: f64,
    pub thermal: ThermalConfig,
    pub noise: LaserNoise,
    pub sensors: SensorNoise,
    pub pressure: PressureSpec,
    /// Slope every discriminator is normalised to, V/Hz.
    pub discriminator_slope: f64,
    /// Overrides the built-in Cs D2 catalog.
    #[serde(default)]
    pub reference_catalog: Option<LineCatalog>,
    /// Overrides the built-in Rb D1 catalog.
    #[serde(default)]
    pub monitor_catalog: Option<LineCatalog>,
    pub initialization: InitializationBounds,
    /// Filled in by [`initialize_resonant`]; solved on the fly when absent.
    #[serde(default)]
    pub operating_point: Option<OperatingPoint>,
    /// s
    pub sim_step: f64,
    /// Update interval of the thermal plants and the pressure, s.
    pub slow_step: f64,
    /// s
    pub duration: f64,
    pub seed: u64,
}

/// Hz^2/Hz, tuned once so that the single-lock in-loop rms over 2 ms is 38 kHz.
pub const DEFAULT_LASER_SENSOR_LEVEL: f64 = 5.0e5;

impl Default for ChainConfig {
    fn default() -> Self {
        let dt = 10e-6;
        let locker = CavityLockerState::new(0.0, 10.0, 4e-4, 0.0, dt);
        let laser_lock = LaserLockState::with_bandwidth(30e3, 0.75);
        let laser_noise = NoiseSpec { white_fm: 1e4, flicker_fm: 0.0, random_walk_fm: 1e9, seed: 0 };
        let mut reference_laser = LaserModel::from_wavelength(CS_D2_WAVELENGTH);
        reference_laser.carrier_frequency = cs_d2_f3_catalog().catalog_origin;
        let mut slave_laser = LaserModel::from_wavelength(RB_D1_WAVELENGTH);
        slave_laser.carrier_frequency = rb_d1_catalog().catalog_origin;
        Self {
            reference_laser,
            slave_laser,
            cavity1: CavityModel::default(),
            transfer_cavity: CavityModel::default(),
            lockers: [locker, locker],
            laser_locks: [laser_lock, laser_lock],
            piezo_damping: 0.3,
            thermal: ThermalConfig { time_constant: 30.0, gain: 2.0, ambient: 20.0 },
            noise: LaserNoise { reference: laser_noise, slave: laser_noise },
            sensors: SensorNoise {
                cs: 2e4,
                reference_pdh: DEFAULT_LASER_SENSOR_LEVEL,
                transfer_pdh: 2e4,
                slave_pdh: DEFAULT_LASER_SENSOR_LEVEL,
                rb: 2e3,
            },
            pressure: PressureSpec { daily_amplitude: 100.0, daily_phase: 0.0, walk_level: 1.0, step: None },
            discriminator_slope: 1e-6,
            reference_catalog: None,
            monitor_catalog: None,
            initialization: InitializationBounds {
                temperature_min: 22.0,
                temperature_max: 38.0,
                coarse_length_range: 1e-3,
                tolerance: 0.1,
            },
            operating_point: None,
            sim_step: dt,
            slow_step: 10e-3,
            duration: 0.2,
            seed: 1,
        }
    }
}

impl ChainConfig {
    /// The same chain with every stochastic source switched off.
    pub fn silent(&self) -> Self {
        let mut c = self.clone();
        c.noise = LaserNoise { reference: NoiseSpec::SILENT, slave: NoiseSpec::SILENT };
        c.sensors = SensorNoise::SILENT;
        c.pressure = PressureSpec::STILL;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: &str| Err(Error::Configuration(m.to_string()));
        self.reference_laser.validate()?;
        self.slave_laser.validate()?;
        self.cavity1.validate()?;
        self.transfer_cavity.validate()?;
        for l in &self.lockers {
            l.validate()?;
        }
        for l in &self.laser_locks {
            l.validate()?;
        }
        self.noise.reference.validate()?;
        self.noise.slave.validate()?;
        self.pressure.validate()?;
        if self.sensors.levels().iter().any(|&h| !(h >= 0.0 && h.is_finite())) {
            return cfg("sensor noise levels must be finite and non-negative");
        }
        if !(self.sim_step > 0.0 && self.sim_step.is_finite()) {
            return cfg("sim_step must be positive");
        }
        if !(self.duration >= self.sim_step) {
            return cfg("duration must be at least one sim_step");
        }
        if !(self.slow_step >= self.sim_step) {
            return cfg("slow_step must be at least one sim_step");
        }
        if !(self.piezo_damping > 0.0) {
            return cfg("piezo damping must be positive");
        }
        if !(self.thermal.time_constant > 0.0 && self.thermal.gain > 0.0) {
            return cfg("thermal time constant and gain must be positive");
        }
        if !(self.discriminator_slope > 0.0) {
            return cfg("discriminator slope must be positive");
        }
        let b = &self.initialization;
        if !(b.temperature_min <= b.temperature_max) {
            return cfg("initialization temperature bounds are reversed");
        }
        if !(b.coarse_length_range >= 0.0 && b.tolerance > 0.0) {
            return cfg("initialization coarse range must be non-negative and tolerance positive");
        }
        if let Some(c) = &self.reference_catalog {
            c.validate()?;
        }
        if let Some(c) = &self.monitor_catalog {
            c.validate()?;
        }
        Ok(())
    }

    pub fn reference_catalog(&self) -> LineCatalog {
        self.reference_catalog.clone().unwrap_or_else(cs_d2_f3_catalog)
    }

    pub fn monitor_catalog(&self) -> LineCatalog {
        self.monitor_catalog.clone().unwrap_or_else(rb_d1_catalog)
    }

    fn steps(&self, seconds: f64) -> usize {
        ((seconds / self.sim_step).round() as usize).max(1)
    }
}

/// Uniformly sampled copy of a smooth curve, read back with four-point
/// (cubic Lagrange) interpolation; `None` outside the sampled span.
struct Table {
    /// Grid index of x = 0, so that the origin is sampled exactly.
    origin: f64,
    inv_step: f64,
    /// Cubic through the four samples around each cell, `[y1, c1, c2, c3]`.
    cells: Vec<[f64; 4]>,
}

impl Table {
    fn new(f: impl Fn(f64) -> f64, span: f64, step: f64) -> Self {
        let m = (span / step).ceil() as usize + 1;
        let values: Vec<f64> = (0..=2 * m).map(|k| f((k as f64 - m as f64) * step)).collect();
        let cells = (0..values.len() - 2)
            .map(|i| {
                if i == 0 {
                    return [f64::NAN; 4];
                }
                let [y0, y1, y2, y3] = [values[i - 1], values[i], values[i + 1], values[i + 2]];
                let c1 = -y0 / 3.0 - 0.5 * y1 + y2 - y3 / 6.0;
                let c2 = 0.5 * (y0 + y2) - y1;
                let c3 = (y3 - y0) / 6.0 + 0.5 * (y1 - y2);
                [y1, c1, c2, c3]
            })
            .collect();
        Self { origin: m as f64, inv_step: 1.0 / step, cells }
    }

    #[inline]
    fn eval(&self, x: f64) -> Option<f64> {
        let u = x * self.inv_step + self.origin;
        // truncation is floor here; f64::floor is a libm call without SSE4.1
        if !(u >= 1.0) {
            return None;
        }
        let i = u as usize;
        let [y1, c1, c2, c3] = *self.cells.get(i)?;
        let t = u - i as f64;
        Some(y1 + t * (c1 + t * (c2 + t * c3)))
    }
}

/// An FM discriminator scaled to a fixed slope and centred on its zero crossing.
struct FmLock {
    catalog: LineCatalog,
    demod: DemodConfig,
    /// Zero crossing, Hz from the catalog origin.
    zero: f64,
    scale: f64,
    /// Signed slope after scaling, V/Hz.
    slope: f64,
    /// Residual signal at the bisected zero, nulled like an electronic offset.
    offset: f64,
    table: Table,
}

impl FmLock {
    fn new(catalog: &LineCatalog, modulation: f64, volts_per_hz: f64) -> Result<Self> {
        let reference = catalog.reference_line();
        let hwhm = 0.5 * reference.natural_width * catalog.dip_broadening;
        let local = catalog.local(0.0, 250e6 + 2.0 * modulation);
        let (phase, _) = optimal_demod_phase(&local, 0.0, modulation);
        let demod = DemodConfig { modulation_frequency: modulation, demod_phase: phase, lowpass_bandwidth: 5e6 };
        let f = |nu: f64| fm_spectroscopy_error(&local, nu, &demod);
        let zero = zero_crossing(f, -0.5 * hwhm, 0.5 * hwhm)
            .ok_or_else(|| Error::InvalidModel(format!("no zero crossing near the {} reference", catalog.name)))?;
        let h = 1e-3 * hwhm;
        let raw_slope = (f(zero + h) - f(zero - h)) / (2.0 * h);
        let scale = volts_per_hz / raw_slope.abs();
        let offset = scale * f(zero);
        let table = Table::new(|d| scale * f(zero + d) - offset, modulation + 6.0 * hwhm, hwhm / 256.0);
        Ok(Self { catalog: local, demod, zero, scale, slope: scale * raw_slope, offset, table })
    }

    fn exact(&self, detuning: f64) -> f64 {
        self.scale * fm_spectroscopy_error(&self.catalog, self.zero + detuning, &self.demod) - self.offset
    }

    #[inline]
    fn signal(&self, detuning: f64) -> f64 {
        self.table.eval(detuning).unwrap_or_else(|| self.exact(detuning))
    }
}

struct PdhLock {
    disc: PdhDiscriminator,
    scale: f64,
    slope: f64,
    offset: f64,
    table: Table,
}

impl PdhLock {
    fn new(cavity: &CavityModel, wavelength: f64, modulation: f64, volts_per_hz: f64) -> Result<Self> {
        let fsr = cavity.free_spectral_range(wavelength)?;
        let linewidth = fsr / cavity.finesse;
        let demod = DemodConfig { modulation_frequency: modulation, demod_phase: 0.0, lowpass_bandwidth: 5e6 };
        let disc = PdhDiscriminator::new(cavity, fsr, &demod);
        let raw = disc.central_slope();
        let scale = volts_per_hz / raw.abs();
        let offset = scale * disc.error(0.0);
        let table = Table::new(|d| scale * disc.error(d) - offset, modulation + 10.0 * linewidth, linewidth / 512.0);
        Ok(Self { disc, scale, slope: scale * raw, offset, table })
    }

    fn exact(&self, detuning: f64) -> f64 {
        self.scale * self.disc.error(detuning) - self.offset
    }

    #[inline]
    fn signal(&self, detuning: f64) -> f64 {
        self.table.eval(detuning).unwrap_or_else(|| self.exact(detuning))
    }
}

/// Solves one cavity's temperature (and coarse length if needed) so that the
/// first target sits exactly on a mode and the others as close as possible.
fn solve_cavity(
    cavity: &CavityModel,
    bounds: &InitializationBounds,
    targets: &[(f64, f64)],
) -> Result<(CavityModel, f64, Vec<u64>, Vec<f64>)> {
    let index = |wavelength: f64| -> Result<f64> { Ok(1.0 + refractivity(wavelength, &cavity.air)?) };
    let (nu0, n0) = (targets[0].0, index(targets[0].1)?);
    let others: Vec<(f64, f64)> = targets[1..]
        .iter()
        .map(|&(nu, wl)| Ok((nu, index(wl)?)))
        .collect::<Result<_>>()?;
    let alpha = cavity.thermal_expansion;
    let l_ref = cavity.geometric_length;
    let t_ref = cavity.reference_temperature;
    let l_lo = l_ref + alpha * (bounds.temperature_min - t_ref) - bounds.coarse_length_range;
    let l_hi = l_ref + alpha * (bounds.temperature_max - t_ref) + bounds.coarse_length_range;
    let length_of = |q: f64| q * SPEED_OF_LIGHT / (4.0 * n0 * nu0);
    let q_lo = (l_lo * 4.0 * n0 * nu0 / SPEED_OF_LIGHT).ceil().max(1.0) as u64;
    let q_hi = (l_hi * 4.0 * n0 * nu0 / SPEED_OF_LIGHT).floor() as u64;
    let detunings = |length: f64| -> (Vec<u64>, Vec<f64>) {
        others
            .iter()
            .map(|&(nu, n)| {
                let fsr = SPEED_OF_LIGHT / (4.0 * n * length);
                let q = (nu / fsr).round().max(1.0);
                (q as u64, q * fsr - nu)
            })
            .unzip()
    };
    let linewidth = |length: f64, n: f64| SPEED_OF_LIGHT / (4.0 * n * length) / cavity.finesse;
    let worst = |d: &[f64]| d.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut best: Option<(u64, f64)> = None;
    for q in q_lo..=q_hi.max(q_lo.saturating_sub(1)) {
        if q > q_hi {
            break;
        }
        let (_, d) = detunings(length_of(q as f64));
        let score = worst(&d);
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((q, score));
        }
    }
    let tolerance_for = |length: f64| {
        others.iter().map(|&(_, n)| linewidth(length, n)).fold(f64::INFINITY, f64::min) * bounds.tolerance
    };
    let Some((q0, score)) = best else {
        // No mode of the first target is reachable: report how far it stays off.
        let fsr = SPEED_OF_LIGHT / (4.0 * n0 * l_ref);
        let off = nu0 - (nu0 / fsr).round() * fsr;
        let (_, d) = detunings(l_ref);
        return Err(Error::Initialization {
            nearest_detuning: off.abs().max(worst(&d)),
            tolerance: tolerance_for(l_ref).min(bounds.tolerance * fsr / cavity.finesse),
        });
    };
    let length = length_of(q0 as f64);
    if score > tolerance_for(length) {
        return Err(Error::Initialization { nearest_detuning: score, tolerance: tolerance_for(length) });
    }
    let temperature = if alpha != 0.0 {
        (t_ref + (length - l_ref) / alpha).clamp(bounds.temperature_min, bounds.temperature_max)
    } else {
        t_ref
    };
    let coarse = length - l_ref - alpha * (temperature - t_ref);
    let solved = CavityModel { geometric_length: l_ref + coarse, ..*cavity };
    // report the detunings from the exact model
    let mut modes = vec![q0];
    let mut residual = vec![solved_detuning(&solved, q0, temperature, targets[0])?];
    let (qs, _) = detunings(length);
    for (&q, &target) in qs.iter().zip(&targets[1..]) {
        modes.push(q);
        residual.push(solved_detuning(&solved, q, temperature, target)?);
    }
    Ok((solved, temperature, modes, residual))
}

fn solved_detuning(cavity: &CavityModel, mode: u64, temperature: f64, (nu, wavelength): (f64, f64)) -> Result<f64> {
    let r = cavity.resonance_frequency(
        crate::optics::ModeIndex::Index(mode),
        0.0,
        temperature,
        &cavity.air,
        wavelength,
    )?;
    Ok(r.frequency - nu)
}

/// Absolute frequencies at which the reference and slave lasers operate.
fn operating_frequencies(config: &ChainConfig) -> Result<(f64, f64)> {
    let cs = config.reference_catalog();
    let lock = FmLock::new(&cs, config.reference_laser.modulation_frequency, config.discriminator_slope)?;
    let reference = cs.catalog_origin + lock.zero;
    if (reference - config.reference_laser.carrier_frequency).abs() > cs.doppler_fwhm {
        log::warn!(
            "reference laser carrier {:.6e} Hz is far from the Cs lock point {:.6e} Hz; using the lock point",
            config.reference_laser.carrier_frequency,
            reference
        );
    }
    Ok((reference, config.slave_laser.carrier_frequency))
}

/// Tunes both cavities so that the reference laser is on a mode of each and
/// the slave laser within the configured tolerance of a transfer-cavity mode.
///
/// Temperature is used first; the coarse length adjustment only takes up what
/// the temperature range cannot reach.
pub fn initialize_resonant(config: &ChainConfig) -> Result<ChainConfig> {
    config.validate()?;
    let (nu_r, nu_s) = operating_frequencies(config)?;
    let wl_r = SPEED_OF_LIGHT / nu_r;
    let wl_s = SPEED_OF_LIGHT / nu_s;
    let (cavity1, t1, m1, d1) = solve_cavity(&config.cavity1, &config.initialization, &[(nu_r, wl_r)])?;
    let (transfer, t2, m2, d2) =
        solve_cavity(&config.transfer_cavity, &config.initialization, &[(nu_r, wl_r), (nu_s, wl_s)])?;
    let mut out = config.clone();
    out.cavity1 = cavity1;
    out.transfer_cavity = transfer;
    out.operating_point = Some(OperatingPoint {
        cavity1_temperature: t1,
        transfer_temperature: t2,
        cavity1_mode: m1[0],
        transfer_reference_mode: m2[0],
        transfer_slave_mode: m2[1],
        cavity1_detuning: d1[0],
        transfer_reference_detuning: d2[0],
        transfer_slave_detuning: d2[1],
    });
    Ok(out)
}

/// Slave-laser shift per pascal predicted from air dispersion alone, Hz/Pa.
///
/// The transfer cavity holds the reference wavelength on resonance, so a
/// pressure change moves the slave resonance by `nu_s (dn_ref - dn_slave)`.
pub fn dispersion_shift(
    reference_wavelength: f64,
    slave_wavelength: f64,
    air: &AirState,
    pressure_change: f64,
) -> Result<f64> {
    let after = AirState { pressure: air.pressure + pressure_change, ..*air };
    let dn_ref = refractivity(reference_wavelength, &after)? - refractivity(reference_wavelength, air)?;
    let dn_slave = refractivity(slave_wavelength, &after)? - refractivity(slave_wavelength, air)?;
    Ok(SPEED_OF_LIGHT / slave_wavelength * (dn_ref - dn_slave))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockLoss {
    pub stage: String,
    /// Time at which the error had been outside the capture range for 10 ms, s.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub operating_point: OperatingPoint,
    /// Absolute frequency of the reference lock point, Hz.
    pub reference_frequency: f64,
    /// Absolute frequency of the slave's transfer-cavity mode, Hz.
    pub slave_frequency: f64,
    /// AOM shift between slave and the Rb reference zero crossing, Hz.
    pub aom_offset: f64,
    pub cs_demod_phase: f64,
    pub rb_demod_phase: f64,
    /// Linear fit of the Rb error over ±2 MHz, used to convert it to Hz.
    pub rb_gauge: Gauge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub traces: Vec<FrequencyTrace>,
    pub lock_losses: Vec<LockLoss>,
    pub metadata: RunMetadata,
}

impl TraceSet {
    pub fn get(&self, label: &str) -> Option<&FrequencyTrace> {
        self.traces.iter().find(|t| t.label == label)
    }

    /// Like [`TraceSet::get`], for labels that every run produces.
    pub fn trace(&self, label: &str) -> &FrequencyTrace {
        self.get(label).unwrap_or_else(|| panic!("trace '{label}' not recorded"))
    }

    pub fn lock_lost(&self) -> bool {
        !self.lock_losses.is_empty()
    }
}

/// Labels and units of the recorded traces, in [`ChainSample`] order.
pub const TRACE_LABELS: [(&str, &str); 12] = [
    ("cs_lock_error", "Hz"),
    ("reference_lock_error", "Hz"),
    ("transfer_lock_error", "Hz"),
    ("slave_lock_error", "Hz"),
    ("out_of_loop", "Hz"),
    ("reference_frequency", "Hz"),
    ("slave_frequency", "Hz"),
    ("piezo1", "V"),
    ("piezo2", "V"),
    ("heater1", "W"),
    ("heater2", "W"),
    ("pressure", "Pa"),
];

const STAGES: [&str; 5] = ["cs", "reference", "transfer", "slave", "rb"];

/// One step of every recorded quantity.
#[derive(Debug, Clone, Copy, Default)]
struct ChainSample([f64; 12]);

/// Complete simulation state of the chain.
struct Chain {
    dt: f64,
    slow_every: usize,
    slow_dt: f64,
    step_index: usize,

    cs: FmLock,
    rb: FmLock,
    rb_gauge: Gauge,
    pdh1: PdhLock,
    pdh2: PdhLock,
    pdh_slave: PdhLock,

    reference_noise: NoiseGenerator,
    slave_noise: NoiseGenerator,
    /// Independent streams: laser noise (2), sensors (5), pressure walk.
    rngs: [Xoshiro256PlusPlus; 8],
    sensor_sigma: [f64; 5],

    lockers: [CavityLockerState; 2],
    polarity: [f64; 2],
    piezos: [PiezoPlant; 2],
    piezo_steppers: [DiscretePiezo; 2],
    thermals: [ThermalPlant; 2],
    operating_temperature: [f64; 2],
    expansion: [f64; 2],
    laser_locks: [LaserLockState; 2],

    /// Hz per metre of length change, per resonance (cavity 1, transfer @ ref, transfer @ slave)
    length_tuning: [f64; 3],
    slave_mode_offset: f64,
    nu_ref: f64,
    nu_slave: f64,
    wavelengths: (f64, f64),
    air: AirState,
    refractivity0: (f64, f64),
    /// Pressure offset and refractivity changes (ref, slave) at the start and
    /// end of the current slow interval; both are interpolated linearly in between.
    pressure_knots: [(f64, (f64, f64)); 2],
    delta_n: (f64, f64),
    pressure: PressureSpec,
    pressure_walk: f64,
    walk_sigma: f64,
    pressure_offset: f64,

    capture: [f64; 5],
    out_of_capture: [usize; 5],
    lock_losses: Vec<LockLoss>,
    metadata: RunMetadata,
}

impl Chain {
    fn new(config: &ChainConfig) -> Result<Self> {
        let config = match config.operating_point {
            Some(_) => {
                config.validate()?;
                config.clone()
            }
            None => initialize_resonant(config)?,
        };
        let op = config.operating_point.expect("operating point set");
        let dt = config.sim_step;
        let (nu_ref, nu_slave_nominal) = operating_frequencies(&config)?;
        let nu_slave = nu_slave_nominal + op.transfer_slave_detuning;
        let wl_ref = SPEED_OF_LIGHT / nu_ref;
        let wl_slave = SPEED_OF_LIGHT / nu_slave;

        let mod_ref = config.reference_laser.modulation_frequency;
        let mod_slave = config.slave_laser.modulation_frequency;
        let cs = FmLock::new(&config.reference_catalog(), mod_ref, config.discriminator_slope)?;
        let rb_catalog = config.monitor_catalog();
        let rb = FmLock::new(&rb_catalog, mod_slave, config.discriminator_slope)?;
        // gauge the monitor the way it is done on the bench: linear fit over ±2 MHz
        let rb_gauge = gauge_scan(|nu| rb.signal(nu), 0.0, 2e6, 41)?;

        let pdh1 = PdhLock::new(&config.cavity1, wl_ref, mod_ref, config.discriminator_slope)?;
        let pdh2 = PdhLock::new(&config.transfer_cavity, wl_ref, mod_ref, config.discriminator_slope)?;
        let pdh_slave = PdhLock::new(&config.transfer_cavity, wl_slave, mod_slave, config.discriminator_slope)?;

        // each stream starts 2^128 draws after the previous one
        let mut base = Xoshiro256PlusPlus::seed_from_u64(config.seed);
        let mut rngs: [Xoshiro256PlusPlus; 8] = std::array::from_fn(|_| {
            base.jump();
            base.clone()
        });
        let lowest = 1.0 / config.duration.max(dt);
        let reference_noise = NoiseGenerator::new(&config.noise.reference, dt, lowest, &mut rngs[0]);
        let slave_noise = NoiseGenerator::new(&config.noise.slave, dt, lowest, &mut rngs[1]);
        let slopes = [cs.slope, pdh1.slope, pdh2.slope, pdh_slave.slope, rb.slope];
        let levels = config.sensors.levels();
        let mut sensor_sigma = [0.0; 5];
        for k in 0..5 {
            sensor_sigma[k] = (levels[k] / (2.0 * dt)).sqrt() * slopes[k].abs();
        }

        let cavities = [&config.cavity1, &config.transfer_cavity];
        let temps = [op.cavity1_temperature, op.transfer_temperature];
        let mut lockers = config.lockers;
        let mut thermals = [ThermalPlant::at_equilibrium(1.0, 1.0, 0.0, 0.0); 2];
        let mut piezos = [PiezoPlant::new(1.0, 1.0, 0.0); 2];
        let mut piezo_steppers = Vec::new();
        let mut polarity = [1.0; 2];
        for k in 0..2 {
            let th = &config.thermal;
            let bias = (temps[k] - th.ambient) / th.gain;
            let locker = &mut lockers[k];
            if !(bias >= 0.0 && bias <= locker.heater_compensator.max_power) {
                return Err(Error::Configuration(format!(
                    "cavity {} needs {bias:.3} W of heating to hold {:.3} °C, outside 0..{} W",
                    k + 1,
                    temps[k],
                    locker.heater_compensator.max_power
                )));
            }
            locker.heater_output = bias;
            locker.piezo_limit = cavities[k].piezo_voltage_limit;
            locker.sample_interval = dt;
            locker.piezo_compensator.integrator = 0.0;
            locker.piezo_output = 0.0;
            thermals[k] = ThermalPlant { time_constant: th.time_constant, gain: th.gain, ambient: th.ambient, temperature: 0.0 };
            thermals[k].temperature = th.ambient + th.gain * bias;
            let plant = PiezoPlant::new(cavities[k].piezo_resonance, config.piezo_damping, cavities[k].piezo_gain);
            piezo_steppers.push(plant.discretize(dt)?);
            piezos[k] = plant;
            // Orient each error so that a positive locker output raises it.
            // The transfer error is PDH(laser - resonance); the Cs error sees
            // cavity 1's resonance directly because the reference laser follows it.
            let tuning = cavities[k].piezo_tuning(nu_ref);
            polarity[k] = if k == 0 { -(cs.slope * tuning).signum() } else { (pdh2.slope * tuning).signum() };
        }
        let operating_temperature = [thermals[0].temperature, thermals[1].temperature];
        let mut laser_locks = config.laser_locks;
        for l in &mut laser_locks {
            l.integrator = 0.0;
            l.correction = 0.0;
        }
        // the slave starts on its mode
        laser_locks[1].integrator = op.transfer_slave_detuning;
        laser_locks[1].correction = op.transfer_slave_detuning;

        let length_tuning = [
            -nu_ref / config.cavity1.geometric_length,
            -nu_ref / config.transfer_cavity.geometric_length,
            -nu_slave / config.transfer_cavity.geometric_length,
        ];
        let air = config.transfer_cavity.air;
        let refractivity0 = (refractivity(wl_ref, &air)?, refractivity(wl_slave, &air)?);

        let slow_every = ((config.slow_step / dt).round() as usize).max(1);
        let slow_dt = slow_every as f64 * dt;
        let capture = [
            0.5 * cs.catalog.reference_line().natural_width * cs.catalog.dip_broadening,
            config.cavity1.linewidth(wl_ref)?,
            config.transfer_cavity.linewidth(wl_ref)?,
            config.transfer_cavity.linewidth(wl_slave)?,
            0.5 * rb.catalog.reference_line().natural_width * rb.catalog.dip_broadening,
        ];
        let metadata = RunMetadata {
            operating_point: op,
            reference_frequency: nu_ref,
            slave_frequency: nu_slave,
            aom_offset: rb_catalog.catalog_origin + rb.zero - nu_slave,
            cs_demod_phase: cs.demod.demod_phase,
            rb_demod_phase: rb.demod.demod_phase,
            rb_gauge,
        };
        Ok(Self {
            dt,
            slow_every,
            slow_dt,
            step_index: 0,
            cs,
            rb,
            rb_gauge,
            pdh1,
            pdh2,
            pdh_slave,
            reference_noise,
            slave_noise,
            rngs,
            sensor_sigma,
            lockers,
            polarity,
            piezos,
            piezo_steppers: [piezo_steppers[0], piezo_steppers[1]],
            thermals,
            operating_temperature,
            expansion: [config.cavity1.thermal_expansion, config.transfer_cavity.thermal_expansion],
            laser_locks,
            length_tuning,
            slave_mode_offset: op.transfer_slave_detuning,
            nu_ref,
            nu_slave,
            wavelengths: (wl_ref, wl_slave),
            air,
            refractivity0,
            pressure_knots: [(0.0, (0.0, 0.0)); 2],
            delta_n: (0.0, 0.0),
            pressure: config.pressure,
            pressure_walk: 0.0,
            walk_sigma: (config.pressure.walk_level * slow_dt).sqrt(),
            pressure_offset: 0.0,
            capture,
            out_of_capture: [0; 5],
            lock_losses: Vec::new(),
            metadata,
        })
    }

    #[inline]
    fn sensor(&mut self, k: usize) -> f64 {
        let s = self.sensor_sigma[k];
        if s == 0.0 {
            0.0
        } else {
            s * self.rngs[2 + k].sample::<f64, _>(StandardNormal)
        }
    }

    fn set_slow_step(&mut self, slow_step: f64) {
        self.slow_every = ((slow_step / self.dt).round() as usize).max(1);
        self.slow_dt = self.slow_every as f64 * self.dt;
        self.walk_sigma = (self.pressure.walk_level * self.slow_dt).sqrt();
    }

    /// Advances the thermal plants by one slow interval and sets the pressure
    /// target for the end of the next one.
    fn slow_update(&mut self) -> Result<()> {
        if self.step_index > 0 {
            for k in 0..2 {
                self.thermals[k].step(self.lockers[k].heater_output, self.slow_dt);
            }
        }
        let t_end = self.step_index as f64 * self.dt + self.slow_dt;
        if self.walk_sigma > 0.0 {
            self.pressure_walk += self.walk_sigma * self.rngs[7].sample::<f64, _>(StandardNormal);
        }
        let target = self.pressure.deterministic(t_end) + self.pressure_walk;
        let previous = self.pressure_knots[1];
        let delta_n = if target == previous.0 {
            previous.1
        } else {
            let air = AirState { pressure: self.air.pressure + target, ..self.air };
            (
                refractivity(self.wavelengths.0, &air)? - self.refractivity0.0,
                refractivity(self.wavelengths.1, &air)? - self.refractivity0.1,
            )
        };
        self.pressure_knots = [previous, (target, delta_n)];
        Ok(())
    }

    #[inline]
    fn step(&mut self) -> Result<ChainSample> {
        let phase = self.step_index % self.slow_every;
        if phase == 0 {
            self.slow_update()?;
        }
        let [(p0, n0), (p1, n1)] = self.pressure_knots;
        if p0 != p1 {
            let f = phase as f64 / self.slow_every as f64;
            self.pressure_offset = p0 + f * (p1 - p0);
            self.delta_n = (n0.0 + f * (n1.0 - n0.0), n0.1 + f * (n1.1 - n0.1));
        } else {
            self.pressure_offset = p0;
            self.delta_n = n0;
        }
        let dt = self.dt;
        let n_ref = self.reference_noise.sample(&mut self.rngs[0]);
        let n_slave = self.slave_noise.sample(&mut self.rngs[1]);
        let nu_r = n_ref + self.laser_locks[0].correction;
        let nu_s = n_slave + self.laser_locks[1].correction;

        let length = |k: usize, chain: &Chain| {
            chain.piezos[k].position
                + chain.expansion[k] * (chain.thermals[k].temperature - chain.operating_temperature[k])
        };
        let (l1, l2) = (length(0, self), length(1, self));
        let r1 = self.length_tuning[0] * l1 - self.nu_ref * self.delta_n.0;
        let r2 = self.length_tuning[1] * l2 - self.nu_ref * self.delta_n.0;
        let r2_slave = self.slave_mode_offset + self.length_tuning[2] * l2 - self.nu_slave * self.delta_n.1;

        let e_cs = self.cs.signal(nu_r) + self.sensor(0);
        let e_1 = self.pdh1.signal(nu_r - r1) + self.sensor(1);
        let e_2 = self.pdh2.signal(nu_r - r2) + self.sensor(2);
        let e_s = self.pdh_slave.signal(nu_s - r2_slave) + self.sensor(3);
        let e_rb = self.rb.signal(nu_s - self.slave_mode_offset) + self.sensor(4);

        // fast laser locks
        let before = [self.laser_locks[0].correction, self.laser_locks[1].correction];
        let c_r = self.laser_locks[0].step(e_1, self.pdh1.slope, dt)?;
        let c_s = self.laser_locks[1].step(e_s, self.pdh_slave.slope, dt)?;
        let reference_error = e_1 / self.pdh1.slope + (c_r - before[0]);
        let slave_error = e_s / self.pdh_slave.slope + (c_s - before[1]);

        // cavity lockers
        let mut piezo_out = [0.0; 2];
        for (k, e) in [e_cs, e_2].into_iter().enumerate() {
            let out = self.lockers[k].step(self.polarity[k] * e, dt)?;
            piezo_out[k] = out.piezo_command;
            self.piezo_steppers[k].step(&mut self.piezos[k], out.piezo_command);
        }

        let errors_hz = [
            e_cs / self.cs.slope,
            reference_error,
            e_2 / self.pdh2.slope,
            slave_error,
            e_rb / self.rb_gauge.slope,
        ];
        let limit = (0.01 / dt + 0.5) as usize;
        for k in 0..5 {
            if errors_hz[k].abs() > self.capture[k] {
                self.out_of_capture[k] += 1;
                if self.out_of_capture[k] == limit {
                    let time = self.step_index as f64 * dt;
                    log::warn!("lock loss in the {} stage at t = {time:.4} s", STAGES[k]);
                    self.lock_losses.push(LockLoss { stage: STAGES[k].to_string(), time });
                }
            } else {
                self.out_of_capture[k] = 0;
            }
        }
        self.step_index += 1;
        Ok(ChainSample([
            errors_hz[0],
            errors_hz[1],
            errors_hz[2],
            errors_hz[3],
            errors_hz[4],
            nu_r,
            nu_s - self.slave_mode_offset,
            piezo_out[0],
            piezo_out[1],
            self.lockers[0].heater_output,
            self.lockers[1].heater_output,
            self.pressure_offset,
        ]))
    }

    fn finish(self, traces: Vec<FrequencyTrace>) -> Result<TraceSet> {
        for t in &traces {
            t.validate()?;
        }
        Ok(TraceSet { traces, lock_losses: self.lock_losses, metadata: self.metadata })
    }
}

/// Runs the chain for `config.duration`, recording every step.
pub fn simulate_chain(config: &ChainConfig) -> Result<TraceSet> {
    let mut chain = Chain::new(config)?;
    let n = config.steps(config.duration);
    let mut columns: Vec<Vec<f64>> = (0..TRACE_LABELS.len()).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let s = chain.step()?;
        for (col, v) in columns.iter_mut().zip(s.0) {
            col.push(v);
        }
    }
    let traces = TRACE_LABELS
        .iter()
        .zip(columns)
        .map(|(&(label, unit), samples)| FrequencyTrace::new(label, unit, chain.dt, samples))
        .collect();
    chain.finish(traces)
}

/// Multi-rate run: the loops advance every `sim_step`, the thermal plants
/// and the pressure every `decimation`; every trace is reported as its exact
/// mean over consecutive `decimation` bins (no dead time).
pub fn long_term_run_traces(config: &ChainConfig, duration: f64, decimation: f64) -> Result<TraceSet> {
    if !(decimation >= config.sim_step) {
        return Err(Error::Configuration("decimation must be at least one sim_step".into()));
    }
    let mut cfg = config.clone();
    cfg.duration = duration;
    cfg.slow_step = decimation;
    let mut chain = Chain::new(&cfg)?;
    chain.set_slow_step(decimation);
    let per_bin = cfg.steps(decimation);
    let bins = ((duration / decimation).round() as usize).max(1);
    let mut columns: Vec<Vec<f64>> = (0..TRACE_LABELS.len()).map(|_| Vec::with_capacity(bins)).collect();
    for _ in 0..bins {
        let mut acc = [0.0; 12];
        for _ in 0..per_bin {
            let s = chain.step()?;
            for (a, v) in acc.iter_mut().zip(s.0) {
                *a += v;
            }
        }
        for (col, a) in columns.iter_mut().zip(acc) {
            col.push(a / per_bin as f64);
        }
    }
    let interval = per_bin as f64 * chain.dt;
    let traces = TRACE_LABELS
        .iter()
        .zip(columns)
        .map(|(&(label, unit), samples)| FrequencyTrace::new(label, unit, interval, samples).averaged())
        .collect();
    chain.finish(traces)
}

/// The out-of-loop (Rb) record of a multi-rate run, one mean per `decimation`.
pub fn long_term_run(config: &ChainConfig, duration: f64, decimation: f64) -> Result<FrequencyTrace> {
    let set = long_term_run_traces(config, duration, decimation)?;
    Ok(set.trace("out_of_loop").clone())
}
