//! Error-signal generators: Pound-Drever-Hall on a cavity and FM saturated
//! absorption spectroscopy on a vapour cell, plus the Cs and Rb line catalogs
//! used as frequency references.

use std::f64::consts::{LN_2, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angular::hyperfine_strength;
use crate::constants::*;
use crate::error::{Error, Result};
use crate::optics::{reflection, CavityModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemodConfig {
    /// Hz
    pub modulation_frequency: f64,
    /// Mixer phase, rad. Zero selects the pure-absorption quadrature.
    pub demod_phase: f64,
    /// Post-mixer low-pass corner, Hz.
    pub lowpass_bandwidth: f64,
}

impl Default for DemodConfig {
    fn default() -> Self {
        Self { modulation_frequency: 20e6, demod_phase: 0.0, lowpass_bandwidth: 5e6 }
    }
}

impl DemodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.modulation_frequency > 0.0) {
            return Err(Error::InvalidModel("modulation frequency must be positive".into()));
        }
        if !(self.lowpass_bandwidth > 0.0) {
            return Err(Error::InvalidModel("low-pass bandwidth must be positive".into()));
        }
        Ok(())
    }

    pub fn with_phase(self, demod_phase: f64) -> Self {
        Self { demod_phase, ..self }
    }
}

/// Precomputed PDH discriminator for one cavity at one wavelength.
///
/// `eps(nu) = cos(theta) Im{F(nu) F*(nu+W) - F*(nu) F(nu-W)} + sin(theta) Re{...}`
#[derive(Debug, Clone, Copy)]
pub struct PdhDiscriminator {
    r: f64,
    phase_per_hz: f64,
    sideband: Complex64,
    quadrature: Complex64,
}

impl PdhDiscriminator {
    pub fn new(cavity: &CavityModel, fsr: f64, demod: &DemodConfig) -> Self {
        let linewidth = fsr / cavity.finesse;
        if demod.modulation_frequency < 10.0 * linewidth {
            log::warn!(
                "modulation frequency {:.3e} Hz is not well above the cavity linewidth {:.3e} Hz",
                demod.modulation_frequency,
                linewidth
            );
        }
        let phase_per_hz = TAU / fsr;
        Self {
            r: cavity.amplitude_reflectivity(),
            phase_per_hz,
            sideband: Complex64::from_polar(1.0, phase_per_hz * demod.modulation_frequency),
            quadrature: Complex64::from_polar(1.0, demod.demod_phase),
        }
    }

    #[inline]
    pub fn error(&self, detuning: f64) -> f64 {
        let e = Complex64::from_polar(1.0, self.phase_per_hz * detuning);
        let f0 = refl(self.r, e);
        let fp = refl(self.r, e * self.sideband);
        let fm = refl(self.r, e * self.sideband.conj());
        let z = f0 * fp.conj() - f0.conj() * fm;
        // cos(theta) Im z + sin(theta) Re z
        self.quadrature.re * z.im + self.quadrature.im * z.re
    }

    /// Analytic slope at resonance, signal units per Hz.
    pub fn central_slope(&self) -> f64 {
        // F'(0) = i r / (1 - r^2) dphi/dnu, F(0) = 0
        let dfdnu = Complex64::new(0.0, self.r / (1.0 - self.r * self.r) * self.phase_per_hz);
        let z = dfdnu * refl(self.r, self.sideband).conj()
            - dfdnu.conj() * refl(self.r, self.sideband.conj());
        self.quadrature.re * z.im + self.quadrature.im * z.re
    }
}

#[inline]
fn refl(r: f64, e: Complex64) -> Complex64 {
    r * (e - 1.0) / (1.0 - r * r * e)
}

/// PDH error of a laser detuned by `laser_detuning` from a cavity resonance.
pub fn pdh_error_cavity(
    cavity: &CavityModel,
    wavelength: f64,
    laser_detuning: f64,
    demod: &DemodConfig,
) -> Result<f64> {
    demod.validate()?;
    let fsr = cavity.free_spectral_range(wavelength)?;
    let r = cavity.amplitude_reflectivity();
    let phi = |nu: f64| TAU * nu / fsr;
    let w = demod.modulation_frequency;
    let f0 = reflection(r, phi(laser_detuning));
    let z = f0 * reflection(r, phi(laser_detuning + w)).conj()
        - f0.conj() * reflection(r, phi(laser_detuning - w));
    Ok(demod.demod_phase.cos() * z.im + demod.demod_phase.sin() * z.re)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralLine {
    pub label: String,
    /// Hz, relative to the catalog origin.
    pub center_offset: f64,
    /// Natural FWHM, Hz.
    pub natural_width: f64,
    pub relative_amplitude: f64,
    pub is_crossover: bool,
    /// Indices of the two parent lines of a crossover.
    #[serde(default)]
    pub parents: Option<(usize, usize)>,
}

/// Gaussian Doppler absorption of one ground-state manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DopplerBackground {
    pub center_offset: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineCatalog {
    pub name: String,
    pub lines: Vec<SpectralLine>,
    /// Doppler FWHM shared by every background, Hz.
    pub doppler_fwhm: f64,
    pub backgrounds: Vec<DopplerBackground>,
    /// Lamb-dip FWHM as a multiple of the natural width.
    pub dip_broadening: f64,
    /// Absolute optical frequency of offset zero, Hz.
    pub catalog_origin: f64,
    /// Index of the lock / reference line.
    pub reference: usize,
}

impl LineCatalog {
    pub fn validate(&self) -> Result<()> {
        if self.lines.is_empty() {
            return Err(Error::InvalidModel("catalog has no lines".into()));
        }
        if self.reference >= self.lines.len() {
            return Err(Error::InvalidModel("catalog reference index out of range".into()));
        }
        if !(self.doppler_fwhm > 0.0) || !(self.dip_broadening > 0.0) {
            return Err(Error::InvalidModel("catalog widths must be positive".into()));
        }
        for line in &self.lines {
            if !(line.natural_width > 0.0) || !(line.relative_amplitude > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "line {} needs positive width and amplitude",
                    line.label
                )));
            }
            if let Some((a, b)) = line.parents {
                let (Some(pa), Some(pb)) = (self.lines.get(a), self.lines.get(b)) else {
                    return Err(Error::InvalidModel(format!("crossover {} has bad parents", line.label)));
                };
                let mid = 0.5 * (pa.center_offset + pb.center_offset);
                if (line.center_offset - mid).abs() > 1e-6 * mid.abs().max(1.0) {
                    return Err(Error::InvalidModel(format!(
                        "crossover {} is not at the midpoint of its parents",
                        line.label
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn reference_line(&self) -> &SpectralLine {
        &self.lines[self.reference]
    }

    /// Multiplies every line amplitude and background depth by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.lines.iter_mut().for_each(|l| l.relative_amplitude *= k);
        out.backgrounds.iter_mut().for_each(|b| b.depth *= k);
        out
    }

    /// Keeps only the lines within `window` of `center` (and backgrounds
    /// within four Doppler widths), for fast evaluation near a lock point.
    ///
    /// Distant features only add a smooth slope, which moves the zero
    /// crossing slightly; callers locate the crossing on the pruned catalog.
    pub fn local(&self, center: f64, window: f64) -> LineCatalog {
        let keep: Vec<usize> = (0..self.lines.len())
            .filter(|&k| k == self.reference || (self.lines[k].center_offset - center).abs() <= window)
            .collect();
        let remap = |old: usize| keep.iter().position(|&k| k == old);
        let lines = keep
            .iter()
            .map(|&k| {
                let mut line = self.lines[k].clone();
                line.parents = line.parents.and_then(|(a, b)| Some((remap(a)?, remap(b)?)));
                line
            })
            .collect();
        let backgrounds = self
            .backgrounds
            .iter()
            .filter(|b| (b.center_offset - center).abs() <= 4.0 * self.doppler_fwhm)
            .copied()
            .collect();
        LineCatalog {
            lines,
            backgrounds,
            reference: remap(self.reference).expect("reference kept"),
            ..self.clone()
        }
    }

    /// Shifts all offsets so that the reference line sits at zero.
    fn recentred(mut self) -> Self {
        let shift = self.lines[self.reference].center_offset;
        self.lines.iter_mut().for_each(|l| l.center_offset -= shift);
        self.backgrounds.iter_mut().for_each(|b| b.center_offset -= shift);
        self.catalog_origin += shift;
        self
    }

    /// Appends crossovers for every pair of lines sharing a ground state.
    fn add_crossovers(&mut self, groups: &[Vec<usize>]) {
        for group in groups {
            for (i, &a) in group.iter().enumerate() {
                for &b in &group[i + 1..] {
                    let (la, lb) = (&self.lines[a], &self.lines[b]);
                    let line = SpectralLine {
                        label: format!("{}/{} co", la.label, lb.label),
                        center_offset: 0.5 * (la.center_offset + lb.center_offset),
                        natural_width: 0.5 * (la.natural_width + lb.natural_width),
                        relative_amplitude: 0.5 * (la.relative_amplitude + lb.relative_amplitude),
                        is_crossover: true,
                        parents: Some((a, b)),
                    };
                    self.lines.push(line);
                }
            }
        }
    }

    /// Absorption and dispersion of the Lamb dips on the Doppler background.
    #[inline]
    pub fn absorption_dispersion(&self, offset: f64) -> (f64, f64) {
        let mut absorption = 0.0;
        let mut dispersion = 0.0;
        let g = 4.0 * LN_2 / (self.doppler_fwhm * self.doppler_fwhm);
        for b in &self.backgrounds {
            let x = offset - b.center_offset;
            absorption += b.depth * (-g * x * x).exp();
        }
        for line in &self.lines {
            let gamma = 0.5 * line.natural_width * self.dip_broadening;
            let x = offset - line.center_offset;
            let d = 1.0 / (x * x + gamma * gamma);
            // Saturation reduces absorption at the dip.
            absorption -= line.relative_amplitude * gamma * gamma * d;
            dispersion -= line.relative_amplitude * gamma * x * d;
        }
        (absorption, dispersion)
    }
}

/// Weak-modulation FM spectroscopy error signal at `laser_detuning` from the
/// catalog origin.
pub fn fm_spectroscopy_error(catalog: &LineCatalog, laser_detuning: f64, demod: &DemodConfig) -> f64 {
    let (absorption, dispersion) = fm_quadratures(catalog, laser_detuning, demod.modulation_frequency);
    demod.demod_phase.cos() * absorption + demod.demod_phase.sin() * dispersion
}

/// The (absorption, dispersion) quadratures of the FM signal.
#[inline]
pub fn fm_quadratures(catalog: &LineCatalog, nu: f64, modulation: f64) -> (f64, f64) {
    let (a_lo, d_lo) = catalog.absorption_dispersion(nu - modulation);
    let (a_hi, d_hi) = catalog.absorption_dispersion(nu + modulation);
    let (_, d0) = catalog.absorption_dispersion(nu);
    (a_lo - a_hi, d_hi + d_lo - 2.0 * d0)
}

/// Demodulation phase that maximises the positive slope of the FM error at
/// `at` (Hz from origin), with the slope obtained there.
pub fn optimal_demod_phase(catalog: &LineCatalog, at: f64, modulation: f64) -> (f64, f64) {
    let h = 1e-4 * catalog.lines.iter().map(|l| l.natural_width).fold(f64::INFINITY, f64::min);
    let (a_p, d_p) = fm_quadratures(catalog, at + h, modulation);
    let (a_m, d_m) = fm_quadratures(catalog, at - h, modulation);
    let sa = (a_p - a_m) / (2.0 * h);
    let sd = (d_p - d_m) / (2.0 * h);
    (sd.atan2(sa), sa.hypot(sd))
}

/// Zero crossing of `f` inside `[lo, hi]` by bisection; `None` when `f` has
/// the same sign at both ends.
pub fn zero_crossing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Cs D2 `F = 3 -> F' = 2, 3, 4` lines and crossovers, centred on the
/// `F' = 3/4` crossover lock point.
pub fn cs_d2_f3_catalog() -> LineCatalog {
    // 6P3/2 hyperfine offsets relative to F' = 4
    let f4 = 0.0;
    let f3 = f4 - CS_D2_F3_F4;
    let f2 = f3 - CS_D2_F2_F3;
    let lines = [(2, f2), (3, f3), (4, f4)]
        .into_iter()
        .map(|(fp, center)| SpectralLine {
            label: format!("F'={fp}"),
            center_offset: center,
            natural_width: CS_D2_NATURAL_WIDTH,
            relative_amplitude: hyperfine_strength(1, 3, 7, 6, 2 * fp),
            is_crossover: false,
            parents: None,
        })
        .collect::<Vec<_>>();
    let weighted = lines.iter().map(|l| l.center_offset * l.relative_amplitude).sum::<f64>()
        / lines.iter().map(|l| l.relative_amplitude).sum::<f64>();
    // F = 3 -> F' = 4 absolute: D2 centroid + 6S1/2(F=3) and 6P3/2(F'=4) shifts
    let f3_to_f4 = SPEED_OF_LIGHT / CS_D2_WAVELENGTH + 5.170_855_372e9 + 12.815e6;
    let mut catalog = LineCatalog {
        name: "Cs D2 F=3".into(),
        lines,
        doppler_fwhm: doppler_fwhm(SPEED_OF_LIGHT / CS_D2_WAVELENGTH, CS_MASS_AMU, 300.0),
        backgrounds: vec![DopplerBackground { center_offset: weighted, depth: 2.0 }],
        dip_broadening: 3.0,
        catalog_origin: f3_to_f4,
        reference: 0,
    };
    catalog.add_crossovers(&[vec![0, 1, 2]]);
    // crossovers appended as (2,3), (2,4), (3,4)
    catalog.reference = 5;
    catalog.recentred()
}

/// Rb D1 lines of both isotopes weighted by natural abundance, centred on the
/// 85Rb `F = 3 -> F' = 2/3` crossover.
pub fn rb_d1_catalog() -> LineCatalog {
    struct Isotope {
        name: &'static str,
        two_i: i64,
        abundance: f64,
        centroid: f64,
        ground: [(i64, f64); 2],
        excited: [(i64, f64); 2],
        mass: f64,
    }
    let base = SPEED_OF_LIGHT / RB_D1_WAVELENGTH;
    let isotopes = [
        Isotope {
            name: "85Rb",
            two_i: 5,
            abundance: RB85_ABUNDANCE,
            centroid: 0.0,
            // 5S1/2 F=2, F=3 and 5P1/2 F'=2, F'=3 offsets from the centroid
            ground: [(2, -7.0 / 12.0 * RB85_GROUND_SPLITTING), (3, 5.0 / 12.0 * RB85_GROUND_SPLITTING)],
            excited: [(2, -7.0 / 12.0 * RB85_P12_SPLITTING), (3, 5.0 / 12.0 * RB85_P12_SPLITTING)],
            mass: RB85_MASS_AMU,
        },
        Isotope {
            name: "87Rb",
            two_i: 3,
            abundance: RB87_ABUNDANCE,
            centroid: RB_D1_ISOTOPE_SHIFT,
            ground: [(1, -5.0 / 8.0 * RB87_GROUND_SPLITTING), (2, 3.0 / 8.0 * RB87_GROUND_SPLITTING)],
            excited: [(1, -5.0 / 8.0 * RB87_P12_SPLITTING), (2, 3.0 / 8.0 * RB87_P12_SPLITTING)],
            mass: RB87_MASS_AMU,
        },
    ];
    let mut lines = Vec::new();
    let mut groups = Vec::new();
    let mut backgrounds = Vec::new();
    for iso in &isotopes {
        for &(f, e_ground) in &iso.ground {
            let ground_weight = (2 * f + 1) as f64 / ((iso.two_i + 1) * 2) as f64;
            let mut group = Vec::new();
            let mut centre = 0.0;
            for &(fp, e_excited) in &iso.excited {
                let center = iso.centroid + e_excited - e_ground;
                centre += center / iso.excited.len() as f64;
                group.push(lines.len());
                lines.push(SpectralLine {
                    label: format!("{} F={f}->F'={fp}", iso.name),
                    center_offset: center,
                    natural_width: RB_D1_NATURAL_WIDTH,
                    relative_amplitude: iso.abundance
                        * ground_weight
                        * hyperfine_strength(1, 1, iso.two_i, 2 * f, 2 * fp),
                    is_crossover: false,
                    parents: None,
                });
            }
            backgrounds.push(DopplerBackground {
                center_offset: centre,
                depth: 4.0 * iso.abundance * ground_weight,
            });
            groups.push(group);
        }
    }
    let doppler = doppler_fwhm(base, isotopes[0].mass, 300.0);
    let mut catalog = LineCatalog {
        name: "Rb D1".into(),
        lines,
        doppler_fwhm: doppler,
        backgrounds,
        dip_broadening: 3.0,
        catalog_origin: base,
        reference: 0,
    };
    catalog.add_crossovers(&groups);
    catalog.reference = catalog
        .lines
        .iter()
        .position(|l| l.label == "85Rb F=3->F'=2/85Rb F=3->F'=3 co")
        .expect("85Rb F=3 crossover present");
    catalog.recentred()
}

/// Doppler FWHM of a thermal vapour, Hz.
pub fn doppler_fwhm(frequency: f64, mass_amu: f64, temperature_kelvin: f64) -> f64 {
    frequency / SPEED_OF_LIGHT
        * (8.0 * BOLTZMANN * temperature_kelvin * LN_2 / (mass_amu * ATOMIC_MASS_UNIT)).sqrt()
}

/// Linear frequency-to-voltage conversion from a scanned error signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    /// Signal units per Hz.
    pub slope: f64,
    pub intercept: f64,
}

impl Gauge {
    pub fn to_frequency(&self, signal: f64) -> f64 {
        (signal - self.intercept) / self.slope
    }

    pub fn to_signal(&self, frequency: f64) -> f64 {
        self.slope * frequency + self.intercept
    }
}

/// Least-squares straight line through `(frequency, signal)` pairs.
pub fn gauge_slope(trace: &[(f64, f64)]) -> Result<Gauge> {
    if trace.len() < 3 {
        return Err(Error::Gauge(format!("need at least 3 points, got {}", trace.len())));
    }
    let n = trace.len() as f64;
    let mx = trace.iter().map(|p| p.0).sum::<f64>() / n;
    let my = trace.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = trace.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = trace.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) || !sxx.is_finite() {
        return Err(Error::Gauge("frequency axis has zero spread".into()));
    }
    let slope = sxy / sxx;
    Ok(Gauge { slope, intercept: my - slope * mx })
}

/// Scans `f` linearly over `±amplitude` around `center` and fits the gauge.
pub fn gauge_scan(f: impl Fn(f64) -> f64, center: f64, amplitude: f64, points: usize) -> Result<Gauge> {
    let n = points.max(3);
    let trace: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let nu = center - amplitude + 2.0 * amplitude * k as f64 / (n - 1) as f64;
            (nu - center, f(nu))
        })
        .collect();
    gauge_slope(&trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::AirState;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cavity() -> (CavityModel, f64) {
        let c = CavityModel { air: AirState::VACUUM, ..CavityModel::default() };
        let fsr = c.vacuum_free_spectral_range().unwrap();
        (c, fsr)
    }

    #[test]
    fn pdh_zero_at_resonance_and_odd() {
        let (c, fsr) = cavity();
        let d = PdhDiscriminator::new(&c, fsr, &DemodConfig::default());
        assert_eq!(d.error(0.0), 0.0);
        for k in 1..200 {
            let nu = k as f64 * 0.37e6;
            let (a, b) = (d.error(nu), d.error(-nu));
            assert!((a + b).abs() <= 1e-9 * a.abs().max(1e-300), "{nu}: {a} {b}");
        }
        // agrees with the unfactored evaluation
        let e = pdh_error_cavity(&c, 852e-9, 0.4e6, &DemodConfig::default()).unwrap();
        assert_relative_eq!(e, d.error(0.4e6), max_relative = 1e-9);
    }

    #[test]
    fn pdh_sideband_crossings() {
        let (c, fsr) = cavity();
        let d = PdhDiscriminator::new(&c, fsr, &DemodConfig::default());
        let w = 20e6;
        for s in [-1.0, 1.0] {
            let lo = d.error(s * w - 0.1e6);
            let hi = d.error(s * w + 0.1e6);
            assert!(lo * hi < 0.0, "no crossing at {}", s * w);
        }
        // central slope and sideband slopes have opposite sign
        let centre = d.error(0.1e6) - d.error(-0.1e6);
        let side = d.error(w + 0.1e6) - d.error(w - 0.1e6);
        assert!(centre * side < 0.0);
    }

    #[test]
    fn pdh_central_slope_matches_finite_difference() {
        let (c, fsr) = cavity();
        let d = PdhDiscriminator::new(&c, fsr, &DemodConfig::default());
        let h = 10.0;
        let fd = (d.error(h) - d.error(-h)) / (2.0 * h);
        assert_relative_eq!(d.central_slope(), fd, max_relative = 1e-6);
    }

    fn single_line() -> LineCatalog {
        LineCatalog {
            name: "single".into(),
            lines: vec![SpectralLine {
                label: "a".into(),
                center_offset: 0.0,
                natural_width: 6e6,
                relative_amplitude: 1.0,
                is_crossover: false,
                parents: None,
            }],
            doppler_fwhm: 500e6,
            backgrounds: vec![DopplerBackground { center_offset: 0.0, depth: 3.0 }],
            dip_broadening: 3.0,
            catalog_origin: 0.0,
            reference: 0,
        }
    }

    #[test]
    fn fm_signal_of_an_isolated_line() {
        let cat = single_line();
        for theta in [0.0, 0.4, 1.3, PI / 2.0] {
            let demod = DemodConfig::default().with_phase(theta);
            assert!(fm_spectroscopy_error(&cat, 0.0, &demod).abs() < 1e-15);
        }
        let demod = DemodConfig::default();
        let grid: Vec<f64> = (0..=800).map(|k| k as f64 * 0.1e6).collect();
        for &nu in &grid {
            let a = fm_spectroscopy_error(&cat, nu, &demod);
            let b = fm_spectroscopy_error(&cat, -nu, &demod);
            assert!((a + b).abs() <= 1e-9 * a.abs().max(1e-12));
        }
        // extrema of the absorption quadrature sit near ±20 MHz
        let (argmax, _) = grid
            .iter()
            .map(|&nu| (nu, fm_spectroscopy_error(&cat, nu, &demod).abs()))
            .fold((0.0, 0.0), |best, p| if p.1 > best.1 { p } else { best });
        assert!((argmax - 20e6).abs() < 3e6, "{argmax}");
    }

    #[test]
    fn fm_signal_is_linear_in_amplitudes() {
        let cat = cs_d2_f3_catalog();
        let demod = DemodConfig::default().with_phase(0.7);
        for nu in [-150e6, -20e6, 3e6, 40e6] {
            let a = fm_spectroscopy_error(&cat, nu, &demod);
            let b = fm_spectroscopy_error(&cat.scaled(2.5), nu, &demod);
            assert_relative_eq!(b, 2.5 * a, max_relative = 1e-12);
        }
    }

    #[test]
    fn cs_catalog_structure() {
        let cat = cs_d2_f3_catalog();
        cat.validate().unwrap();
        assert_eq!(cat.lines.len(), 6);
        assert_eq!(cat.reference_line().center_offset, 0.0);
        let f = |label: &str| cat.lines.iter().find(|l| l.label == label).unwrap().center_offset;
        assert_relative_eq!(f("F'=3") - f("F'=2"), 151.2e6, max_relative = 1e-3);
        assert_relative_eq!(f("F'=4") - f("F'=3"), 201.3e6, max_relative = 1e-3);
        assert_relative_eq!(f("F'=4"), 100.65e6, max_relative = 1e-3);
        for l in cat.lines.iter().filter(|l| l.is_crossover) {
            let (a, b) = l.parents.unwrap();
            assert_eq!(l.center_offset, 0.5 * (cat.lines[a].center_offset + cat.lines[b].center_offset));
        }
    }

    #[test]
    fn rb_catalog_structure() {
        let cat = rb_d1_catalog();
        cat.validate().unwrap();
        assert!(cat.reference_line().label.contains("85Rb F=3"));
        let find = |label: &str| cat.lines.iter().find(|l| l.label == label).unwrap();
        // same excited level from the two 87Rb ground states
        let split87 = find("87Rb F=1->F'=1").center_offset - find("87Rb F=2->F'=1").center_offset;
        assert_relative_eq!(split87, 6.834682e9, max_relative = 1e-9);
        let split85 = find("85Rb F=2->F'=2").center_offset - find("85Rb F=3->F'=2").center_offset;
        assert_relative_eq!(split85, 3.0357e9, max_relative = 1e-4);
        // abundance weights carried by the line amplitudes
        let total = |iso: &str| -> f64 {
            cat.lines
                .iter()
                .filter(|l| !l.is_crossover && l.label.starts_with(iso))
                .map(|l| l.relative_amplitude)
                .sum()
        };
        assert_relative_eq!(total("85Rb"), 0.722, max_relative = 1e-12);
        assert_relative_eq!(total("87Rb"), 0.278, max_relative = 1e-12);
    }

    #[test]
    fn gauge_exact_and_degenerate() {
        let trace: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 * 1e5, 3.5e-7 * k as f64 * 1e5)).collect();
        let g = gauge_slope(&trace).unwrap();
        assert_relative_eq!(g.slope, 3.5e-7, max_relative = 1e-14);
        for &(nu, v) in &trace {
            assert!((g.to_frequency(v) - nu).abs() < 1e-6);
        }
        assert!(matches!(gauge_slope(&[(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]), Err(Error::Gauge(_))));
        assert!(matches!(gauge_slope(&[(1.0, 2.0), (2.0, 3.0)]), Err(Error::Gauge(_))));
    }
}
