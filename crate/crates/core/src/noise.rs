//! Power-law frequency-noise generators.
//!
//! Levels follow the one-sided PSD convention `S_nu(f) = h0 + h_1/f + h_2/f^2`
//! with frequencies in Hz, so the Allan variance of the output (in Hz^2) is
//! `h0/(2 tau) + 2 ln2 h_1 + (2 pi^2/3) h_2 tau`.

use std::f64::consts::{LN_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::FrequencyTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// White FM level h0, Hz^2/Hz.
    #[serde(default)]
    pub white_fm: f64,
    /// Flicker FM level h_-1, Hz^2.
    #[serde(default)]
    pub flicker_fm: f64,
    /// Random-walk FM level h_-2, Hz^3.
    #[serde(default)]
    pub random_walk_fm: f64,
    /// Used when this noise is generated on its own; the chain simulator derives
    /// per-source streams from its run seed instead.
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub const SILENT: NoiseSpec = NoiseSpec { white_fm: 0.0, flicker_fm: 0.0, random_walk_fm: 0.0, seed: 0 };

    pub fn white(h0: f64) -> Self {
        Self { white_fm: h0, ..Self::SILENT }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("white_fm", self.white_fm),
            ("flicker_fm", self.flicker_fm),
            ("random_walk_fm", self.random_walk_fm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Configuration(format!("noise level {name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.white_fm == 0.0 && self.flicker_fm == 0.0 && self.random_walk_fm == 0.0
    }
}

/// Flicker sections per decade of the pole cascade.
const FLICKER_SECTIONS_PER_DECADE: f64 = 2.0;

/// Streaming generator for one `NoiseSpec` at a fixed step.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    white_sigma: f64,
    walk_sigma: f64,
    walk: f64,
    /// (pole, drive sigma, state) per first-order section
    flicker: Vec<(f64, f64, f64)>,
    silent: bool,
}

impl NoiseGenerator {
    /// `lowest_frequency` sets the bottom of the flicker band; the top is the
    /// Nyquist frequency `1/(2 dt)`.
    pub fn new<R: Rng>(spec: &NoiseSpec, dt: f64, lowest_frequency: f64, rng: &mut R) -> Self {
        let mut flicker = Vec::new();
        if spec.flicker_fm > 0.0 {
            // Sum of Lorentzians with corners f_i = f0 r^i and equal variance
            // h_-1 ln r each approximates h_-1/f between f0 and the top corner.
            let r = 10f64.powf(1.0 / FLICKER_SECTIONS_PER_DECADE);
            let nyquist = 0.5 / dt;
            let f_low = lowest_frequency.min(nyquist * 1e-4).max(1e-12);
            let mut f = f_low;
            let variance = spec.flicker_fm * r.ln();
            while f < nyquist {
                let pole = (-TAU * f * dt).exp();
                let sigma = (variance * (1.0 - pole * pole)).sqrt();
                let x0 = variance.sqrt() * rng.sample::<f64, _>(StandardNormal);
                flicker.push((pole, sigma, x0));
                f *= r;
            }
        }
        Self {
            white_sigma: (spec.white_fm / (2.0 * dt)).sqrt(),
            walk_sigma: (2.0 * PI * PI * spec.random_walk_fm * dt).sqrt(),
            walk: 0.0,
            flicker,
            silent: spec.is_silent(),
        }
    }

    #[inline]
    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if self.silent {
            return 0.0;
        }
        let mut x = 0.0;
        if self.white_sigma > 0.0 {
            x += self.white_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        if self.walk_sigma > 0.0 {
            self.walk += self.walk_sigma * rng.sample::<f64, _>(StandardNormal);
            x += self.walk;
        }
        for (pole, sigma, state) in &mut self.flicker {
            *state = *pole * *state + *sigma * rng.sample::<f64, _>(StandardNormal);
            x += *state;
        }
        x
    }
}

/// Generates `n_samples` of frequency noise (Hz) at step `dt`.
pub fn generate_noise(spec: &NoiseSpec, n_samples: usize, dt: f64) -> Result<FrequencyTrace> {
    spec.validate()?;
    if n_samples < 2 {
        return Err(Error::Domain("noise trace needs at least two samples".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain("noise step must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lowest = 1.0 / (n_samples as f64 * dt);
    let mut gen = NoiseGenerator::new(spec, dt, lowest, &mut rng);
    let samples = (0..n_samples).map(|_| gen.sample(&mut rng)).collect();
    Ok(FrequencyTrace::new("noise", "Hz", dt, samples))
}

/// Allan variance (Hz^2) of the process described by `spec` at `tau`, for
/// `tau` well inside the generated band.
pub fn expected_allan_variance(spec: &NoiseSpec, tau: f64) -> f64 {
    spec.white_fm / (2.0 * tau) + 2.0 * LN_2 * spec.flicker_fm + 2.0 * PI * PI / 3.0 * spec.random_walk_fm * tau
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_spec_is_all_zero() {
        let t = generate_noise(&NoiseSpec::SILENT, 1000, 1e-5).unwrap();
        assert!(t.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn white_sample_variance() {
        let spec = NoiseSpec { seed: 3, ..NoiseSpec::white(2e5) };
        let t = generate_noise(&spec, 100_000, 1e-5).unwrap();
        let var = t.samples.iter().map(|x| x * x).sum::<f64>() / t.len() as f64;
        let expected = 2e5 / 2e-5;
        assert!((var / expected - 1.0).abs() < 0.02, "{var} vs {expected}");
    }

    #[test]
    fn random_walk_increments() {
        let spec = NoiseSpec { random_walk_fm: 10.0, seed: 5, ..NoiseSpec::SILENT };
        let dt = 1e-3;
        let t = generate_noise(&spec, 50_000, dt).unwrap();
        let inc: Vec<f64> = t.samples.windows(2).map(|w| w[1] - w[0]).collect();
        let var = inc.iter().map(|x| x * x).sum::<f64>() / inc.len() as f64;
        let expected = 2.0 * PI * PI * 10.0 * dt;
        assert!((var / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn seeds_are_reproducible() {
        let spec = NoiseSpec { white_fm: 1.0, flicker_fm: 1.0, random_walk_fm: 1.0, seed: 9 };
        let a = generate_noise(&spec, 500, 1e-3).unwrap();
        let b = generate_noise(&spec, 500, 1e-3).unwrap();
        assert_eq!(a, b);
        let c = generate_noise(&NoiseSpec { seed: 10, ..spec }, 500, 1e-3).unwrap();
        assert_ne!(a, c);
    }
}
