//! Frequency-stability metrology: Allan variance, power spectra, rms and drift.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::FrequencyTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AllanEstimator {
    #[default]
    Overlapping,
    NonOverlapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanPoint {
    /// s
    pub tau: f64,
    pub sigma_y_squared: f64,
    pub n_pairs: usize,
}

impl AllanPoint {
    /// Rough one-sigma uncertainty of the estimate, assuming independent pairs.
    pub fn standard_error(&self) -> f64 {
        self.sigma_y_squared * (2.0 / self.n_pairs as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanResult {
    pub points: Vec<AllanPoint>,
    pub estimator: AllanEstimator,
    /// Hz
    pub carrier_frequency: f64,
    /// Copied from the analysed trace.
    pub averaged_per_sample: bool,
}

impl AllanResult {
    pub fn taus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    /// Point whose tau is closest to `tau`.
    pub fn at(&self, tau: f64) -> Option<&AllanPoint> {
        self.points
            .iter()
            .min_by(|a, b| (a.tau / tau).ln().abs().total_cmp(&(b.tau / tau).ln().abs()))
    }
}

/// Allan variance of the fractional frequency `trace / carrier`.
///
/// Each requested tau is rounded to a whole number of samples `m`; taus that
/// need more than half the record are omitted.
pub fn allan_variance(
    trace: &FrequencyTrace,
    carrier: f64,
    taus: &[f64],
    estimator: AllanEstimator,
) -> Result<AllanResult> {
    trace.validate()?;
    if !(carrier > 0.0 && carrier.is_finite()) {
        return Err(Error::Domain("carrier frequency must be positive".into()));
    }
    let tau0 = trace.sample_interval;
    let n = trace.len();
    let mut ms: Vec<usize> = Vec::with_capacity(taus.len());
    for &tau in taus {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("tau {tau} must be positive")));
        }
        let exact = tau / tau0;
        let m = exact.round().max(1.0) as usize;
        if ((m as f64) - exact).abs() > 1e-6 * exact {
            log::warn!("tau {tau} s is not a multiple of the {tau0} s sample interval; using {} s", m as f64 * tau0);
        }
        if 2 * m > n {
            log::warn!("tau {} s omitted: trace holds only {} samples", m as f64 * tau0, n);
            continue;
        }
        ms.push(m);
    }
    ms.sort_unstable();
    ms.dedup();

    // Fractional frequency about its mean keeps the running sums well conditioned.
    let mean = trace.mean();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for &x in &trace.samples {
        acc += (x - mean) / carrier;
        cumulative.push(acc);
    }
    let points = ms
        .par_iter()
        .map(|&m| {
            let (sum, pairs) = match estimator {
                AllanEstimator::Overlapping => {
                    let pairs = n - 2 * m + 1;
                    let sum: f64 = (0..pairs)
                        .map(|k| {
                            let d = cumulative[k + 2 * m] - 2.0 * cumulative[k + m] + cumulative[k];
                            d * d
                        })
                        .sum();
                    (sum, pairs)
                }
                AllanEstimator::NonOverlapping => {
                    let pairs = n / m - 1;
                    let sum: f64 = (0..pairs)
                        .map(|j| {
                            let k = j * m;
                            let d = cumulative[k + 2 * m] - 2.0 * cumulative[k + m] + cumulative[k];
                            d * d
                        })
                        .sum();
                    (sum, pairs)
                }
            };
            let mf = m as f64;
            AllanPoint { tau: mf * tau0, sigma_y_squared: sum / (2.0 * mf * mf * pairs as f64), n_pairs: pairs }
        })
        .collect();
    Ok(AllanResult { points, estimator, carrier_frequency: carrier, averaged_per_sample: trace.averaged_per_sample })
}

/// Roughly `per_decade` log-spaced taus, as whole multiples of `tau0`, from
/// `tau0` up to half the record length.
pub fn log_spaced_taus(tau0: f64, n_samples: usize, per_decade: usize) -> Vec<f64> {
    let max_m = (n_samples / 2).max(1);
    let step = 10f64.powf(1.0 / per_decade.max(1) as f64);
    let mut out = Vec::new();
    let mut x = 1.0f64;
    let mut last = 0;
    while x.round() as usize <= max_m {
        let m = x.round() as usize;
        if m != last {
            out.push(m as f64 * tau0);
            last = m;
        }
        x *= step;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseType {
    WhitePhase,
    WhiteFrequency,
    FlickerFrequency,
    RandomWalkFrequency,
    Drift,
}

impl NoiseType {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseType::WhitePhase => "white/flicker PM",
            NoiseType::WhiteFrequency => "white FM",
            NoiseType::FlickerFrequency => "flicker FM floor",
            NoiseType::RandomWalkFrequency => "random-walk FM",
            NoiseType::Drift => "linear drift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseClass {
    /// Log-log slope of sigma_y^2 versus tau.
    pub slope: f64,
    pub kind: NoiseType,
    pub points_used: usize,
}

/// Least-squares log-log slope of the Allan variance over `[tau_min, tau_max]`.
pub fn classify_noise(result: &AllanResult, tau_range: (f64, f64)) -> Result<NoiseClass> {
    let (lo, hi) = tau_range;
    let pts: Vec<(f64, f64)> = result
        .points
        .iter()
        .filter(|p| p.tau >= lo * (1.0 - 1e-9) && p.tau <= hi * (1.0 + 1e-9) && p.sigma_y_squared > 0.0)
        .map(|p| (p.tau.ln(), p.sigma_y_squared.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::Classification(format!(
            "need at least 4 points with positive variance in [{lo}, {hi}] s, found {}",
            pts.len()
        )));
    }
    let (slope, _) = linear_fit(&pts)?;
    let kind = match slope.round() as i64 {
        i64::MIN..=-2 => NoiseType::WhitePhase,
        -1 => NoiseType::WhiteFrequency,
        0 => NoiseType::FlickerFrequency,
        1 => NoiseType::RandomWalkFrequency,
        _ => NoiseType::Drift,
    };
    Ok(NoiseClass { slope, kind, points_used: pts.len() })
}

/// Ordinary least squares `y = a x + b`, returning `(a, b)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::Domain("linear fit needs two points".into()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("abscissa has zero spread".into()));
    }
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            // periodic Hann
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdOptions {
    /// Samples per segment; `None` uses the whole record as one segment.
    pub segment_length: Option<usize>,
    pub window: Window,
    /// Amplitude of a full-scale sine; 0 dB corresponds to its power.
    pub full_scale: f64,
}

impl Default for PsdOptions {
    fn default() -> Self {
        Self { segment_length: None, window: Window::Hann, full_scale: 1.0 }
    }
}

/// Averaged periodogram.
///
/// `power[k]` is the mean-square signal attributed to bin `k` (one-sided, so
/// a sine of amplitude `A` centred in a bin shows `A^2/2`); `level_db` is the
/// same relative to a full-scale sine. With the rectangular window the bins
/// sum to the mean square of the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdResult {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub level_db: Vec<f64>,
    pub window: Window,
    /// Requested analysis bandwidth, Hz.
    pub bandwidth: f64,
    /// Bin spacing, Hz.
    pub resolution: f64,
    pub segments: usize,
}

impl PsdResult {
    /// Local maxima above `threshold_db`, strongest first.
    pub fn peaks(&self, threshold_db: f64) -> Vec<(f64, f64)> {
        let l = &self.level_db;
        let mut out: Vec<(f64, f64)> = (1..l.len().saturating_sub(1))
            .filter(|&k| l[k] > threshold_db && l[k] >= l[k - 1] && l[k] > l[k + 1])
            .map(|k| (self.frequencies[k], l[k]))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }
}

/// Power spectrum of `trace` up to `bandwidth`.
pub fn psd(trace: &FrequencyTrace, bandwidth: f64, options: &PsdOptions) -> Result<PsdResult> {
    trace.validate()?;
    let fs = 1.0 / trace.sample_interval;
    if !(bandwidth > 0.0) || fs < 2.0 * bandwidth * (1.0 - 1e-12) {
        return Err(Error::Domain(format!(
            "sample rate {fs} Hz is below twice the requested bandwidth {bandwidth} Hz"
        )));
    }
    if !(options.full_scale > 0.0) {
        return Err(Error::Domain("full scale must be positive".into()));
    }
    let n = trace.len();
    let seg = options.segment_length.unwrap_or(n).min(n);
    if seg < 2 {
        return Err(Error::Domain("trace too short for a spectrum".into()));
    }
    let window = options.window.coefficients(seg);
    let coherent: f64 = window.iter().sum();
    // 50% overlap for tapered windows, none for the rectangular one
    let hop = match options.window {
        Window::Rectangular => seg,
        Window::Hann => (seg / 2).max(1),
    };
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(seg);
    let half = seg / 2;
    let mut power = vec![0.0; half + 1];
    let mut segments = 0;
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= n {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(trace.samples[start + k] * window[k], 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            let mut v = buf[k].norm_sqr() / (coherent * coherent);
            if k != 0 && !(seg % 2 == 0 && k == half) {
                v *= 2.0;
            }
            *p += v;
        }
        segments += 1;
        start += hop;
    }
    let resolution = fs / seg as f64;
    let mut frequencies = Vec::new();
    let mut kept = Vec::new();
    for (k, p) in power.into_iter().enumerate() {
        let f = k as f64 * resolution;
        if f > bandwidth * (1.0 + 1e-12) {
            break;
        }
        frequencies.push(f);
        kept.push(p / segments as f64);
    }
    let reference = 0.5 * options.full_scale * options.full_scale;
    let level_db = kept.iter().map(|&p| 10.0 * (p.max(1e-300) / reference).log10()).collect();
    Ok(PsdResult {
        frequencies,
        power: kept,
        level_db,
        window: options.window,
        bandwidth,
        resolution,
        segments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsDrift {
    /// rms about the mean (or about the fitted line when detrended), trace units.
    pub rms: f64,
    /// Least-squares slope, trace units per second.
    pub drift: f64,
    pub mean: f64,
}

/// rms and linear drift over the first `window` seconds of `trace`.
pub fn rms_and_drift(trace: &FrequencyTrace, window: f64, detrend: bool) -> Result<RmsDrift> {
    trace.validate()?;
    let n = ((window / trace.sample_interval).round() as usize).max(1);
    if n > trace.len() {
        return Err(Error::Domain(format!(
            "window {window} s exceeds the {} s trace",
            trace.duration()
        )));
    }
    let xs = &trace.samples[..n];
    let mean = xs.iter().sum::<f64>() / n as f64;
    let drift = if n >= 2 {
        let pts: Vec<(f64, f64)> = xs.iter().enumerate().map(|(k, &x)| (trace.time(k), x)).collect();
        linear_fit(&pts)?.0
    } else {
        0.0
    };
    let t_mid = trace.time(n - 1) / 2.0;
    let rms = (xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let fit = if detrend { mean + drift * (trace.time(k) - t_mid) } else { mean };
            (x - fit).powi(2)
        })
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(RmsDrift { rms, drift, mean })
}
