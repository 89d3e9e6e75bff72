use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled record of one quantity (usually a frequency offset in Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace {
    pub label: String,
    /// Unit of the samples, e.g. "Hz", "V", "W", "Pa".
    pub unit: String,
    /// s
    pub sample_interval: f64,
    /// True when each sample is the mean over its interval rather than an
    /// instantaneous value.
    pub averaged_per_sample: bool,
    pub samples: Vec<f64>,
}

impl FrequencyTrace {
    pub fn new(label: impl Into<String>, unit: impl Into<String>, sample_interval: f64, samples: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            unit: unit.into(),
            sample_interval,
            averaged_per_sample: false,
            samples,
        }
    }

    pub fn averaged(mut self) -> Self {
        self.averaged_per_sample = true;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.sample_interval
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.sample_interval
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(Error::InvalidModel(format!("trace '{}' has a non-positive sample interval", self.label)));
        }
        if let Some(k) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidModel(format!("trace '{}' has a non-finite sample at index {k}", self.label)));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Samples from `start` seconds to the end.
    pub fn tail_from(&self, start: f64) -> &[f64] {
        let k = ((start / self.sample_interval).ceil() as usize).min(self.samples.len());
        &self.samples[k..]
    }

    /// Non-overlapping means over `factor` consecutive samples; a trailing
    /// partial block is dropped.
    pub fn block_average(&self, factor: usize) -> FrequencyTrace {
        let factor = factor.max(1);
        let samples = self
            .samples
            .chunks_exact(factor)
            .map(|c| c.iter().sum::<f64>() / factor as f64)
            .collect();
        FrequencyTrace {
            label: self.label.clone(),
            unit: self.unit.clone(),
            sample_interval: self.sample_interval * factor as f64,
            averaged_per_sample: true,
            samples,
        }
    }

    /// Returns a copy with every sample multiplied by `k`.
    pub fn scaled(&self, k: f64, unit: impl Into<String>) -> FrequencyTrace {
        FrequencyTrace {
            unit: unit.into(),
            samples: self.samples.iter().map(|x| x * k).collect(),
            ..self.clone()
        }
    }
}
