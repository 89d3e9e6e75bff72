//! The single JSON run configuration. Absent sections take their defaults;
//! a section that is present must be complete, and unknown keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Map;
use translock::analysis::{AllanEstimator, Window};
use translock::bloch::{DetectionConfig, IonConfig};
use translock::chainsim::{ChainConfig, NoiseSpec};
use translock::fit::FitParameter;

use crate::failure::{Failure, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub chain: ChainConfig,
    pub ion: IonConfig,
    pub detection: DetectionConfig,
    /// Used by `noise`.
    pub noise: NoiseSpec,
    pub analysis: AnalysisConfig,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Carrier for fractional frequencies, Hz. Defaults to the slave laser's.
    pub carrier: Option<f64>,
    pub estimator: AllanEstimator,
    /// Explicit averaging times, s; otherwise log-spaced from one sample.
    pub taus: Option<Vec<f64>>,
    pub taus_per_decade: usize,
    /// Range of the reported log-log slope, s; whole result when absent.
    pub slope_range: Option<(f64, f64)>,
    /// Hz; the Nyquist frequency when absent.
    pub psd_bandwidth: Option<f64>,
    pub psd_segment_length: Option<usize>,
    pub psd_window: Window,
    pub psd_full_scale: f64,
    pub peak_threshold_db: f64,
    /// Window of the rms reported for chain runs, s; the whole run when absent.
    pub rms_window: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            carrier: None,
            estimator: AllanEstimator::Overlapping,
            taus: None,
            taus_per_decade: 5,
            slope_range: None,
            psd_bandwidth: None,
            psd_segment_length: None,
            psd_window: Window::Hann,
            psd_full_scale: 1.0,
            peak_threshold_db: -60.0,
            rms_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub free: Vec<FitParameter>,
    /// δν866 / δν397 when tied.
    pub linewidth_ratio: Option<f64>,
    pub bounds: BTreeMap<FitParameter, (f64, f64)>,
    pub max_iterations: u64,
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            free: FitParameter::DEFAULT_FREE.to_vec(),
            linewidth_ratio: Some(0.5),
            bounds: BTreeMap::new(),
            max_iterations: 3000,
            tolerance: 1e-9,
        }
    }
}

impl Config {
    /// Parses section by section so that errors name the section and field.
    pub fn parse(text: &str) -> Outcome<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Failure::usage(format!("config is not valid JSON: {e}")))?;
        let serde_json::Value::Object(mut sections) = value else {
            return Err(Failure::usage("config must be a JSON object"));
        };
        fn section<T: DeserializeOwned + Default>(sections: &mut Map<String, serde_json::Value>, name: &str) -> Outcome<T> {
            match sections.remove(name) {
                None => Ok(T::default()),
                Some(v) => serde_json::from_value(v).map_err(|e| Failure::usage(format!("config section `{name}`: {e}"))),
            }
        }
        let config = Config {
            chain: section(&mut sections, "chain")?,
            ion: section(&mut sections, "ion")?,
            detection: section(&mut sections, "detection")?,
            noise: section(&mut sections, "noise")?,
            analysis: section(&mut sections, "analysis")?,
            fit: section(&mut sections, "fit")?,
        };
        if let Some(unknown) = sections.keys().next() {
            return Err(Failure::usage(format!(
                "config: unknown section `{unknown}`, expected chain, ion, detection, noise, analysis or fit"
            )));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Outcome<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(format!("in {}", path.display())))
    }

    pub fn validate(&self) -> Outcome<()> {
        let field = |name: &'static str| move |e: translock::Error| Failure::usage(format!("config section `{name}`: {e}"));
        self.chain.validate().map_err(field("chain"))?;
        self.ion.validate().map_err(field("ion"))?;
        self.noise.validate().map_err(field("noise"))?;
        if !(self.detection.scale >= 0.0 && self.detection.background >= 0.0) {
            return Err(Failure::usage("config field `detection`: scale and background must be non-negative"));
        }
        let a = &self.analysis;
        if a.carrier.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Failure::usage("config field `analysis.carrier` must be positive"));
        }
        if a.taus_per_decade == 0 {
            return Err(Failure::usage("config field `analysis.taus_per_decade` must be at least 1"));
        }
        if a.slope_range.is_some_and(|(lo, hi)| !(0.0 < lo && lo < hi)) {
            return Err(Failure::usage("config field `analysis.slope_range` must satisfy 0 < lo < hi"));
        }
        if !(a.psd_full_scale > 0.0) {
            return Err(Failure::usage("config field `analysis.psd_full_scale` must be positive"));
        }
        if a.rms_window.is_some_and(|w| !(w > 0.0)) {
            return Err(Failure::usage("config field `analysis.rms_window` must be positive"));
        }
        if self.fit.free.is_empty() {
            return Err(Failure::usage("config field `fit.free` must name at least one parameter"));
        }
        if !(self.fit.tolerance > 0.0) || self.fit.max_iterations == 0 {
            return Err(Failure::usage("config fields `fit.tolerance` and `fit.max_iterations` must be positive"));
        }
        Ok(())
    }

    /// Canonical serialisation; its SHA-256 identifies the run configuration.
    pub fn canonical_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("configuration serialises");
        out.push(b'\n');
        out
    }

    pub fn carrier(&self) -> f64 {
        self.analysis.carrier.unwrap_or(self.chain.slave_laser.carrier_frequency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(Config::parse("{}").unwrap(), Config::default());
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = Config::default();
        let back = Config::parse(std::str::from_utf8(&c.canonical_json()).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.canonical_json(), c.canonical_json());
    }

    #[test]
    fn unknown_keys_name_the_field() {
        let err = Config::parse(r#"{"analysis": {"carier": 1.0}}"#).unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.to_string().contains("analysis"), "{err}");
        assert!(err.to_string().contains("carier"), "{err}");
    }

    #[test]
    fn unknown_sections_are_rejected() {
        let err = Config::parse(r#"{"chian": {}}"#).unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.to_string().contains("chian"), "{err}");
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let mut c = Config::default();
        c.chain.sim_step = -1.0;
        let text = String::from_utf8(c.canonical_json()).unwrap();
        let err = Config::parse(&text).unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.to_string().contains("chain"), "{err}");
    }
}
