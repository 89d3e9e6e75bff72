//! Invariants across modules.

use proptest::prelude::*;
use translock::analysis::{allan_variance, log_spaced_taus, AllanEstimator};
use translock::chainsim::dispersion_shift;
use translock::constants::SPEED_OF_LIGHT;
use translock::discriminator::{pdh_error_cavity, DemodConfig};
use translock::fit::chi_squared;
use translock::noise::{expected_allan_variance, generate_noise, NoiseSpec};
use translock::optics::{AirState, CavityModel};
use translock::trace::FrequencyTrace;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allan_variance_scales_quadratically(seed in 0u64..1000, k in 0.01f64..100.0, offset in -1e6f64..1e6) {
        let spec = NoiseSpec { seed, ..NoiseSpec::white(1e4) };
        let x = generate_noise(&spec, 2048, 1e-3).unwrap();
        let y = FrequencyTrace::new("y", "Hz", x.sample_interval, x.samples.iter().map(|v| k * v + offset).collect());
        let taus = log_spaced_taus(x.sample_interval, x.len(), 4);
        for estimator in [AllanEstimator::Overlapping, AllanEstimator::NonOverlapping] {
            let a = allan_variance(&x, 1.0, &taus, estimator).unwrap();
            let b = allan_variance(&y, 1.0, &taus, estimator).unwrap();
            for (p, q) in a.points.iter().zip(&b.points) {
                prop_assert!((q.sigma_y_squared / (k * k * p.sigma_y_squared) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn expected_allan_variance_adds_over_noise_types(
        white in 0.0f64..1e6, flicker in 0.0f64..1e6, walk in 0.0f64..1e9, tau in 1e-4f64..1e3,
    ) {
        let parts = [NoiseSpec::white(white), NoiseSpec { flicker_fm: flicker, ..NoiseSpec::SILENT }, NoiseSpec { random_walk_fm: walk, ..NoiseSpec::SILENT }];
        let sum: f64 = parts.iter().map(|s| expected_allan_variance(s, tau)).sum();
        let whole = expected_allan_variance(&NoiseSpec { white_fm: white, flicker_fm: flicker, random_walk_fm: walk, seed: 0 }, tau);
        prop_assert!((whole - sum).abs() <= 1e-12 * whole.max(1e-300));
    }

    #[test]
    fn chi_squared_is_unit_free(k in 1e-3f64..1e3, values in prop::collection::vec((1.0f64..1e3, 1.0f64..1e3), 5..40)) {
        let data: Vec<f64> = values.iter().map(|v| v.0).collect();
        let model: Vec<f64> = values.iter().map(|v| v.1).collect();
        let sigma: Vec<f64> = data.iter().map(|d| d.sqrt()).collect();
        let scale = |v: &[f64]| v.iter().map(|x| k * x).collect::<Vec<_>>();
        let (a, ra) = chi_squared(&data, &model, &sigma, 2).unwrap();
        let (b, rb) = chi_squared(&scale(&data), &scale(&model), &scale(&sigma), 2).unwrap();
        prop_assert!((a / b - 1.0).abs() < 1e-12 && (ra / rb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dispersion_shift_is_antisymmetric_in_the_wavelengths(
        a in 400e-9f64..1500e-9, b in 400e-9f64..1500e-9, dp in -500.0f64..500.0,
    ) {
        let air = AirState::standard();
        let ab = dispersion_shift(a, b, &air, dp).unwrap() / (SPEED_OF_LIGHT / b);
        let ba = dispersion_shift(b, a, &air, dp).unwrap() / (SPEED_OF_LIGHT / a);
        prop_assert!((ab + ba).abs() <= 1e-12 * ab.abs().max(1e-18));
    }

    #[test]
    fn pdh_error_repeats_every_free_spectral_range(nu in -50e6f64..50e6, modes in -3i32..3) {
        let cavity = CavityModel { air: AirState::VACUUM, ..CavityModel::default() };
        let wl = 852e-9;
        let fsr = cavity.free_spectral_range(wl).unwrap();
        let demod = DemodConfig::default();
        let e0 = pdh_error_cavity(&cavity, wl, nu, &demod).unwrap();
        let e1 = pdh_error_cavity(&cavity, wl, nu + modes as f64 * fsr, &demod).unwrap();
        prop_assert!((e0 - e1).abs() < 1e-9);
    }
}
