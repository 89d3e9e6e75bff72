//! The Bloch steady state against a direct time integration of the master
//! equation, built here from tabulated Clebsch–Gordan coefficients.

#[path = "support/bloch_oracle.rs"]
mod oracle;

use std::f64::consts::TAU;

use oracle::{integrate_to_steady_state, regression_configs};
use proptest::prelude::*;
use translock::bloch::{build_liouvillian, min_eigenvalue, steady_state, Geometry, IonConfig};

#[test]
fn steady_state_matches_time_integration() {
    for (n, cfg) in regression_configs().iter().enumerate() {
        let fast = steady_state(&build_liouvillian(cfg).unwrap()).unwrap();
        let slow = integrate_to_steady_state(cfg);
        for k in 0..8 {
            let (a, b) = (fast[(k, k)].re, slow[(k, k)].re);
            assert!((a - b).abs() < 1e-5, "config {n}, level {k}: {a} vs {b}");
        }
    }
}

#[test]
fn no_repumper_pumps_into_d() {
    let cfg = IonConfig { rabi_866: 0.0, ..IonConfig::default() };
    let rho = integrate_to_steady_state(&cfg);
    let d: f64 = (4..8).map(|k| rho[(k, k)].re).sum();
    let p: f64 = (2..4).map(|k| rho[(k, k)].re).sum();
    assert!(d > 1.0 - 1e-6, "{d}");
    assert!(p < 1e-6, "{p}");
}

fn random_config() -> impl Strategy<Value = IonConfig> {
    (
        (0.1f64..10.0, 0.0f64..40.0, 0.5f64..10.0),
        (-50.0f64..0.0, -60.0f64..40.0),
        (0.0f64..2e6, 0.0f64..2e6),
        (0.05f64..1.5, 0.0f64..3.2, 0.0f64..3.2),
        0.0f64..0.1,
    )
        .prop_map(|((b, o397, o866), (d397, d866), (l397, l866), (k, a, p), imp)| IonConfig {
            magnetic_field: b,
            rabi_397: TAU * o397 * 1e6,
            rabi_866: TAU * o866 * 1e6,
            detuning_397: TAU * d397 * 1e6,
            detuning_866: TAU * d866 * 1e6,
            laser_linewidth_397: l397,
            laser_linewidth_866: l866,
            geometry: Geometry { k_angle: k, polarization_397: a, polarization_866: p },
            polarization_impurity: imp,
            ..IonConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn steady_states_are_density_matrices(cfg in random_config()) {
        let l = build_liouvillian(&cfg).unwrap();
        let rho = steady_state(&l).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!((rho - rho.adjoint()).norm() < 1e-10);
        prop_assert!(min_eigenvalue(&rho) >= -1e-9);
        prop_assert!(l.apply(&rho).norm() <= 1e-10 * l.norm());
    }
}

