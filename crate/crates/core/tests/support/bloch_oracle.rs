//! Independent master-equation oracle for the Bloch model: operators built
//! from tabulated Clebsch–Gordan coefficients and a brute-force time
//! integration to the steady state. Shared by the integration and
//! acceptance tests.

#![allow(dead_code)]

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use nalgebra::{DMatrix, DVector, SMatrix};
use num_complex::Complex64;
use translock::bloch::{Geometry, IonConfig};
use translock::constants::{BOHR_MAGNETON_HZ_PER_GAUSS, LANDE_D32, LANDE_P12, LANDE_S12};

pub type M8 = SMatrix<Complex64, 8, 8>;

const fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

// (lower index, P index, 2q, <j m; 1 q | 1/2 m'>)
const S_TO_P: [(usize, usize, i32, f64); 4] = [
    (0, 2, 0, -0.577_350_269_189_625_8),
    (0, 3, 2, -0.816_496_580_927_726),
    (1, 2, -2, 0.816_496_580_927_726),
    (1, 3, 0, 0.577_350_269_189_625_8),
];
const D_TO_P: [(usize, usize, i32, f64); 6] = [
    (4, 2, 2, FRAC_1_SQRT_2),
    (5, 2, 0, -0.577_350_269_189_625_8),
    (5, 3, 2, 0.408_248_290_463_863),
    (6, 2, -2, 0.408_248_290_463_863),
    (6, 3, 0, -0.577_350_269_189_625_8),
    (7, 3, -2, FRAC_1_SQRT_2),
];

/// σ-, π, σ+ components of a linear polarization at `alpha` for a beam at
/// `theta` to B in the x–z plane.
fn components(theta: f64, alpha: f64) -> [Complex64; 3] {
    let (ex, ey, ez) = (alpha.cos() * theta.cos(), alpha.sin(), -alpha.cos() * theta.sin());
    let i = Complex64::i();
    [(c(ex) + i * ey) * FRAC_1_SQRT_2, c(ez), -(c(ex) - i * ey) * FRAC_1_SQRT_2]
}

pub fn oracle_operators(cfg: &IonConfig) -> (M8, Vec<M8>) {
    let mu = TAU * BOHR_MAGNETON_HZ_PER_GAUSS * cfg.magnetic_field;
    let half_m = [-0.5, 0.5, -0.5, 0.5, -1.5, -0.5, 0.5, 1.5];
    let mut h = M8::zeros();
    for k in 0..8 {
        let (g, offset) = match k {
            0 | 1 => (LANDE_S12, 0.0),
            2 | 3 => (LANDE_P12, -cfg.detuning_397),
            _ => (LANDE_D32, cfg.detuning_866 - cfg.detuning_397),
        };
        h[(k, k)] = c(offset + g * half_m[k] * mu);
    }
    let geo = cfg.geometry;
    let c397 = components(geo.k_angle, geo.polarization_397);
    let c866 = components(geo.k_angle, geo.polarization_866);
    for (table, comps, rabi) in [(&S_TO_P[..], c397, cfg.rabi_397), (&D_TO_P[..], c866, cfg.rabi_866)] {
        for &(g, p, two_q, cg) in table {
            let v = comps[(two_q / 2 + 1) as usize] * (0.5 * rabi * cg);
            h[(p, g)] += v;
            h[(g, p)] += v.conj();
        }
    }
    let mut jumps = Vec::new();
    for (table, gamma) in [(&S_TO_P[..], cfg.decay_p_to_s), (&D_TO_P[..], cfg.decay_p_to_d)] {
        for two_q in [-2, 0, 2] {
            let mut op = M8::zeros();
            for &(g, p, q, cg) in table {
                if q == two_q {
                    op[(g, p)] = c(gamma.sqrt() * cg);
                }
            }
            jumps.push(op);
        }
    }
    for (levels, lw) in [(&[0usize, 1][..], cfg.laser_linewidth_397), (&[4usize, 5, 6, 7][..], cfg.laser_linewidth_866)] {
        let mut op = M8::zeros();
        for &k in levels {
            op[(k, k)] = c((2.0 * TAU * lw).sqrt());
        }
        jumps.push(op);
    }
    (h, jumps)
}

/// Long-time limit of RK4 integration from the S-manifold mixture. One RK4
/// step is assembled as a 64×64 propagator by acting on basis matrices, then
/// squared repeatedly: 2^24 steps (milliseconds) outlast every relaxation time
/// while keeping the accumulated rounding near 1e-9. Convergence is checked
/// against 2^22 steps.
pub fn integrate_to_steady_state(cfg: &IonConfig) -> M8 {
    let (h, jumps) = oracle_operators(cfg);
    let i = Complex64::i();
    let decay: M8 = jumps.iter().map(|j| j.adjoint() * j).sum::<M8>() * c(0.5);
    let h_eff = h - decay * i;
    let h_eff_dag = h_eff.adjoint();
    let jumps_dag: Vec<M8> = jumps.iter().map(|j| j.adjoint()).collect();
    let rhs = |r: &M8| -> M8 {
        let mut d = (h_eff * r - r * h_eff_dag) * (-i);
        for (j, jd) in jumps.iter().zip(&jumps_dag) {
            d += j * r * jd;
        }
        d
    };
    let scale = h.iter().map(|x| x.norm()).fold(cfg.decay_p_to_s, f64::max);
    let dt = 0.05 / scale;
    let step = |r: &M8| -> M8 {
        let k1 = rhs(r);
        let k2 = rhs(&(r + k1 * c(0.5 * dt)));
        let k3 = rhs(&(r + k2 * c(0.5 * dt)));
        let k4 = rhs(&(r + k3 * c(dt)));
        r + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt / 6.0)
    };
    let mut propagator = DMatrix::<Complex64>::zeros(64, 64);
    for col in 0..64 {
        let mut basis = M8::zeros();
        basis[(col % 8, col / 8)] = c(1.0);
        let out = step(&basis);
        for row in 0..64 {
            propagator[(row, col)] = out[(row % 8, row / 8)];
        }
    }
    let mut rho0 = DVector::<Complex64>::zeros(64);
    rho0[0] = c(0.5);
    rho0[9] = c(0.5);
    let mut earlier = rho0.clone();
    for k in 0..24 {
        propagator = &propagator * &propagator;
        // decayed modes would otherwise sink into subnormals
        propagator.apply(|x| {
            if x.norm() < 1e-150 {
                *x = c(0.0)
            }
        });
        if k == 21 {
            earlier = &propagator * &rho0;
        }
    }
    let v = propagator * rho0;
    assert!((&v - earlier).norm() < 1e-7, "integration has not settled");
    M8::from_iterator(v.iter().copied())
}

pub fn regression_configs() -> Vec<IonConfig> {
    let base = IonConfig::default();
    let mhz = |x: f64| TAU * x * 1e6;
    let geo = |k: f64, a: f64, b: f64| Geometry { k_angle: k, polarization_397: a, polarization_866: b };
    vec![
        IonConfig { detuning_866: mhz(5.0), ..base },
        IonConfig { detuning_866: mhz(-12.0), ..base },
        IonConfig { detuning_866: mhz(-27.0), ..base },
        IonConfig { rabi_866: mhz(8.0), detuning_866: mhz(2.0), ..base },
        IonConfig { magnetic_field: 1.0, detuning_397: mhz(-15.0), detuning_866: mhz(-5.0), ..base },
        IonConfig { magnetic_field: 6.0, rabi_397: mhz(25.0), detuning_866: mhz(-30.0), ..base },
        IonConfig { geometry: geo(0.3, 0.2, 1.1), detuning_866: mhz(1.0), ..base },
        IonConfig { geometry: geo(1.2, 1.5, 0.4), detuning_866: mhz(-20.0), ..base },
        IonConfig { laser_linewidth_397: 1e6, laser_linewidth_866: 0.5e6, detuning_866: mhz(-40.0), ..base },
        IonConfig { rabi_397: mhz(5.0), rabi_866: mhz(5.0), detuning_397: mhz(-8.0), detuning_866: mhz(-8.0), ..base },
    ]
}

