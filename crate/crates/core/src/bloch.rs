//! Eight-level optical Bloch model of 40Ca+ driven on S1/2–P1/2 (397 nm) and
//! D3/2–P1/2 (866 nm).
//!
//! Basis order: `|S,-1/2>, |S,+1/2>, |P,-1/2>, |P,+1/2>, |D,-3/2> .. |D,+3/2>`.
//! Energies are angular frequencies (rad/s) in the frame rotating with both
//! lasers, where S sits at 0, P at `-Δ397` and D at `Δ866 - Δ397` (plus
//! Zeeman shifts). Density matrices are vectorised by stacking columns, so
//! `ρ[i][j]` lives at index `i + 8 j` and `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::clebsch_gordan;
use crate::constants::*;
use crate::error::{Error, Result};

pub const LEVELS: usize = 8;
const DIM: usize = LEVELS * LEVELS;

pub const S_LEVELS: [usize; 2] = [0, 1];
pub const P_LEVELS: [usize; 2] = [2, 3];
pub const D_LEVELS: [usize; 4] = [4, 5, 6, 7];

/// Twice the magnetic quantum number of each basis state.
pub const TWO_M: [i64; LEVELS] = [-1, 1, -1, 1, -3, -1, 1, 3];

pub type DensityMatrix = SMatrix<Complex64, LEVELS, LEVELS>;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Beam directions and polarizations relative to the quantization axis B = z.
/// The beams travel in the x–z plane at `k_angle` to B; a polarization angle
/// of 0 is "horizontal" (in that plane) and π/2 is "vertical" (along y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub k_angle: f64,
    pub polarization_397: f64,
    pub polarization_866: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { k_angle: PI / 4.0, polarization_397: PI / 2.0, polarization_866: 0.0 }
    }
}

impl Geometry {
    pub fn wave_vector(&self) -> Vector3<f64> {
        Vector3::new(self.k_angle.sin(), 0.0, self.k_angle.cos())
    }

    /// Lab-frame polarization for angle `alpha`, with an orthogonal admixture
    /// of amplitude `sqrt(impurity)`.
    pub fn polarization(&self, alpha: f64, impurity: f64) -> Vector3<Complex64> {
        let horizontal = Vector3::new(self.k_angle.cos(), 0.0, -self.k_angle.sin());
        let vertical = Vector3::new(0.0, 1.0, 0.0);
        let main = horizontal * alpha.cos() + vertical * alpha.sin();
        let orthogonal = -horizontal * alpha.sin() + vertical * alpha.cos();
        let e = main * (1.0 - impurity).sqrt() + orthogonal * impurity.sqrt();
        e.map(|x| Complex64::new(x, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonConfig {
    /// G
    pub magnetic_field: f64,
    /// rad/s
    pub rabi_397: f64,
    /// rad/s
    pub rabi_866: f64,
    /// Laser minus atomic frequency, rad/s.
    pub detuning_397: f64,
    /// rad/s
    pub detuning_866: f64,
    /// Hz
    pub laser_linewidth_397: f64,
    /// Hz
    pub laser_linewidth_866: f64,
    pub geometry: Geometry,
    /// rad/s
    pub decay_p_to_s: f64,
    /// rad/s
    pub decay_p_to_d: f64,
    /// Power fraction of the orthogonal polarization, same for both beams.
    #[serde(default)]
    pub polarization_impurity: f64,
    /// Optical phases of the 397 and 866 fields, rad.
    #[serde(default)]
    pub laser_phases: [f64; 2],
}

impl Default for IonConfig {
    /// Parameters of the reference excitation spectrum at the 866 nm resonance.
    fn default() -> Self {
        Self {
            magnetic_field: 3.8,
            rabi_397: TAU * 15e6,
            rabi_866: TAU * 3.5e6,
            detuning_397: -TAU * 27e6,
            detuning_866: 0.0,
            laser_linewidth_397: 268e3,
            laser_linewidth_866: 134e3,
            geometry: Geometry::default(),
            decay_p_to_s: CA_GAMMA_P_TO_S,
            decay_p_to_d: CA_GAMMA_P_TO_D,
            polarization_impurity: 0.0,
            laser_phases: [0.0, 0.0],
        }
    }
}

impl IonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        let finite = [
            self.magnetic_field,
            self.rabi_397,
            self.rabi_866,
            self.detuning_397,
            self.detuning_866,
            self.laser_linewidth_397,
            self.laser_linewidth_866,
            self.geometry.k_angle,
            self.geometry.polarization_397,
            self.geometry.polarization_866,
            self.laser_phases[0],
            self.laser_phases[1],
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("ion parameters must be finite");
        }
        if !(self.decay_p_to_s > 0.0 && self.decay_p_to_d > 0.0) {
            return bad("decay rates must be positive");
        }
        if !(self.laser_linewidth_397 >= 0.0 && self.laser_linewidth_866 >= 0.0) {
            return bad("laser linewidths must be non-negative");
        }
        if !(0.0..=0.1).contains(&self.polarization_impurity) {
            return bad("polarization impurity must lie in [0, 0.1]");
        }
        Ok(())
    }

    /// Larmor unit μB·B in rad/s.
    pub fn larmor(&self) -> f64 {
        TAU * BOHR_MAGNETON_HZ_PER_GAUSS * self.magnetic_field
    }
}

/// Spherical components `[σ-, π, σ+]` of a polarization vector for light
/// travelling along `k`, with B along z. The σ± entries drive Δm = ±1.
pub fn coupling_amplitudes(k: &Vector3<f64>, polarization: &Vector3<Complex64>) -> Result<[Complex64; 3]> {
    if (k.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Geometry(format!("wave vector must be a unit vector, |k| = {}", k.norm())));
    }
    let norm = polarization.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Geometry(format!("polarization must be normalised, |e| = {norm}")));
    }
    let transverse = polarization[0] * k[0] + polarization[1] * k[1] + polarization[2] * k[2];
    if transverse.norm() > 1e-9 {
        return Err(Error::Geometry("polarization is not orthogonal to the wave vector".into()));
    }
    let (ex, ey, ez) = (polarization[0], polarization[1], polarization[2]);
    Ok([(ex + I * ey) * FRAC_1_SQRT_2, ez, -(ex - I * ey) * FRAC_1_SQRT_2])
}

/// Zeeman part of the Hamiltonian (diagonal, rad/s).
pub fn zeeman_hamiltonian(config: &IonConfig) -> DensityMatrix {
    let mu_b = config.larmor();
    let mut h = DensityMatrix::zeros();
    for (k, &two_m) in TWO_M.iter().enumerate() {
        let g = match k {
            0 | 1 => LANDE_S12,
            2 | 3 => LANDE_P12,
            _ => LANDE_D32,
        };
        h[(k, k)] = Complex64::new(g * 0.5 * two_m as f64 * mu_b, 0.0);
    }
    h
}

/// Dipole coupling `(Ω/2) c_q <j_g m_g; 1 q | 1/2 m_p>` between each lower
/// state and each P state.
fn dipole_block(lower: &[usize], two_j_lower: i64, components: &[Complex64; 3], rabi: f64) -> Vec<(usize, usize, Complex64)> {
    let mut out = Vec::new();
    for &p in &P_LEVELS {
        for &g in lower {
            let two_q = TWO_M[p] - TWO_M[g];
            if two_q.abs() > 2 {
                continue;
            }
            let cg = clebsch_gordan(two_j_lower, TWO_M[g], 2, two_q, 1, TWO_M[p]);
            let c = components[(two_q / 2 + 1) as usize];
            let v = c * (0.5 * rabi * cg);
            if v != ZERO {
                out.push((p, g, v));
            }
        }
    }
    out
}

/// Full rotating-frame Hamiltonian (rad/s).
pub fn hamiltonian(config: &IonConfig) -> Result<DensityMatrix> {
    let mut h = zeeman_hamiltonian(config);
    for &p in &P_LEVELS {
        h[(p, p)] -= config.detuning_397;
    }
    for &d in &D_LEVELS {
        h[(d, d)] += config.detuning_866 - config.detuning_397;
    }
    let k = config.geometry.wave_vector();
    let c397 = coupling_amplitudes(
        &k,
        &config.geometry.polarization(config.geometry.polarization_397, config.polarization_impurity),
    )?;
    let c866 = coupling_amplitudes(
        &k,
        &config.geometry.polarization(config.geometry.polarization_866, config.polarization_impurity),
    )?;
    let phases = [Complex64::from_polar(1.0, config.laser_phases[0]), Complex64::from_polar(1.0, config.laser_phases[1])];
    for (p, g, v) in dipole_block(&S_LEVELS, 1, &c397, config.rabi_397) {
        h[(p, g)] += v * phases[0];
        h[(g, p)] += (v * phases[0]).conj();
    }
    for (p, g, v) in dipole_block(&D_LEVELS, 3, &c866, config.rabi_866) {
        h[(p, g)] += v * phases[1];
        h[(g, p)] += (v * phases[1]).conj();
    }
    Ok(h)
}

/// Lindblad jump operators: spontaneous decay P→S and P→D per polarization
/// channel, and laser phase diffusion as dephasing of S (397) and D (866).
pub fn jump_operators(config: &IonConfig) -> Vec<DensityMatrix> {
    let mut ops = Vec::new();
    for (lower, two_j, gamma) in [
        (&S_LEVELS[..], 1, config.decay_p_to_s),
        (&D_LEVELS[..], 3, config.decay_p_to_d),
    ] {
        for two_q in [-2i64, 0, 2] {
            let mut c = DensityMatrix::zeros();
            for &g in lower {
                for &p in &P_LEVELS {
                    if TWO_M[p] - TWO_M[g] == two_q {
                        let cg = clebsch_gordan(two_j, TWO_M[g], 2, two_q, 1, TWO_M[p]);
                        c[(g, p)] = Complex64::new(gamma.sqrt() * cg, 0.0);
                    }
                }
            }
            if c.iter().any(|x| *x != ZERO) {
                ops.push(c);
            }
        }
    }
    // L = sqrt(γ) Π gives the Π/rest coherences a decay rate γ/2 = 2π δν.
    for (levels, linewidth) in [(&S_LEVELS[..], config.laser_linewidth_397), (&D_LEVELS[..], config.laser_linewidth_866)] {
        if linewidth > 0.0 {
            let mut c = DensityMatrix::zeros();
            for &k in levels {
                c[(k, k)] = Complex64::new((2.0 * TAU * linewidth).sqrt(), 0.0);
            }
            ops.push(c);
        }
    }
    ops
}

/// Column-stacked generator: `d vec(ρ)/dt = matrix · vec(ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    pub matrix: DMatrix<Complex64>,
}

#[inline]
pub fn vec_index(i: usize, j: usize) -> usize {
    i + LEVELS * j
}

fn kron(a: &DensityMatrix, b: &DensityMatrix, out: &mut DMatrix<Complex64>, factor: Complex64) {
    for ai in 0..LEVELS {
        for aj in 0..LEVELS {
            let x = a[(ai, aj)];
            if x == ZERO {
                continue;
            }
            let x = x * factor;
            for bi in 0..LEVELS {
                for bj in 0..LEVELS {
                    let y = b[(bi, bj)];
                    if y != ZERO {
                        out[(ai * LEVELS + bi, aj * LEVELS + bj)] += x * y;
                    }
                }
            }
        }
    }
}

fn liouvillian_from(h: &DensityMatrix, jumps: &[DensityMatrix]) -> Liouvillian {
    let id = DensityMatrix::identity();
    let mut l = DMatrix::<Complex64>::zeros(DIM, DIM);
    // -i (I ⊗ H - Hᵀ ⊗ I)
    kron(&id, h, &mut l, -I);
    kron(&h.transpose(), &id, &mut l, I);
    for c in jumps {
        let cdc = c.adjoint() * c;
        kron(&c.conjugate(), c, &mut l, Complex64::new(1.0, 0.0));
        kron(&id, &cdc, &mut l, Complex64::new(-0.5, 0.0));
        kron(&cdc.transpose(), &id, &mut l, Complex64::new(-0.5, 0.0));
    }
    Liouvillian { matrix: l }
}

pub fn build_liouvillian(config: &IonConfig) -> Result<Liouvillian> {
    config.validate()?;
    Ok(liouvillian_from(&hamiltonian(config)?, &jump_operators(config)))
}

impl Liouvillian {
    /// `L[ρ]` as a matrix.
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let v = DVector::from_iterator(DIM, rho.iter().copied());
        let out = &self.matrix * v;
        DensityMatrix::from_iterator(out.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.matrix.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// The generator in the real coordinates of [`real_coordinates`].
    fn real_generator(&self) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::zeros(DIM, DIM);
        for (k, basis) in REAL_BASIS.iter().enumerate() {
            // L · vec(B_k), with B_k having one or two non-zero entries
            let mut col = vec![ZERO; DIM];
            for &(idx, w) in basis.entries().entries() {
                for r in 0..DIM {
                    col[r] += self.matrix[(r, idx)] * w;
                }
            }
            for (r, target) in REAL_BASIS.iter().enumerate() {
                m[(r, k)] = target.read(&col);
            }
        }
        m
    }
}

/// Real coordinates of a Hermitian 8×8 matrix: populations, then Re and Im
/// of each upper-triangle coherence.
#[derive(Debug, Clone, Copy)]
enum RealCoord {
    Population(usize),
    Real(usize, usize),
    Imag(usize, usize),
}

struct Entries([(usize, Complex64); 2], usize);

impl Entries {
    fn entries(&self) -> &[(usize, Complex64)] {
        &self.0[..self.1]
    }
}

impl RealCoord {
    fn entries(&self) -> Entries {
        let one = Complex64::new(1.0, 0.0);
        match *self {
            RealCoord::Population(i) => Entries([(vec_index(i, i), one), (0, ZERO)], 1),
            RealCoord::Real(i, j) => Entries([(vec_index(i, j), one), (vec_index(j, i), one)], 2),
            RealCoord::Imag(i, j) => Entries([(vec_index(i, j), I), (vec_index(j, i), -I)], 2),
        }
    }

    fn read(&self, v: &[Complex64]) -> f64 {
        match *self {
            RealCoord::Population(i) => v[vec_index(i, i)].re,
            RealCoord::Real(i, j) => v[vec_index(i, j)].re,
            RealCoord::Imag(i, j) => v[vec_index(i, j)].im,
        }
    }
}

static REAL_BASIS: std::sync::LazyLock<Vec<RealCoord>> = std::sync::LazyLock::new(|| {
    let mut b: Vec<RealCoord> = (0..LEVELS).map(RealCoord::Population).collect();
    for i in 0..LEVELS {
        for j in i + 1..LEVELS {
            b.push(RealCoord::Real(i, j));
            b.push(RealCoord::Imag(i, j));
        }
    }
    b
});

fn density_from_real(x: &[f64]) -> DensityMatrix {
    let mut rho = DensityMatrix::zeros();
    for (k, c) in REAL_BASIS.iter().enumerate() {
        match *c {
            RealCoord::Population(i) => rho[(i, i)] = Complex64::new(x[k], 0.0),
            RealCoord::Real(i, j) => {
                rho[(i, j)].re = x[k];
                rho[(j, i)].re = x[k];
            }
            RealCoord::Imag(i, j) => {
                rho[(i, j)].im = x[k];
                rho[(j, i)].im = -x[k];
            }
        }
    }
    rho
}

/// Names the manifolds that carry stationary states beyond the first.
/// Orthonormal basis of the numerical kernel, in real coordinates.
fn null_space(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let svd = m.clone().svd(false, true);
    let scale = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let v_t = svd.v_t.expect("requested V");
    (0..DIM)
        .filter(|&k| svd.singular_values[k] <= 1e-11 * scale)
        .map(|k| v_t.row(k).transpose())
        .collect()
}

fn decoupled_subspace(m: &DMatrix<f64>) -> (usize, String) {
    let null = null_space(m);
    let mut weight = [0.0f64; 3];
    for v in &null {
        for (c, coord) in REAL_BASIS.iter().enumerate() {
            if let RealCoord::Population(i) = *coord {
                let w = v[c].powi(2);
                weight[if i < 2 { 0 } else if i < 4 { 1 } else { 2 }] += w;
            }
        }
    }
    let names: Vec<&str> = ["S1/2", "P1/2", "D3/2"]
        .iter()
        .zip(weight)
        .filter(|(_, w)| *w > 1e-6)
        .map(|(n, _)| *n)
        .collect();
    let subspace = if names.is_empty() { "coherences only".to_string() } else { names.join(", ") };
    (null.len().max(2), subspace)
}

/// Solves `M x = 0` with the population-0 row replaced by the trace condition.
fn solve_real(m: &DMatrix<f64>) -> Result<DensityMatrix> {
    let mut a = m.clone();
    for c in 0..DIM {
        a[(0, c)] = if c < LEVELS { 1.0 } else { 0.0 };
    }
    let mut b = DVector::<f64>::zeros(DIM);
    b[0] = 1.0;
    // partial pivoting is enough away from degeneracy; full pivoting
    // arbitrates the doubtful cases
    let lu = a.clone().lu();
    let u = lu.u();
    let (smallest, largest) = (0..DIM).map(|k| u[(k, k)].abs()).fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if smallest > 1e-10 * largest {
        if let Some(x) = lu.solve(&b) {
            let residual = (m * &x).amax();
            if x.iter().all(|v| v.is_finite()) && residual <= 1e-10 * m.amax() * x.amax() {
                return Ok(density_from_real(x.as_slice()));
            }
        }
    }
    let lu = a.full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..DIM).map(|k| u[(k, k)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let smallest = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smallest > 1e-12 * largest) {
        let (dimension, subspace) = decoupled_subspace(m);
        return Err(Error::Degenerate { dimension, subspace });
    }
    let x = lu.solve(&b).ok_or_else(|| {
        let (dimension, subspace) = decoupled_subspace(m);
        Error::Degenerate { dimension, subspace }
    })?;
    Ok(density_from_real(x.as_slice()))
}

/// Unique stationary state of `l`.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    solve_real(&l.real_generator())
}

pub fn population(rho: &DensityMatrix, levels: &[usize]) -> f64 {
    levels.iter().map(|&k| rho[(k, k)].re).sum()
}

/// Excitation spectrum versus the 866 nm detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumScan {
    /// rad/s
    pub detuning_866: Vec<f64>,
    /// Counts per bin (with shot noise if requested). NaN at gaps.
    pub counts: Vec<f64>,
    /// Noise-free model counts. NaN at gaps.
    pub model: Vec<f64>,
    pub shot_noise: bool,
    /// Counts per unit P→S scattering rate (s), i.e. bin time × detection efficiency.
    pub scale: f64,
    /// Counts per bin.
    pub background: f64,
    /// Indices where the steady state could not be solved.
    pub gaps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    /// s
    pub scale: f64,
    pub background: f64,
    /// Seed of the Poisson noise; `None` gives the noise-free model.
    #[serde(default)]
    pub shot_noise_seed: Option<u64>,
}

impl Default for DetectionConfig {
    /// 100 ms bins at 0.2 % detection efficiency, 40 background counts.
    fn default() -> Self {
        Self { scale: 0.1 * 2e-3, background: 40.0, shot_noise_seed: None }
    }
}

/// Generator pieces for a scan: `M(Δ866) = base + Δ866 · slope`.
pub struct ScanGenerator {
    base: DMatrix<f64>,
    slope_diag: Vec<(usize, usize, f64)>,
}

impl ScanGenerator {
    pub fn new(config: &IonConfig) -> Result<Self> {
        let base = build_liouvillian(&IonConfig { detuning_866: 0.0, ..*config })?.real_generator();
        // Δ866 only shifts the D energies: coherences between a D and a non-D
        // state rotate at ∓Δ866.
        let mut slope_diag = Vec::new();
        for (r, coord) in REAL_BASIS.iter().enumerate() {
            if let RealCoord::Real(i, j) = *coord {
                let sign = match (D_LEVELS.contains(&i), D_LEVELS.contains(&j)) {
                    (true, false) => 1.0,
                    (false, true) => -1.0,
                    _ => continue,
                };
                // d(ρij)/dt ∋ -i (E_i - E_j) ρij, ρij = a + i b
                // da/dt ∋ (E_i - E_j) b, db/dt ∋ -(E_i - E_j) a
                slope_diag.push((r, r + 1, sign));
                slope_diag.push((r + 1, r, -sign));
            }
        }
        Ok(Self { base, slope_diag })
    }

    fn generator(&self, detuning_866: f64) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for &(r, c, s) in &self.slope_diag {
            m[(r, c)] += s * detuning_866;
        }
        m
    }

    pub fn steady_state(&self, detuning_866: f64) -> Result<DensityMatrix> {
        solve_real(&self.generator(detuning_866))
    }

    /// P1/2 population of the stationary state. A degenerate kernel is
    /// accepted when no stationary state has any P population (e.g. without
    /// 397 nm light).
    pub fn excited_population(&self, detuning_866: f64) -> Result<f64> {
        match self.steady_state(detuning_866) {
            Ok(rho) => Ok(population(&rho, &P_LEVELS)),
            Err(e @ Error::Degenerate { .. }) => {
                let null = null_space(&self.generator(detuning_866));
                let dark = null.iter().all(|v| (v[P_LEVELS[0]] + v[P_LEVELS[1]]).abs() < 1e-9);
                if dark { Ok(0.0) } else { Err(e) }
            }
            Err(e) => Err(e),
        }
    }
}

/// Steady-state fluorescence over `grid` (rad/s), evaluated in parallel.
pub fn excitation_spectrum(config: &IonConfig, grid: &[f64], detection: &DetectionConfig) -> Result<SpectrumScan> {
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("scan grid must be finite".into()));
    }
    if !(detection.scale >= 0.0 && detection.background >= 0.0) {
        return Err(Error::InvalidModel("detection scale and background must be non-negative".into()));
    }
    let generator = ScanGenerator::new(config)?;
    let rate = config.decay_p_to_s;
    let populations: Vec<Result<f64>> = grid
        .par_iter()
        .map(|&d| generator.excited_population(d))
        .collect();
    let mut model = Vec::with_capacity(grid.len());
    let mut gaps = Vec::new();
    for (k, p) in populations.into_iter().enumerate() {
        match p {
            Ok(p) => model.push(detection.scale * rate * p.max(0.0) + detection.background),
            Err(Error::Degenerate { .. }) => {
                gaps.push(k);
                model.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    let counts = match detection.shot_noise_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            model
                .iter()
                .map(|&m| {
                    if m.is_nan() {
                        f64::NAN
                    } else if m > 0.0 {
                        Poisson::new(m).map(|p| p.sample(&mut rng)).unwrap_or(m)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        None => model.clone(),
    };
    Ok(SpectrumScan {
        detuning_866: grid.to_vec(),
        counts,
        model,
        shot_noise: detection.shot_noise_seed.is_some(),
        scale: detection.scale,
        background: detection.background,
        gaps,
    })
}

/// Two-photon resonance detunings `Δ866 = Δ397 + μB B (g_S m_S - g_D m_D)`
/// for every S/D pair linked through a common P sublevel by the polarizations
/// present, sorted and deduplicated (rad/s).
pub fn dark_resonance_conditions(config: &IonConfig) -> Result<Vec<f64>> {
    let h = hamiltonian(&IonConfig { detuning_866: 0.0, ..*config })?;
    let zeeman = zeeman_hamiltonian(config);
    let mut out: Vec<f64> = Vec::new();
    for &s in &S_LEVELS {
        for &d in &D_LEVELS {
            let linked = P_LEVELS.iter().any(|&p| h[(p, s)].norm() > 0.0 && h[(p, d)].norm() > 0.0);
            if linked {
                out.push(config.detuning_397 + (zeeman[(s, s)].re - zeeman[(d, d)].re));
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-6 * config.larmor().abs().max(1.0));
    Ok(out)
}

/// Default scan of the reference spectrum: -70..+20 MHz in 0.5 MHz steps (rad/s).
pub fn reference_scan_grid() -> Vec<f64> {
    (0..=180).map(|k| TAU * (-70e6 + 0.5e6 * k as f64)).collect()
}

/// A fluorescence dip found on a scan grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub index: usize,
    /// Grid value at the minimum (same unit as the grid).
    pub center: f64,
    /// Depth relative to the straight line through the shoulders.
    pub contrast: f64,
}

/// Local minima of `y` after removing the straight line through the points
/// `window` steps either side, keeping those deeper than `min_contrast`.
/// Centres are grid points, so they carry half a grid step of resolution.
pub fn find_dips(x: &[f64], y: &[f64], window: usize, min_contrast: f64) -> Vec<Dip> {
    let n = x.len().min(y.len());
    let mut dips: Vec<Dip> = Vec::new();
    if window == 0 || n < 2 * window + 1 {
        return dips;
    }
    for k in window..n - window {
        let (a, b) = (k - window, k + window);
        if [y[a], y[b], y[k - 1], y[k], y[k + 1]].iter().any(|v| !v.is_finite()) {
            continue;
        }
        let line = |j: usize| y[a] + (y[b] - y[a]) * (x[j] - x[a]) / (x[b] - x[a]);
        let r = |j: usize| y[j] - line(j);
        if !(r(k) < r(k - 1) && r(k) <= r(k + 1)) {
            continue;
        }
        let base = line(k);
        let contrast = if base > 0.0 { -r(k) / base } else { 0.0 };
        if contrast < min_contrast {
            continue;
        }
        match dips.last_mut() {
            Some(last) if k - last.index <= window => {
                if contrast > last.contrast {
                    *last = Dip { index: k, center: x[k], contrast };
                }
            }
            _ => dips.push(Dip { index: k, center: x[k], contrast }),
        }
    }
    dips
}

/// Time derivative `-i[H, ρ] + Σ D[C]ρ` computed with 8×8 products.
pub fn master_equation_rhs(h: &DensityMatrix, jumps: &[DensityMatrix], rho: &DensityMatrix) -> DensityMatrix {
    let mut d = (h * rho - rho * h) * (-I);
    for c in jumps {
        let cd = c.adjoint();
        let cdc = cd * c;
        d += c * rho * cd - (cdc * rho + rho * cdc) * Complex64::new(0.5, 0.0);
    }
    d
}

/// Minimum eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(rho: &DensityMatrix) -> f64 {
    let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    herm.symmetric_eigenvalues().min()
}

/// 3×3 rotation helper used by property tests: rotates about y.
pub fn rotation_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}
