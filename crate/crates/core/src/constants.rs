//! Physical constants and literature values used across the crate.
//!
//! Every number that is not a configuration default lives here so it can be
//! audited in one place.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Bohr magneton divided by Planck's constant, Hz/G.
pub const BOHR_MAGNETON_HZ_PER_GAUSS: f64 = 1.399_624_604e6;

// Edlén (1966) dispersion of standard dry air (15 °C, 101325 Pa, 0.03 % CO2):
// (n - 1) * 1e8 = A + B / (C - s^2) + D / (E - s^2), s = 1/λ in µm^-1.
pub const EDLEN_A: f64 = 8342.13;
pub const EDLEN_B: f64 = 2_406_030.0;
pub const EDLEN_C: f64 = 130.0;
pub const EDLEN_D: f64 = 15_997.0;
pub const EDLEN_E: f64 = 38.9;
/// Reference pressure of the Edlén standard air, Pa.
pub const STANDARD_PRESSURE: f64 = 101_325.0;
/// Reference temperature of the Edlén standard air, °C.
pub const STANDARD_TEMPERATURE: f64 = 15.0;
pub const ZERO_CELSIUS: f64 = 273.15;

/// Cs D2 line (6S1/2 -> 6P3/2) vacuum wavelength, m.
pub const CS_D2_WAVELENGTH: f64 = 852.347_275e-9;
/// Cs 6P3/2 hyperfine intervals, Hz.
pub const CS_D2_F2_F3: f64 = 151.2247e6;
pub const CS_D2_F3_F4: f64 = 201.2871e6;
/// Cs D2 natural linewidth (FWHM), Hz.
pub const CS_D2_NATURAL_WIDTH: f64 = 5.234e6;
pub const CS_MASS_AMU: f64 = 132.905;

/// Rb D1 line wavelength, m.
pub const RB_D1_WAVELENGTH: f64 = 794.979e-9;
/// Rb D1 natural linewidth (FWHM), Hz.
pub const RB_D1_NATURAL_WIDTH: f64 = 5.746e6;
pub const RB85_MASS_AMU: f64 = 84.912;
pub const RB87_MASS_AMU: f64 = 86.909;
pub const RB85_ABUNDANCE: f64 = 0.722;
pub const RB87_ABUNDANCE: f64 = 0.278;
/// 87Rb 5S1/2 hyperfine splitting, Hz.
pub const RB87_GROUND_SPLITTING: f64 = 6.834_682e9;
/// 85Rb 5S1/2 hyperfine splitting, Hz.
pub const RB85_GROUND_SPLITTING: f64 = 3.035_732e9;
/// 87Rb 5P1/2 hyperfine splitting, Hz.
pub const RB87_P12_SPLITTING: f64 = 814.5e6;
/// 85Rb 5P1/2 hyperfine splitting, Hz.
pub const RB85_P12_SPLITTING: f64 = 361.58e6;
/// Isotope shift of the D1 centre of gravity, nu(87) - nu(85), Hz.
pub const RB_D1_ISOTOPE_SHIFT: f64 = 77.69e6;

// 40Ca+ decay rates, rad/s.
pub const CA_GAMMA_P_TO_S: f64 = std::f64::consts::TAU * 20.7e6;
pub const CA_GAMMA_P_TO_D: f64 = std::f64::consts::TAU * 1.69e6;

// Landé factors of the 40Ca+ levels in the eight-level model.
pub const LANDE_S12: f64 = 2.0;
pub const LANDE_P12: f64 = 2.0 / 3.0;
pub const LANDE_D32: f64 = 4.0 / 5.0;

/// Carrier of the 795 nm slave laser used for fractional frequencies, Hz.
pub const SLAVE_CARRIER: f64 = SPEED_OF_LIGHT / 795e-9;

/// Seconds in a day.
pub const DAY: f64 = 86_400.0;
