//! Discrete-time controllers and actuator plants: the dual-compensator
//! cavity locker (piezo + heater) and the fast laser-to-cavity lock.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PI stage of the piezo compensator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiCompensator {
    /// V/V
    pub gain_p: f64,
    /// V/(V s)
    pub gain_i: f64,
    /// V
    pub integrator: f64,
}

/// Heater stage: integrates the piezo excursion from its setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaterCompensator {
    /// W/(V s)
    pub gain: f64,
    /// Heater update interval, s.
    pub interval: f64,
    /// Maximum drive, W.
    pub max_power: f64,
}

/// State of one cavity locker.
///
/// The sign of the gains sets the loop polarity: callers choose it so that a
/// positive error moves the cavity resonance towards the laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityLockerState {
    pub piezo_compensator: PiCompensator,
    pub heater_compensator: HeaterCompensator,
    /// PDH value at the zero crossing, V.
    pub pdh_setpoint: f64,
    /// Piezo mid position, V.
    pub piezo_setpoint: f64,
    pub piezo_output: f64,
    pub piezo_limit: f64,
    pub heater_output: f64,
    pub sample_interval: f64,
    /// Time accumulated towards the next heater update.
    #[serde(default)]
    pub heater_clock: f64,
    /// Sum of piezo outputs since the last heater update.
    #[serde(default)]
    pub piezo_accumulator: f64,
    #[serde(default)]
    pub piezo_samples: u64,
    #[serde(default)]
    pub faulted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockerOutput {
    pub piezo_command: f64,
    pub heater_command: f64,
}

impl CavityLockerState {
    pub fn new(gain_p: f64, gain_i: f64, heater_gain: f64, heater_bias: f64, sample_interval: f64) -> Self {
        Self {
            piezo_compensator: PiCompensator { gain_p, gain_i, integrator: 0.0 },
            heater_compensator: HeaterCompensator { gain: heater_gain, interval: 10e-3, max_power: 10.0 },
            pdh_setpoint: 0.0,
            piezo_setpoint: 0.0,
            piezo_output: 0.0,
            piezo_limit: 10.0,
            heater_output: heater_bias,
            sample_interval,
            heater_clock: 0.0,
            piezo_accumulator: 0.0,
            piezo_samples: 0,
            faulted: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_interval > 0.0) {
            return Err(Error::Configuration("locker sample interval must be positive".into()));
        }
        if !(self.piezo_limit > 0.0) {
            return Err(Error::Configuration("piezo limit must be positive".into()));
        }
        if !(self.heater_compensator.interval >= self.sample_interval) {
            return Err(Error::Configuration("heater interval shorter than the sample interval".into()));
        }
        if !(self.heater_output >= 0.0) {
            return Err(Error::Configuration("heater output must be non-negative".into()));
        }
        Ok(())
    }

    /// One controller cycle.
    ///
    /// Piezo: PI on `pdh_error - pdh_setpoint`, clamped, with back-calculation
    /// anti-windup. Heater: every `heater_compensator.interval` it integrates
    /// the mean piezo excursion so the heater gradually takes over the
    /// correction and returns the piezo to its setpoint.
    pub fn step(&mut self, pdh_error: f64, dt: f64) -> Result<LockerOutput> {
        if !pdh_error.is_finite() || !dt.is_finite() {
            self.faulted = true;
            return Err(Error::ControllerFault);
        }
        let e = pdh_error - self.pdh_setpoint;
        let pi = &mut self.piezo_compensator;
        let limit = self.piezo_limit;
        let proportional = pi.gain_p * e;
        // The integrator may not push the output further into saturation.
        let previous = pi.integrator;
        let mut integrated = previous + pi.gain_i * e * dt;
        if integrated > previous && proportional + integrated > limit {
            integrated = previous.max(limit - proportional);
        } else if integrated < previous && proportional + integrated < -limit {
            integrated = previous.min(-limit - proportional);
        }
        pi.integrator = integrated.clamp(-limit, limit);
        self.piezo_output = (proportional + pi.integrator).clamp(-limit, limit);

        self.piezo_accumulator += self.piezo_output;
        self.piezo_samples += 1;
        self.heater_clock += dt;
        let hc = self.heater_compensator;
        if self.heater_clock + 0.5 * dt >= hc.interval {
            let mean = self.piezo_accumulator / self.piezo_samples as f64;
            let drive = self.heater_output + hc.gain * (mean - self.piezo_setpoint) * self.heater_clock;
            self.heater_output = drive.clamp(0.0, hc.max_power);
            self.heater_clock = 0.0;
            self.piezo_accumulator = 0.0;
            self.piezo_samples = 0;
        }
        Ok(LockerOutput { piezo_command: self.piezo_output, heater_command: self.heater_output })
    }
}

/// `locker_step` in free-function form; returns the commands and the new state.
pub fn locker_step(
    state: &CavityLockerState,
    pdh_error: f64,
    dt: f64,
) -> (LockerOutput, CavityLockerState, Option<Error>) {
    let mut next = *state;
    match next.step(pdh_error, dt) {
        Ok(out) => (out, next, None),
        Err(e) => (
            LockerOutput { piezo_command: state.piezo_output, heater_command: state.heater_output },
            CavityLockerState { faulted: true, ..*state },
            Some(e),
        ),
    }
}

/// Second-order resonant piezo stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiezoPlant {
    /// Hz
    pub resonance_frequency: f64,
    pub damping_ratio: f64,
    /// Static displacement per volt, m/V.
    pub gain: f64,
    /// m
    pub position: f64,
    /// m/s
    pub velocity: f64,
}

impl PiezoPlant {
    pub fn new(resonance_frequency: f64, damping_ratio: f64, gain: f64) -> Self {
        Self { resonance_frequency, damping_ratio, gain, position: 0.0, velocity: 0.0 }
    }

    pub fn max_step(&self) -> f64 {
        1.0 / (10.0 * self.resonance_frequency)
    }

    /// Advances `x'' + 2 zeta w x' + w^2 x = w^2 g V` by one step with the
    /// command held constant (exact zero-order-hold propagation).
    pub fn step(&mut self, command: f64, dt: f64) -> Result<f64> {
        if !(self.resonance_frequency > 0.0 && self.damping_ratio > 0.0) {
            return Err(Error::InvalidModel("piezo resonance and damping must be positive".into()));
        }
        if !(dt > 0.0 && dt < self.max_step()) {
            return Err(Error::StepSize { dt, limit: self.max_step() });
        }
        let w = TAU * self.resonance_frequency;
        let z = self.damping_ratio;
        let target = self.gain * command;
        let (x0, v0) = (self.position - target, self.velocity);
        let (x, v) = damped_oscillator(x0, v0, w, z, dt);
        self.position = target + x;
        self.velocity = v;
        Ok(self.position)
    }
}

/// Free response of a damped oscillator after time `t`.
fn damped_oscillator(x0: f64, v0: f64, w: f64, z: f64, t: f64) -> (f64, f64) {
    let a = z * w;
    let decay = (-a * t).exp();
    if z < 1.0 {
        let wd = w * (1.0 - z * z).sqrt();
        let (s, c) = (wd * t).sin_cos();
        let b = (v0 + a * x0) / wd;
        let x = decay * (x0 * c + b * s);
        let v = decay * ((-a * x0 + wd * b) * c + (-a * b - wd * x0) * s);
        (x, v)
    } else {
        // critically/over damped: integrate with small substeps
        let n = 64;
        let h = t / n as f64;
        let (mut x, mut v) = (x0, v0);
        for _ in 0..n {
            let acc = -2.0 * a * v - w * w * x;
            v += acc * h;
            x += v * h;
        }
        (x, v)
    }
}

/// Zero-order-hold transition of a [`PiezoPlant`] precomputed for a fixed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretePiezo {
    a: [[f64; 2]; 2],
    gain: f64,
}

impl PiezoPlant {
    pub fn discretize(&self, dt: f64) -> Result<DiscretePiezo> {
        let mut probe = PiezoPlant { gain: 0.0, position: 1.0, velocity: 0.0, ..*self };
        probe.step(0.0, dt)?;
        let c0 = [probe.position, probe.velocity];
        let mut probe = PiezoPlant { gain: 0.0, position: 0.0, velocity: 1.0, ..*self };
        probe.step(0.0, dt)?;
        let c1 = [probe.position, probe.velocity];
        Ok(DiscretePiezo { a: [[c0[0], c1[0]], [c0[1], c1[1]]], gain: self.gain })
    }
}

impl DiscretePiezo {
    #[inline]
    pub fn step(&self, plant: &mut PiezoPlant, command: f64) -> f64 {
        let target = self.gain * command;
        let x = plant.position - target;
        let v = plant.velocity;
        plant.position = target + (self.a[0][0] * x + self.a[0][1] * v);
        plant.velocity = self.a[1][0] * x + self.a[1][1] * v;
        plant.position
    }
}

pub fn piezo_dynamics_step(plant: &mut PiezoPlant, command: f64, dt: f64) -> Result<f64> {
    plant.step(command, dt)
}

/// First-order thermal plant heated by a resistive wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalPlant {
    /// s
    pub time_constant: f64,
    /// Steady-state temperature rise per watt, °C/W.
    pub gain: f64,
    /// °C
    pub ambient: f64,
    /// °C
    pub temperature: f64,
}

impl ThermalPlant {
    pub fn at_equilibrium(time_constant: f64, gain: f64, ambient: f64, power: f64) -> Self {
        Self { time_constant, gain, ambient, temperature: ambient + gain * power }
    }

    pub fn step(&mut self, power: f64, dt: f64) -> f64 {
        let target = self.ambient + self.gain * power.max(0.0);
        let k = (-dt / self.time_constant).exp();
        self.temperature = target + (self.temperature - target) * k;
        self.temperature
    }
}

/// PI lock of a laser's frequency actuator to a discriminator.
///
/// The update is implicit (backward Euler), modelling an analog loop whose
/// bandwidth approaches the simulation rate; it is unconditionally stable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserLockState {
    /// Hz/Hz
    pub proportional_gain: f64,
    /// 1/s
    pub integral_gain: f64,
    /// Integrator state, Hz.
    pub integrator: f64,
    /// Hz
    pub closed_loop_bandwidth: f64,
    /// Correction applied after the previous step, Hz.
    #[serde(default)]
    pub correction: f64,
}

impl LaserLockState {
    /// PI whose closed-loop pole sits at `bandwidth`: for a laser that follows
    /// its actuator instantly, `T(s) = (kp s + ki) / ((1 + kp) s + ki)`, so
    /// `ki = 2 pi bandwidth (1 + kp)`.
    pub fn with_bandwidth(bandwidth: f64, proportional_gain: f64) -> Self {
        Self {
            proportional_gain,
            integral_gain: TAU * bandwidth * (1.0 + proportional_gain),
            integrator: 0.0,
            closed_loop_bandwidth: bandwidth,
            correction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.closed_loop_bandwidth > 0.0) {
            return Err(Error::Configuration("laser lock bandwidth must be positive".into()));
        }
        if !(self.integral_gain >= 0.0 && self.proportional_gain >= 0.0) {
            return Err(Error::Configuration("laser lock gains must be non-negative".into()));
        }
        Ok(())
    }

    /// Consumes the error measured with the previous correction applied and
    /// returns the new total frequency correction.
    ///
    /// `pdh_error / gauge` is the laser-minus-resonance detuning. The new
    /// correction solves `c = I_prev - ki dt x - kp x` with
    /// `x = x_measured + (c - c_prev)`, i.e. it accounts for its own effect on
    /// the detuning within the step.
    pub fn step(&mut self, pdh_error: f64, gauge: f64, dt: f64) -> Result<f64> {
        if gauge == 0.0 || !gauge.is_finite() {
            return Err(Error::Configuration("laser lock gauge must be finite and non-zero".into()));
        }
        if !pdh_error.is_finite() {
            return Err(Error::ControllerFault);
        }
        let measured = pdh_error / gauge;
        let ki = self.integral_gain * dt;
        let kp = self.proportional_gain;
        let x = (measured - self.correction + self.integrator) / (1.0 + ki + kp);
        self.integrator -= ki * x;
        self.correction = self.integrator - kp * x;
        Ok(self.correction)
    }
}

pub fn laser_lock_step(state: &mut LaserLockState, pdh_error: f64, gauge: f64, dt: f64) -> Result<f64> {
    state.step(pdh_error, gauge, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn locker() -> CavityLockerState {
        CavityLockerState::new(0.2, 500.0, 0.05, 2.0, 1e-4)
    }

    #[test]
    fn equilibrium_is_stationary() {
        let mut s = locker();
        for _ in 0..1000 {
            let out = s.step(0.0, 1e-4).unwrap();
            assert_eq!(out.piezo_command, 0.0);
            assert_eq!(out.heater_command, 2.0);
        }
    }

    #[test]
    fn integrator_grows_linearly_until_clamp() {
        let mut s = CavityLockerState::new(0.0, 500.0, 0.0, 1.0, 1e-4);
        let e = 0.01;
        for _ in 0..100 {
            s.step(e, 1e-4).unwrap();
        }
        assert_relative_eq!(s.piezo_compensator.integrator, 500.0 * e * 100.0 * 1e-4, max_relative = 1e-12);
        for _ in 0..100_000 {
            s.step(e, 1e-4).unwrap();
        }
        assert_eq!(s.piezo_output, 10.0);
        assert!(s.piezo_compensator.integrator <= 10.0);
    }

    #[test]
    fn non_finite_error_faults_and_holds() {
        let mut s = locker();
        s.step(0.3, 1e-4).unwrap();
        let (out, next, err) = locker_step(&s, f64::NAN, 1e-4);
        assert_eq!(err, Some(Error::ControllerFault));
        assert_eq!(out.piezo_command, s.piezo_output);
        assert!(next.faulted);
    }

    #[test]
    fn piezo_dc_gain_and_step_size() {
        let mut p = PiezoPlant::new(3e3, 0.3, 0.125e-6);
        for _ in 0..20_000 {
            p.step(4.0, 1e-5).unwrap();
        }
        assert_relative_eq!(p.position, 0.5e-6, max_relative = 1e-9);
        assert!(matches!(p.step(1.0, 1e-4), Err(Error::StepSize { .. })));
    }

    #[test]
    fn discretized_piezo_matches_direct_steps() {
        let plant = PiezoPlant::new(3e3, 0.3, 0.125e-6);
        let d = plant.discretize(1e-5).unwrap();
        let (mut a, mut b) = (plant, plant);
        for k in 0..500 {
            let v = (k as f64 * 0.05).sin() * 3.0;
            a.step(v, 1e-5).unwrap();
            d.step(&mut b, v);
        }
        assert_relative_eq!(a.position, b.position, max_relative = 1e-9, epsilon = 1e-18);
        assert_relative_eq!(a.velocity, b.velocity, max_relative = 1e-9, epsilon = 1e-12);
    }

    #[test]
    fn thermal_plant_relaxes() {
        let mut t = ThermalPlant::at_equilibrium(30.0, 2.0, 20.0, 1.0);
        assert_eq!(t.temperature, 22.0);
        for _ in 0..3000 {
            t.step(2.0, 0.1);
        }
        // 300 s = 10 time constants
        assert!((t.temperature - 24.0).abs() < 1e-3);
    }

    #[test]
    fn laser_lock_basics() {
        let mut l = LaserLockState::with_bandwidth(30e3, 0.0);
        assert_eq!(l.step(0.0, 2.0, 1e-5).unwrap(), 0.0);
        assert!(matches!(l.step(0.1, 0.0, 1e-5), Err(Error::Configuration(_))));

        // resonance sits D above the free-running laser
        let d = 250e3;
        let gauge = 3e-6;
        let mut l = LaserLockState::with_bandwidth(30e3, 0.0);
        let mut c = 0.0;
        for _ in 0..2000 {
            let detuning = c - d;
            c = l.step(gauge * detuning, gauge, 1e-5).unwrap();
        }
        assert_relative_eq!(c, d, max_relative = 1e-9);
    }
}
