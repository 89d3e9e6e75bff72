//! Multi-rate run of the default chain: drift and Allan variance of the 1 s means.

use translock::analysis::{allan_variance, log_spaced_taus, AllanEstimator};
use translock::chainsim::{dispersion_shift, long_term_run, ChainConfig};
use translock::constants::{CS_D2_WAVELENGTH, RB_D1_WAVELENGTH};

fn main() -> translock::Result<()> {
    let hours: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.1);
    let cfg = ChainConfig::default();
    let s = dispersion_shift(CS_D2_WAVELENGTH, RB_D1_WAVELENGTH, &cfg.transfer_cavity.air, 100.0)?;
    println!("dispersion shift: {:.1} kHz/mbar", s / 1e3);
    let t0 = std::time::Instant::now();
    let trace = long_term_run(&cfg, hours * 3600.0, 1.0)?;
    println!("{} bins in {:.1?}", trace.len(), t0.elapsed());
    let max = trace.samples.iter().cloned().fold(f64::MIN, f64::max);
    let min = trace.samples.iter().cloned().fold(f64::MAX, f64::min);
    println!("peak-to-peak {:.1} kHz", (max - min) / 1e3);
    let taus = log_spaced_taus(trace.sample_interval, trace.len(), 4);
    let res = allan_variance(&trace, cfg.slave_laser.carrier_frequency, &taus, AllanEstimator::Overlapping)?;
    for p in &res.points {
        println!("tau {:>8.1}  sigma2 {:.3e}  pairs {}", p.tau, p.sigma_y_squared, p.n_pairs);
    }
    Ok(())
}
