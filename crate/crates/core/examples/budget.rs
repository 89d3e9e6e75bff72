//! Prints the in-loop and out-of-loop rms of the default chain for a few seeds.

use translock::chainsim::{simulate_chain, ChainConfig};

fn rms_about_mean(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn main() -> translock::Result<()> {
    let base = ChainConfig::default();
    for seed in 1..=3 {
        let t0 = std::time::Instant::now();
        let set = simulate_chain(&ChainConfig { seed, ..base.clone() })?;
        let window = (2e-3 / base.sim_step).round() as usize;
        let inloop = |label: &str| {
            let s = &set.trace(label).samples;
            let w: Vec<f64> = s.chunks_exact(window).map(rms_about_mean).collect();
            (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt()
        };
        println!(
            "seed {seed}: slave in-loop {:.1} kHz, reference in-loop {:.1} kHz, out-of-loop {:.1} kHz, \
             slave freq {:.1} kHz, ref freq {:.1} kHz, losses {} ({:.2?})",
            inloop("slave_lock_error") / 1e3,
            inloop("reference_lock_error") / 1e3,
            rms_about_mean(&set.trace("out_of_loop").samples) / 1e3,
            rms_about_mean(&set.trace("slave_frequency").samples) / 1e3,
            rms_about_mean(&set.trace("reference_frequency").samples) / 1e3,
            set.lock_losses.len(),
            t0.elapsed()
        );
    }
    Ok(())
}
