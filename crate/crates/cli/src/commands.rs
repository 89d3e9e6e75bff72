use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};
use translock::analysis::{
    allan_variance, classify_noise, log_spaced_taus, psd as power_spectrum, rms_and_drift, AllanEstimator,
    AllanResult, PsdOptions, Window,
};
use translock::bloch::{dark_resonance_conditions, excitation_spectrum, find_dips, reference_scan_grid, DetectionConfig};
use translock::chainsim::{self, long_term_run_traces, ChainConfig, TraceSet};
use translock::discriminator::gauge_slope;
use translock::fit::{fit_spectrum, model_counts, FitParameter, FitProblem, Point};
use translock::io::{self, Column, Table};
use translock::noise::generate_noise;
use translock::trace::FrequencyTrace;

use crate::config::Config;
use crate::failure::{Failure, InputError, Outcome};
use crate::output::{self, sha256_hex, FileRecord, RunDir, RunManifest};
use crate::svg::{plot, Series};
use crate::{RunArgs, SeedArgs};

pub struct Context {
    argv: Vec<String>,
    start: Instant,
}

impl Context {
    pub fn new(argv: Vec<String>) -> Self {
        Self { argv, start: Instant::now() }
    }
}

/// Collects everything a run writes, then commits it with its manifest.
struct Run {
    dir: RunDir,
    command: &'static str,
    config_hash: String,
    seeds: Vec<u64>,
    inputs: Vec<FileRecord>,
    warnings: Vec<String>,
    lock_loss: bool,
    summary: BTreeMap<String, Value>,
    plot: bool,
}

impl Run {
    fn new(command: &'static str, args: &RunArgs, config: &Config) -> Outcome<Self> {
        let mut dir = RunDir::prepare(&args.out, args.force)?;
        let config_bytes = config.canonical_json();
        let config_hash = sha256_hex(&config_bytes);
        dir.add(output::CONFIG, config_bytes);
        Ok(Self {
            dir,
            command,
            config_hash,
            seeds: Vec::new(),
            inputs: Vec::new(),
            warnings: Vec::new(),
            lock_loss: false,
            summary: BTreeMap::new(),
            plot: args.plot,
        })
    }

    fn input(&mut self, path: &Path) -> Outcome<Vec<u8>> {
        let bytes = std::fs::read(path).input(format!("cannot read {}", path.display()))?;
        self.inputs.push(FileRecord { path: path.display().to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    fn table(&mut self, name: String, table: &Table) -> Outcome<()> {
        self.dir.add(name, table.to_bytes()?);
        Ok(())
    }

    fn svg(&mut self, name: String, render: impl FnOnce() -> String) {
        if self.plot {
            self.dir.add(name, render().into_bytes());
        }
    }

    fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    fn finish(self, ctx: &Context) -> Outcome<()> {
        let manifest = RunManifest {
            tool: env!("CARGO_BIN_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            arguments: ctx.argv.iter().skip(1).cloned().collect(),
            config_hash: self.config_hash,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: Vec::new(),
            wall_clock_seconds: ctx.start.elapsed().as_secs_f64(),
            lock_loss: self.lock_loss,
            warnings: self.warnings,
            summary: self.summary,
        };
        let path = self.dir.path().to_path_buf();
        let manifest = self.dir.commit(manifest)?;
        println!("{} files written to {}", manifest.outputs.len() + 1, path.display());
        for (k, v) in &manifest.summary {
            println!("{k}: {v}");
        }
        Ok(())
    }
}

fn load(path: Option<&Path>) -> Outcome<Config> {
    path.map_or_else(|| Ok(Config::default()), Config::load)
}

/// Seeds to run and the per-seed file prefix.
fn resolve_seeds(args: &SeedArgs, default: u64) -> Vec<(u64, String)> {
    match (&args.seeds, args.seed) {
        (Some(list), _) => list.0.iter().map(|&s| (s, format!("seed-{s}/"))).collect(),
        (None, Some(s)) => vec![(s, String::new())],
        (None, None) => vec![(default, String::new())],
    }
}

fn trace_csv(trace: &FrequencyTrace) -> Outcome<Table> {
    Ok(io::traces_to_table(&[trace])?)
}

fn rms(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// rms about the mean within consecutive windows of `n` samples, combined in quadrature.
fn windowed_rms(x: &[f64], n: usize) -> f64 {
    let w: Vec<f64> = x.chunks_exact(n.max(1)).map(rms).collect();
    if w.is_empty() {
        return rms(x);
    }
    (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt()
}

fn positive(name: &str, v: f64) -> Outcome<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::usage(format!("--{name} must be positive")))
    }
}

fn record_traces(run: &mut Run, prefix: &str, set: &TraceSet, seed: u64) -> Outcome<()> {
    for t in &set.traces {
        run.table(format!("{prefix}{}.csv", t.label), &trace_csv(t)?)?;
    }
    for loss in &set.lock_losses {
        run.warn(format!("seed {seed}: {} lock lost at {:.6} s", loss.stage, loss.time));
    }
    run.lock_loss |= set.lock_lost();
    let ool = set.trace("out_of_loop");
    run.svg(format!("{prefix}out_of_loop.svg"), || {
        let t: Vec<f64> = (0..ool.len()).map(|k| ool.time(k)).collect();
        let khz: Vec<f64> = ool.samples.iter().map(|v| v / 1e3).collect();
        plot(&format!("out-of-loop frequency, seed {seed}"), "time [s]", "frequency [kHz]", &[Series { label: "out_of_loop", x: &t, y: &khz }], false)
    });
    Ok(())
}

fn put(run: &mut Run, key: &str, prefix: &str, value: Value) {
    if prefix.is_empty() {
        run.summary.insert(key.into(), value);
    } else {
        let entry = run.summary.entry(prefix.trim_end_matches('/').to_string()).or_insert_with(|| json!({}));
        entry[key] = value;
    }
}

fn run_seeds<T: Send>(
    seeds: &[(u64, String)],
    job: impl Fn(u64) -> translock::Result<T> + Sync,
) -> Outcome<Vec<T>> {
    seeds.par_iter().map(|(s, _)| job(*s).map_err(|e| Failure::from(e).context(format!("seed {s}")))).collect()
}

pub fn simulate_chain(ctx: &Context, path: &Path, duration: Option<f64>, seeds: &SeedArgs, args: &RunArgs) -> Outcome<()> {
    let mut config = Config::load(path)?;
    if let Some(d) = duration {
        config.chain.duration = positive("duration", d)?;
    }
    let seeds = resolve_seeds(seeds, config.chain.seed);
    if let [(s, _)] = seeds[..] {
        config.chain.seed = s;
    }
    let mut run = Run::new("simulate-chain", args, &config)?;
    let base = config.chain.clone();
    let sets = run_seeds(&seeds, |seed| simulate_chain_seed(&base, seed))?;
    let rms_window = config.analysis.rms_window.unwrap_or(config.chain.duration);
    let in_loop_window = (2e-3 / config.chain.sim_step).round() as usize;
    for ((seed, prefix), set) in seeds.iter().zip(&sets) {
        run.seeds.push(*seed);
        record_traces(&mut run, prefix, set, *seed)?;
        let ool = rms_and_drift(set.trace("out_of_loop"), rms_window.min(set.trace("out_of_loop").duration()), false)?;
        put(&mut run, "out_of_loop_rms_hz", prefix, json!(ool.rms));
        put(&mut run, "out_of_loop_drift_hz_per_s", prefix, json!(ool.drift));
        for stage in ["reference", "slave"] {
            let e = &set.trace(&format!("{stage}_lock_error")).samples;
            put(&mut run, &format!("{stage}_in_loop_rms_2ms_hz"), prefix, json!(windowed_rms(e, in_loop_window)));
        }
        put(&mut run, "lock_losses", prefix, json!(set.lock_losses.len()));
        put(&mut run, "aom_offset_hz", prefix, json!(set.metadata.aom_offset));
    }
    run.finish(ctx)
}

fn simulate_chain_seed(base: &ChainConfig, seed: u64) -> translock::Result<TraceSet> {
    chainsim::simulate_chain(&ChainConfig { seed, ..base.clone() })
}

pub fn long_run(ctx: &Context, path: &Path, hours: f64, decimation: f64, seeds: &SeedArgs, args: &RunArgs) -> Outcome<()> {
    let mut config = Config::load(path)?;
    let duration = positive("hours", hours)? * 3600.0;
    if !(decimation >= config.chain.sim_step && decimation <= duration) {
        return Err(Failure::usage("--decimation must lie between chain.sim_step and the run length"));
    }
    let seeds = resolve_seeds(seeds, config.chain.seed);
    if let [(s, _)] = seeds[..] {
        config.chain.seed = s;
    }
    let mut run = Run::new("long-run", args, &config)?;
    let base = config.chain.clone();
    let sets = run_seeds(&seeds, |seed| long_term_run_traces(&ChainConfig { seed, ..base.clone() }, duration, decimation))?;
    let carrier = config.carrier();
    for ((seed, prefix), set) in seeds.iter().zip(&sets) {
        run.seeds.push(*seed);
        record_traces(&mut run, prefix, set, *seed)?;
        let ool = set.trace("out_of_loop");
        let (lo, hi) = ool.samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        put(&mut run, "out_of_loop_points", prefix, json!(ool.len()));
        put(&mut run, "out_of_loop_peak_to_peak_hz", prefix, json!(hi - lo));
        put(&mut run, "out_of_loop_rms_hz", prefix, json!(rms(&ool.samples)));
        let taus = log_spaced_taus(ool.sample_interval, ool.len(), 5);
        let allan = allan_variance(ool, carrier, &taus, AllanEstimator::Overlapping)?;
        if let Some(p) = allan.points.iter().find(|p| (p.tau - 10.0).abs() < 1e-9) {
            put(&mut run, "sigma_y_squared_10s", prefix, json!(p.sigma_y_squared));
        }
        match classify_noise(&allan, (100.0, duration / 4.0)) {
            Ok(c) => put(&mut run, "allan_slope_above_100s", prefix, json!(c.slope)),
            Err(e) => run.warn(format!("seed {seed}: no long-term slope: {e}")),
        }
        run.table(format!("{prefix}allan_out_of_loop.csv"), &io::allan_to_table(&allan)?)?;
    }
    run.finish(ctx)
}

fn read_trace(run: &mut Run, input: &Path, column: Option<&str>) -> Outcome<FrequencyTrace> {
    let bytes = run.input(input)?;
    io::read_trace(bytes.as_slice(), column).input(format!("{}", input.display()))
}

pub struct AllanOptions {
    pub carrier: Option<f64>,
    pub estimator: Option<AllanEstimator>,
    pub taus: Option<Vec<f64>>,
    pub slope_range: Option<(f64, f64)>,
}

pub fn allan(ctx: &Context, input: &Path, column: Option<&str>, config: Option<&Path>, o: AllanOptions, args: &RunArgs) -> Outcome<()> {
    let mut config = load(config)?;
    let a = &mut config.analysis;
    if let Some(c) = o.carrier {
        a.carrier = Some(positive("carrier", c)?);
    }
    a.estimator = o.estimator.unwrap_or(a.estimator);
    if o.taus.is_some() {
        a.taus = o.taus;
    }
    if let Some(r) = o.slope_range {
        a.slope_range = Some(r);
    }
    config.validate()?;
    let mut run = Run::new("allan", args, &config)?;
    let trace = read_trace(&mut run, input, column)?;
    let a = &config.analysis;
    let taus = a.taus.clone().unwrap_or_else(|| log_spaced_taus(trace.sample_interval, trace.len(), a.taus_per_decade));
    if taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Failure::usage("averaging times must be positive"));
    }
    let result = allan_variance(&trace, config.carrier(), &taus, a.estimator)?;
    report_allan(&mut run, &result, a.slope_range);
    run.table("allan.csv".into(), &io::allan_to_table(&result)?)?;
    run.svg("allan.svg".into(), || {
        let (t, s): (Vec<f64>, Vec<f64>) = result.points.iter().map(|p| (p.tau, p.sigma_y_squared)).unzip();
        plot(&format!("Allan variance of {}", trace.label), "tau [s]", "sigma_y^2", &[Series { label: &trace.label, x: &t, y: &s }], true)
    });
    run.finish(ctx)
}

fn report_allan(run: &mut Run, result: &AllanResult, range: Option<(f64, f64)>) {
    run.summary.insert("points".into(), json!(result.points.len()));
    let taus = result.taus();
    let range = range.unwrap_or((taus.first().copied().unwrap_or(0.0), taus.last().copied().unwrap_or(0.0)));
    match classify_noise(result, range) {
        Ok(c) => {
            run.summary.insert("slope".into(), json!(c.slope));
            run.summary.insert("slope_range_s".into(), json!([range.0, range.1]));
            run.summary.insert("noise_type".into(), json!(c.kind.label()));
        }
        Err(e) => run.warn(format!("no slope reported: {e}")),
    }
}

pub struct PsdArgs {
    pub bandwidth: Option<f64>,
    pub segment: Option<usize>,
    pub window: Option<Window>,
    pub threshold_db: Option<f64>,
}

pub fn psd(ctx: &Context, input: &Path, column: Option<&str>, config: Option<&Path>, o: PsdArgs, args: &RunArgs) -> Outcome<()> {
    let mut config = load(config)?;
    let a = &mut config.analysis;
    if let Some(b) = o.bandwidth {
        a.psd_bandwidth = Some(positive("bandwidth", b)?);
    }
    if o.segment.is_some() {
        a.psd_segment_length = o.segment;
    }
    a.psd_window = o.window.unwrap_or(a.psd_window);
    a.peak_threshold_db = o.threshold_db.unwrap_or(a.peak_threshold_db);
    config.validate()?;
    let mut run = Run::new("psd", args, &config)?;
    let trace = read_trace(&mut run, input, column)?;
    let a = &config.analysis;
    let options = PsdOptions { segment_length: a.psd_segment_length, window: a.psd_window, full_scale: a.psd_full_scale };
    let bandwidth = a.psd_bandwidth.unwrap_or(0.5 / trace.sample_interval);
    let result = power_spectrum(&trace, bandwidth, &options)?;
    let peaks: Vec<Value> = result
        .peaks(a.peak_threshold_db)
        .into_iter()
        .take(10)
        .map(|(f, l)| json!({"frequency_hz": f, "level_db": l}))
        .collect();
    run.summary.insert("resolution_hz".into(), json!(result.resolution));
    run.summary.insert("segments".into(), json!(result.segments));
    run.summary.insert("peaks".into(), Value::Array(peaks));
    run.table("psd.csv".into(), &io::psd_to_table(&result, &trace.unit)?)?;
    run.svg("psd.svg".into(), || {
        plot(&format!("spectrum of {}", trace.label), "frequency [Hz]", "level [dB]", &[Series { label: &trace.label, x: &result.frequencies, y: &result.level_db }], false)
    });
    run.finish(ctx)
}

pub fn gauge(ctx: &Context, input: &Path, x: Option<&str>, y: Option<&str>, args: &RunArgs) -> Outcome<()> {
    let mut run = Run::new("gauge", args, &Config::default())?;
    let bytes = run.input(input)?;
    let table = Table::read(bytes.as_slice()).input(format!("{}", input.display()))?;
    let pick = |name: Option<&str>, k: usize| -> Outcome<Column> {
        match name {
            Some(n) => table.columns.iter().find(|c| c.name == n).cloned().ok_or_else(|| Failure::usage(format!("no column named {n:?}"))),
            None => table.columns.get(k).cloned().ok_or_else(|| Failure::usage("gauge needs two columns")),
        }
    };
    let (xc, yc) = (pick(x, 0)?, pick(y, 1)?);
    let points: Vec<(f64, f64)> = table.column(&xc.name)?.iter().copied().zip(table.column(&yc.name)?.iter().copied()).collect();
    let g = gauge_slope(&points).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
    let unit = format!("{}/{}", yc.unit, xc.unit);
    let report = json!({"slope": g.slope, "intercept": g.intercept, "slope_unit": unit, "points": points.len()});
    run.summary.insert("slope".into(), json!(g.slope));
    run.summary.insert("slope_unit".into(), json!(unit));
    run.summary.insert("intercept".into(), json!(g.intercept));
    run.dir.add("gauge.json", pretty(&report));
    run.finish(ctx)
}

fn pretty<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report serialises");
    out.push(b'\n');
    out
}

fn mhz(rad_per_s: f64) -> f64 {
    rad_per_s / TAU / 1e6
}

pub fn spectrum(ctx: &Context, config: Option<&Path>, scan: Option<Vec<f64>>, shot_noise: bool, seeds: &SeedArgs, args: &RunArgs) -> Outcome<()> {
    let config = load(config)?;
    let grid = scan.unwrap_or_else(reference_scan_grid);
    let noisy = shot_noise || config.detection.shot_noise_seed.is_some() || seeds.seed.is_some() || seeds.seeds.is_some();
    let seeds = if noisy { resolve_seeds(seeds, config.detection.shot_noise_seed.unwrap_or(1)) } else { vec![(0, String::new())] };
    let mut run = Run::new("spectrum", args, &config)?;
    let scans = run_seeds(&seeds, |seed| {
        let detection = DetectionConfig { shot_noise_seed: noisy.then_some(seed), ..config.detection };
        excitation_spectrum(&config.ion, &grid, &detection)
    })?;
    let conditions: Vec<f64> = dark_resonance_conditions(&config.ion)?.into_iter().map(mhz).collect();
    run.summary.insert("dark_resonance_conditions_mhz".into(), json!(conditions));
    for ((seed, prefix), scan) in seeds.iter().zip(&scans) {
        if noisy {
            run.seeds.push(*seed);
        }
        let x: Vec<f64> = scan.detuning_866.iter().map(|&d| mhz(d)).collect();
        // dips of the noise-free model, resolved to the grid
        let dips: Vec<f64> = find_dips(&x, &scan.model, 2, 0.02).iter().map(|d| d.center).collect();
        put(&mut run, "dips_mhz", prefix, json!(dips));
        put(&mut run, "points", prefix, json!(scan.counts.len()));
        put(&mut run, "max_counts", prefix, json!(scan.counts.iter().copied().filter(|c| c.is_finite()).fold(0.0, f64::max)));
        if !scan.gaps.is_empty() {
            run.warn(format!("{} scan points could not be solved", scan.gaps.len()));
        }
        run.table(format!("{prefix}spectrum.csv"), &io::spectrum_to_table(scan)?)?;
        run.svg(format!("{prefix}spectrum.svg"), || {
            plot("excitation spectrum", "866 nm detuning [MHz]", "counts", &[Series { label: "counts", x: &x, y: &scan.counts }, Series { label: "model", x: &x, y: &scan.model }], false)
        });
    }
    run.finish(ctx)
}

pub fn fit(ctx: &Context, data: &Path, config: Option<&Path>, free: Option<Vec<FitParameter>>, ratio: Option<Option<f64>>, args: &RunArgs) -> Outcome<()> {
    let mut config = load(config)?;
    if let Some(f) = free {
        config.fit.free = f;
    }
    if let Some(r) = ratio {
        config.fit.linewidth_ratio = r;
    }
    config.validate()?;
    let mut run = Run::new("fit", args, &config)?;
    let bytes = run.input(data)?;
    let scan = Table::read(bytes.as_slice())
        .and_then(|t| io::table_to_spectrum(&t))
        .input(format!("{}", data.display()))?;
    let f = &config.fit;
    let problem = FitProblem {
        bounds: f.bounds.clone(),
        linewidth_ratio: f.linewidth_ratio,
        max_iterations: f.max_iterations,
        tolerance: f.tolerance,
        ..FitProblem::new(scan, &f.free)
    };
    let result = fit_spectrum(&problem, &Point::new(config.ion, &config.detection))?;
    if !result.converged {
        run.warn("fit stopped at the iteration limit before converging".into());
    }
    let estimates: BTreeMap<&str, f64> = result.estimates.iter().map(|(p, v)| (p.name(), *v)).collect();
    let report = json!({
        "free": f.free.iter().map(|p| p.name()).collect::<Vec<_>>(),
        "linewidth_ratio": f.linewidth_ratio,
        "estimates": estimates,
        "chi_squared": result.chi_squared,
        "reduced_chi_squared": result.reduced_chi_squared,
        "degrees_of_freedom": result.degrees_of_freedom,
        "iterations": result.iterations,
        "evaluations": result.evaluations,
        "converged": result.converged,
        "best": result.best,
    });
    run.summary.insert("reduced_chi_squared".into(), json!(result.reduced_chi_squared));
    run.summary.insert("estimates".into(), json!(estimates));
    run.summary.insert("converged".into(), json!(result.converged));
    run.dir.add("fit.json", pretty(&report));
    let grid = &problem.data.detuning_866;
    let model = model_counts(&result.best, grid)?;
    let table = Table::new(
        vec![Column::new("detuning_866", "Hz"), Column::new("counts", "counts"), Column::new("model", "counts")],
        vec![grid.iter().map(|d| d / TAU).collect(), problem.data.counts.clone(), model.clone()],
    )?
    .with_meta("reduced_chi_squared", io::format_number(result.reduced_chi_squared));
    run.table("fit_model.csv".into(), &table)?;
    run.svg("fit.svg".into(), || {
        let x: Vec<f64> = grid.iter().map(|&d| mhz(d)).collect();
        plot("fit", "866 nm detuning [MHz]", "counts", &[Series { label: "data", x: &x, y: &problem.data.counts }, Series { label: "fit", x: &x, y: &model }], false)
    });
    run.finish(ctx)
}

pub struct NoiseArgs {
    pub samples: usize,
    pub dt: f64,
    pub white: Option<f64>,
    pub flicker: Option<f64>,
    pub random_walk: Option<f64>,
    pub tones: Vec<(f64, f64)>,
}

pub fn noise(ctx: &Context, config: Option<&Path>, o: NoiseArgs, seeds: &SeedArgs, args: &RunArgs) -> Outcome<()> {
    let mut config = load(config)?;
    let n = &mut config.noise;
    n.white_fm = o.white.unwrap_or(n.white_fm);
    n.flicker_fm = o.flicker.unwrap_or(n.flicker_fm);
    n.random_walk_fm = o.random_walk.unwrap_or(n.random_walk_fm);
    positive("dt", o.dt)?;
    if o.samples < 2 {
        return Err(Failure::usage("--samples must be at least 2"));
    }
    let seeds = resolve_seeds(seeds, config.noise.seed);
    if let [(s, _)] = seeds[..] {
        config.noise.seed = s;
    }
    config.validate()?;
    let mut run = Run::new("noise", args, &config)?;
    let spec = config.noise;
    let traces = run_seeds(&seeds, |seed| {
        let mut t = generate_noise(&translock::noise::NoiseSpec { seed, ..spec }, o.samples, o.dt)?;
        for (k, x) in t.samples.iter_mut().enumerate() {
            let time = k as f64 * o.dt;
            *x += o.tones.iter().map(|(f, a)| a * (TAU * f * time).sin()).sum::<f64>();
        }
        Ok(t)
    })?;
    for ((seed, prefix), trace) in seeds.iter().zip(&traces) {
        run.seeds.push(*seed);
        put(&mut run, "rms_hz", prefix, json!(rms(&trace.samples)));
        run.table(format!("{prefix}noise.csv"), &trace_csv(trace)?)?;
    }
    run.finish(ctx)
}

pub fn default_config(out: Option<&Path>, force: bool) -> Outcome<()> {
    let bytes = Config::default().canonical_json();
    match out {
        Some(path) => output::write_file(&output::resolve(path), &bytes, force),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

pub fn verify(dir: &Path) -> Outcome<()> {
    let dir = output::resolve(dir);
    let manifest = RunManifest::read(&dir)?;
    manifest.validate(&dir)?;
    println!("{}: {} outputs match the manifest", dir.display(), manifest.outputs.len());
    Ok(())
}
