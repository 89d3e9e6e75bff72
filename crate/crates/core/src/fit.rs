//! χ² fits of the Bloch model to excitation spectra.
//!
//! Non-linear parameters are searched with a Nelder–Mead simplex in
//! transformed coordinates (log for positive quantities), projected onto the
//! bounds before every evaluation. The detection scale and background enter
//! the model linearly and are solved exactly at each trial point. After the
//! first search converges or hits its cap, one restart from a fresh simplex
//! around the best point guards against simplex collapse.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex};

use argmin::core::observers::{Observe, ObserverMode};
use argmin::core::{CostFunction, Executor, IterState, KV};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::bloch::{DetectionConfig, IonConfig, ScanGenerator, SpectrumScan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParameter {
    Rabi397,
    Rabi866,
    Detuning397,
    MagneticField,
    Linewidth397,
    Linewidth866,
    Polarization397,
    Polarization866,
    KAngle,
    PolarizationImpurity,
    Scale,
    Background,
}

impl FitParameter {
    pub const ALL: [FitParameter; 12] = [
        Self::Rabi397,
        Self::Rabi866,
        Self::Detuning397,
        Self::MagneticField,
        Self::Linewidth397,
        Self::Linewidth866,
        Self::Polarization397,
        Self::Polarization866,
        Self::KAngle,
        Self::PolarizationImpurity,
        Self::Scale,
        Self::Background,
    ];

    /// The default free set.
    pub const DEFAULT_FREE: [FitParameter; 9] = [
        Self::Rabi397,
        Self::Rabi866,
        Self::Detuning397,
        Self::MagneticField,
        Self::Linewidth397,
        Self::Polarization397,
        Self::Polarization866,
        Self::Scale,
        Self::Background,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rabi397 => "rabi_397",
            Self::Rabi866 => "rabi_866",
            Self::Detuning397 => "detuning_397",
            Self::MagneticField => "magnetic_field",
            Self::Linewidth397 => "laser_linewidth_397",
            Self::Linewidth866 => "laser_linewidth_866",
            Self::Polarization397 => "polarization_397",
            Self::Polarization866 => "polarization_866",
            Self::KAngle => "k_angle",
            Self::PolarizationImpurity => "polarization_impurity",
            Self::Scale => "scale",
            Self::Background => "background",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidModel(format!("unknown fit parameter {name:?}")))
    }

    fn is_linear(self) -> bool {
        matches!(self, Self::Scale | Self::Background)
    }

    fn is_positive(self) -> bool {
        matches!(self, Self::Rabi397 | Self::Rabi866 | Self::MagneticField | Self::Linewidth397 | Self::Linewidth866)
    }

    /// Simplex coordinate per natural unit, and the initial simplex step.
    fn unit_and_step(self) -> (f64, f64) {
        match self {
            Self::Detuning397 => (TAU * 1e6, 1.0),
            Self::Polarization397 | Self::Polarization866 | Self::KAngle => (1.0, 0.05),
            Self::PolarizationImpurity => (1.0, 0.01),
            _ => (1.0, 0.1),
        }
    }

    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Self::Rabi397 | Self::Rabi866 => (TAU * 1e4, TAU * 500e6),
            Self::Detuning397 => (-TAU * 500e6, TAU * 500e6),
            Self::MagneticField => (1e-3, 100.0),
            Self::Linewidth397 | Self::Linewidth866 => (1.0, 50e6),
            Self::Polarization397 | Self::Polarization866 => (-PI, PI),
            Self::KAngle => (0.0, PI),
            Self::PolarizationImpurity => (0.0, 0.1),
            Self::Scale | Self::Background => (0.0, f64::INFINITY),
        }
    }

    fn get(self, p: &Point) -> f64 {
        let c = &p.ion;
        match self {
            Self::Rabi397 => c.rabi_397,
            Self::Rabi866 => c.rabi_866,
            Self::Detuning397 => c.detuning_397,
            Self::MagneticField => c.magnetic_field,
            Self::Linewidth397 => c.laser_linewidth_397,
            Self::Linewidth866 => c.laser_linewidth_866,
            Self::Polarization397 => c.geometry.polarization_397,
            Self::Polarization866 => c.geometry.polarization_866,
            Self::KAngle => c.geometry.k_angle,
            Self::PolarizationImpurity => c.polarization_impurity,
            Self::Scale => p.scale,
            Self::Background => p.background,
        }
    }

    fn set(self, p: &mut Point, v: f64) {
        let c = &mut p.ion;
        match self {
            Self::Rabi397 => c.rabi_397 = v,
            Self::Rabi866 => c.rabi_866 = v,
            Self::Detuning397 => c.detuning_397 = v,
            Self::MagneticField => c.magnetic_field = v,
            Self::Linewidth397 => c.laser_linewidth_397 = v,
            Self::Linewidth866 => c.laser_linewidth_866 = v,
            Self::Polarization397 => c.geometry.polarization_397 = v,
            Self::Polarization866 => c.geometry.polarization_866 = v,
            Self::KAngle => c.geometry.k_angle = v,
            Self::PolarizationImpurity => c.polarization_impurity = v,
            Self::Scale => p.scale = v,
            Self::Background => p.background = v,
        }
    }
}

/// Model parameters: ion configuration plus detection scale and background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub ion: IonConfig,
    pub scale: f64,
    pub background: f64,
}

impl Point {
    pub fn new(ion: IonConfig, detection: &DetectionConfig) -> Self {
        Self { ion, scale: detection.scale, background: detection.background }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub data: SpectrumScan,
    pub free: Vec<FitParameter>,
    /// Overrides of [`FitParameter::default_bounds`].
    #[serde(default)]
    pub bounds: BTreeMap<FitParameter, (f64, f64)>,
    /// Tie δν866 = ratio · δν397.
    #[serde(default)]
    pub linewidth_ratio: Option<f64>,
    /// Per-point σ; `None` means √counts.
    #[serde(default)]
    pub uncertainties: Option<Vec<f64>>,
    /// Iteration cap of each simplex search.
    pub max_iterations: u64,
    /// Stop when the standard deviation of χ² over the simplex falls below this.
    pub tolerance: f64,
}

impl FitProblem {
    pub fn new(data: SpectrumScan, free: &[FitParameter]) -> Self {
        Self {
            data,
            free: free.to_vec(),
            bounds: BTreeMap::new(),
            linewidth_ratio: Some(0.5),
            uncertainties: None,
            max_iterations: 3000,
            tolerance: 1e-9,
        }
    }

    pub fn bounds(&self, p: FitParameter) -> (f64, f64) {
        self.bounds.get(&p).copied().unwrap_or_else(|| p.default_bounds())
    }

    fn validate(&self, initial: &Point) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if self.free.is_empty() {
            return bad("at least one parameter must be free".into());
        }
        if let Some(r) = self.linewidth_ratio {
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("linewidth ratio {r} must be finite and non-negative"));
            }
        }
        if self.linewidth_ratio.is_some() && self.free.contains(&FitParameter::Linewidth866) {
            return bad("laser_linewidth_866 is tied to laser_linewidth_397 and cannot be free".into());
        }
        let mut seen = self.free.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.free.len() {
            return bad("duplicate free parameters".into());
        }
        let usable = self.data.counts.iter().filter(|c| c.is_finite()).count();
        if usable <= self.free.len() {
            return bad(format!("{usable} data points cannot constrain {} parameters", self.free.len()));
        }
        if self.data.counts.len() != self.data.detuning_866.len() {
            return bad("data grid and counts differ in length".into());
        }
        if let Some(s) = &self.uncertainties {
            if s.len() != self.data.counts.len() {
                return bad("uncertainties and counts differ in length".into());
            }
        }
        for &p in &self.free {
            let (lo, hi) = self.bounds(p);
            let v = p.get(initial);
            if !(lo <= v && v <= hi) {
                return bad(format!("initial {} = {v} outside bounds [{lo}, {hi}]", p.name()));
            }
            if p.is_positive() && lo <= 0.0 {
                return bad(format!("{} is searched in log space and needs a positive lower bound", p.name()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: BTreeMap<FitParameter, f64>,
    pub best: Point,
    pub chi_squared: f64,
    pub reduced_chi_squared: f64,
    pub degrees_of_freedom: usize,
    pub iterations: u64,
    pub evaluations: u64,
    pub converged: bool,
    /// Best χ² after each simplex iteration, both searches concatenated.
    pub trace: Vec<f64>,
}

/// Weighted χ² of `data` against `model`; `reduced` divides by `N - k`.
pub fn chi_squared(data: &[f64], model: &[f64], sigma: &[f64], k: usize) -> Result<(f64, f64)> {
    if data.len() != model.len() || data.len() != sigma.len() {
        return Err(Error::Domain("data, model and uncertainties must have matching grids".into()));
    }
    if let Some(i) = sigma.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Weighting(format!("uncertainty {} at point {i} is not positive", sigma[i])));
    }
    if data.len() <= k {
        return Err(Error::Domain("no degrees of freedom left".into()));
    }
    let chi2: f64 = data.iter().zip(model).zip(sigma).map(|((d, m), s)| ((d - m) / s).powi(2)).sum();
    Ok((chi2, chi2 / (data.len() - k) as f64))
}

/// √counts; empty bins give σ = 0, which [`chi_squared`] rejects.
pub fn poisson_uncertainties(counts: &[f64]) -> Vec<f64> {
    counts.iter().map(|c| c.max(0.0).sqrt()).collect()
}

/// Sorted, finite data with weights.
struct Data {
    detuning: Vec<f64>,
    counts: Vec<f64>,
    weight: Vec<f64>,
}

impl Data {
    fn new(problem: &FitProblem) -> Result<Self> {
        let sigma = match &problem.uncertainties {
            Some(s) => s.clone(),
            None => poisson_uncertainties(&problem.data.counts),
        };
        let mut rows: Vec<(f64, f64, f64)> = problem
            .data
            .detuning_866
            .iter()
            .zip(&problem.data.counts)
            .zip(&sigma)
            .filter(|((d, c), _)| d.is_finite() && c.is_finite())
            .map(|((d, c), s)| (*d, *c, *s))
            .collect();
        if let Some(r) = rows.iter().find(|r| !(r.2 > 0.0)) {
            return Err(Error::Weighting(format!("uncertainty {} at detuning {} rad/s is not positive", r.2, r.0)));
        }
        // a canonical order makes the fit independent of the input order
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        Ok(Self {
            detuning: rows.iter().map(|r| r.0).collect(),
            counts: rows.iter().map(|r| r.1).collect(),
            weight: rows.iter().map(|r| r.2.powi(-2)).collect(),
        })
    }
}

struct Objective<'a> {
    problem: &'a FitProblem,
    data: Data,
    start: Point,
    nonlinear: Vec<FitParameter>,
    evaluations: Arc<Mutex<u64>>,
}

impl Objective<'_> {
    fn to_coordinate(&self, p: FitParameter, v: f64) -> f64 {
        let (unit, _) = p.unit_and_step();
        if p.is_positive() { v.ln() } else { v / unit }
    }

    fn from_coordinate(&self, p: FitParameter, u: f64) -> f64 {
        let (unit, _) = p.unit_and_step();
        let (lo, hi) = self.problem.bounds(p);
        let v = if p.is_positive() { u.exp() } else { u * unit };
        v.clamp(lo, hi)
    }

    fn point(&self, u: &[f64]) -> Point {
        let mut point = self.start;
        for (&p, &x) in self.nonlinear.iter().zip(u) {
            p.set(&mut point, self.from_coordinate(p, x));
        }
        if let Some(r) = self.problem.linewidth_ratio {
            point.ion.laser_linewidth_866 = r * point.ion.laser_linewidth_397;
        }
        point
    }

    /// P-population profile of the sorted grid.
    fn profile(&self, ion: &IonConfig) -> Result<Vec<f64>> {
        let generator = ScanGenerator::new(ion)?;
        use rayon::prelude::*;
        self.data
            .detuning
            .par_iter()
            .map(|&d| generator.excited_population(d))
            .collect::<Result<Vec<f64>>>()
            .map(|p| p.into_iter().map(|x| x * ion.decay_p_to_s).collect())
    }

    /// Best scale and background for a profile, honouring which are free and
    /// their bounds. Returns the completed point and χ².
    fn solve_linear(&self, mut point: Point, profile: &[f64]) -> (Point, f64) {
        let free_scale = self.problem.free.contains(&FitParameter::Scale);
        let free_background = self.problem.free.contains(&FitParameter::Background);
        let (y, w) = (&self.data.counts, &self.data.weight);
        let sums = |f: &dyn Fn(usize) -> f64| (0..y.len()).map(|i| w[i] * f(i)).sum::<f64>();
        let s_pp = sums(&|i| profile[i] * profile[i]);
        let s_p = sums(&|i| profile[i]);
        let s_1 = sums(&|_| 1.0);
        let s_py = sums(&|i| profile[i] * y[i]);
        let s_y = sums(&|i| y[i]);
        let (sb, bb) = (self.problem.bounds(FitParameter::Scale), self.problem.bounds(FitParameter::Background));
        let scale_given = |b: f64| if s_pp > 0.0 { ((s_py - b * s_p) / s_pp).clamp(sb.0, sb.1) } else { sb.0.max(0.0) };
        let background_given = |a: f64| ((s_y - a * s_p) / s_1).clamp(bb.0, bb.1);
        let cost = |a: f64, b: f64| (0..y.len()).map(|i| w[i] * (y[i] - a * profile[i] - b).powi(2)).sum::<f64>();
        match (free_scale, free_background) {
            (true, true) => {
                let det = s_pp * s_1 - s_p * s_p;
                let inside = |a: f64, b: f64| (sb.0..=sb.1).contains(&a) && (bb.0..=bb.1).contains(&b);
                let unconstrained = (det > 0.0).then(|| ((s_py * s_1 - s_p * s_y) / det, (s_pp * s_y - s_p * s_py) / det));
                (point.scale, point.background) = match unconstrained {
                    Some((a, b)) if inside(a, b) => (a, b),
                    // otherwise the optimum sits on an edge of the box
                    _ => [
                        (scale_given(bb.0), bb.0),
                        (scale_given(bb.1), bb.1),
                        (sb.0, background_given(sb.0)),
                        (sb.1, background_given(sb.1)),
                    ]
                    .into_iter()
                    .filter(|&(a, b)| a.is_finite() && b.is_finite())
                    .min_by(|x, y| cost(x.0, x.1).total_cmp(&cost(y.0, y.1)))
                    .unwrap_or((sb.0, bb.0)),
                };
            }
            (true, false) => point.scale = scale_given(point.background),
            (false, true) => point.background = background_given(point.scale),
            (false, false) => {}
        }
        let chi2 = cost(point.scale, point.background);
        (point, chi2)
    }
    fn evaluate(&self, u: &[f64]) -> Option<(Point, f64)> {
        *self.evaluations.lock().unwrap() += 1;
        let point = self.point(u);
        let profile = self.profile(&point.ion).ok()?;
        let (point, chi2) = self.solve_linear(point, &profile);
        chi2.is_finite().then_some((point, chi2))
    }
}

struct Borrowed<'a>(&'a Objective<'a>);

impl CostFunction for Borrowed<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        // a failed model evaluation rejects the trial point
        Ok(self.0.evaluate(u).map(|(_, c)| c).unwrap_or(f64::INFINITY))
    }
}

struct TraceObserver(Arc<Mutex<Vec<f64>>>);

impl Observe<IterState<Vec<f64>, (), (), (), (), f64>> for TraceObserver {
    fn observe_iter(&mut self, state: &IterState<Vec<f64>, (), (), (), (), f64>, _kv: &KV) -> std::result::Result<(), argmin::core::Error> {
        self.0.lock().unwrap().push(state.best_cost);
        Ok(())
    }
}

fn simplex(objective: &Objective, centre: &[f64]) -> Vec<Vec<f64>> {
    let mut vertices = vec![centre.to_vec()];
    for (k, &p) in objective.nonlinear.iter().enumerate() {
        let (_, step) = p.unit_and_step();
        let mut v = centre.to_vec();
        // step down instead when the upper bound would flatten the step
        let (_, hi) = objective.problem.bounds(p);
        v[k] += if objective.from_coordinate(p, v[k] + step) < hi { step } else { -step };
        vertices.push(v);
    }
    vertices
}

/// Minimises χ² from `initial`. Deterministic for given data and start.
pub fn fit_spectrum(problem: &FitProblem, initial: &Point) -> Result<FitResult> {
    problem.validate(initial)?;
    let mut start = *initial;
    if let Some(r) = problem.linewidth_ratio {
        start.ion.laser_linewidth_866 = r * start.ion.laser_linewidth_397;
    }
    start.ion.validate()?;
    let nonlinear: Vec<FitParameter> = problem.free.iter().copied().filter(|p| !p.is_linear()).collect();
    let objective = Objective {
        problem,
        data: Data::new(problem)?,
        start,
        nonlinear,
        evaluations: Arc::new(Mutex::new(0)),
    };
    let k = problem.free.len();
    let n = objective.data.counts.len();
    let mut u: Vec<f64> = objective.nonlinear.iter().map(|&p| objective.to_coordinate(p, p.get(&start))).collect();
    if objective.evaluate(&u).is_none() {
        return Err(Error::InvalidModel("model cannot be evaluated at the initial point".into()));
    }
    let trace = Arc::new(Mutex::new(Vec::new()));
    let mut iterations = 0;
    let mut converged = true;
    if !objective.nonlinear.is_empty() {
        let mut best = f64::INFINITY;
        for _search in 0..2 {
            let solver = NelderMead::new(simplex(&objective, &u))
                .with_sd_tolerance(problem.tolerance)
                .map_err(|e| Error::InvalidModel(e.to_string()))?;
            let observer = TraceObserver(trace.clone());
            let result = Executor::new(Borrowed(&objective), solver)
                .configure(|s| s.max_iters(problem.max_iterations))
                .add_observer(observer, ObserverMode::Always)
                .run()
                .map_err(|e| Error::InvalidModel(e.to_string()))?;
            let state = result.state();
            iterations += state.iter;
            converged = state.iter < problem.max_iterations;
            if state.best_cost <= best {
                best = state.best_cost;
                if let Some(p) = &state.best_param {
                    u = p.clone();
                }
            }
        }
    }
    let (best, chi2) = objective.evaluate(&u).expect("best point was evaluable");
    let mut trace = trace.lock().unwrap().clone();
    for k in 1..trace.len() {
        trace[k] = trace[k].min(trace[k - 1]);
    }
    let estimates = problem.free.iter().map(|&p| (p, p.get(&best))).collect();
    let evaluations = *objective.evaluations.lock().unwrap();
    Ok(FitResult {
        estimates,
        best,
        chi_squared: chi2,
        reduced_chi_squared: chi2 / (n - k) as f64,
        degrees_of_freedom: n - k,
        iterations,
        evaluations,
        converged,
        trace,
    })
}

/// Noise-free model counts of `point` on `grid`.
pub fn model_counts(point: &Point, grid: &[f64]) -> Result<Vec<f64>> {
    let generator = ScanGenerator::new(&point.ion)?;
    grid.iter()
        .map(|&d| generator.excited_population(d).map(|p| point.scale * point.ion.decay_p_to_s * p + point.background))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{excitation_spectrum, reference_scan_grid};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic(point: &Point, seed: Option<u64>) -> SpectrumScan {
        let det = DetectionConfig { scale: point.scale, background: point.background, shot_noise_seed: seed };
        let grid: Vec<f64> = reference_scan_grid().into_iter().step_by(2).collect();
        excitation_spectrum(&point.ion, &grid, &det).unwrap()
    }

    fn truth() -> Point {
        Point::new(IonConfig::default(), &DetectionConfig::default())
    }

    const SMALL: [FitParameter; 4] = [FitParameter::Rabi866, FitParameter::Linewidth397, FitParameter::Scale, FitParameter::Background];

    fn start_near(p: &Point) -> Point {
        let mut s = *p;
        s.ion.rabi_866 *= 1.15;
        s.ion.laser_linewidth_397 *= 0.85;
        s.scale *= 1.1;
        s.background *= 0.9;
        s
    }

    #[test]
    fn chi_squared_examples() {
        let m = vec![5.0; 10];
        assert_eq!(chi_squared(&m, &m, &[1.0; 10], 0).unwrap(), (0.0, 0.0));
        let mut d = m.clone();
        d[3] += 2.0;
        let (c, r) = chi_squared(&d, &m, &[2.0; 10], 0).unwrap();
        assert_eq!(c, 1.0);
        assert_eq!(r, 0.1);
        let mut sigma = vec![1.0; 10];
        sigma[7] = 0.0;
        assert!(matches!(chi_squared(&d, &m, &sigma, 0), Err(Error::Weighting(_))));
    }

    #[test]
    fn unit_gaussian_residuals_give_unit_reduced_chi_squared() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model = vec![0.0; 1000];
        let data: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, r) = chi_squared(&data, &model, &[1.0; 1000], 0).unwrap();
        assert!((r - 1.0).abs() < 0.1, "{r}");
    }

    #[test]
    fn noiseless_data_is_recovered() {
        let t = truth();
        let mut problem = FitProblem::new(synthetic(&t, None), &SMALL);
        problem.uncertainties = Some(vec![1.0; problem.data.counts.len()]);
        problem.tolerance = 1e-14;
        let r = fit_spectrum(&problem, &start_near(&t)).unwrap();
        for (p, v) in &r.estimates {
            let want = p.get(&t);
            assert!(((v - want) / want).abs() < 1e-3, "{p:?}: {v} vs {want}");
        }
        assert!(r.reduced_chi_squared < 1e-6);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.best.ion.laser_linewidth_866, 0.5 * r.best.ion.laser_linewidth_397);
    }

    #[test]
    fn constant_offset_goes_into_background() {
        let t = truth();
        let mut data = synthetic(&t, None);
        data.counts.iter_mut().for_each(|c| *c += 25.0);
        let mut problem = FitProblem::new(data, &SMALL);
        problem.uncertainties = Some(vec![1.0; problem.data.counts.len()]);
        problem.tolerance = 1e-14;
        let r = fit_spectrum(&problem, &start_near(&t)).unwrap();
        assert!((r.best.background - (t.background + 25.0)).abs() < 1e-6 * t.background, "{}", r.best.background);
        for p in [FitParameter::Rabi866, FitParameter::Linewidth397, FitParameter::Scale] {
            let (v, want) = (r.estimates[&p], p.get(&t));
            assert!(((v - want) / want).abs() < 1e-6, "{p:?}: {v} vs {want}");
        }
    }

    #[test]
    fn fit_ignores_data_order() {
        let t = truth();
        let data = synthetic(&t, Some(4));
        let mut shuffled = data.clone();
        let n = data.counts.len();
        let order: Vec<usize> = (0..n).map(|k| (k * 37) % n).collect();
        shuffled.detuning_866 = order.iter().map(|&k| data.detuning_866[k]).collect();
        shuffled.counts = order.iter().map(|&k| data.counts[k]).collect();
        let mut a = FitProblem::new(data, &SMALL);
        a.max_iterations = 150;
        let mut b = a.clone();
        b.data = shuffled;
        let start = start_near(&t);
        let (ra, rb) = (fit_spectrum(&a, &start).unwrap(), fit_spectrum(&b, &start).unwrap());
        assert_eq!(ra.estimates, rb.estimates);
        assert_eq!(ra.chi_squared, rb.chi_squared);
    }

    #[test]
    fn estimates_stay_within_bounds() {
        let t = truth();
        let mut problem = FitProblem::new(synthetic(&t, Some(9)), &SMALL);
        problem.bounds.insert(FitParameter::Linewidth397, (150e3, 250e3));
        problem.max_iterations = 200;
        let mut start = start_near(&t);
        start.ion.laser_linewidth_397 = 200e3;
        let r = fit_spectrum(&problem, &start).unwrap();
        let lw = r.estimates[&FitParameter::Linewidth397];
        assert!((150e3..=250e3).contains(&lw), "{lw}");
        assert!(r.reduced_chi_squared >= 0.0);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let t = truth();
        let data = synthetic(&t, None);
        assert!(fit_spectrum(&FitProblem::new(data.clone(), &[]), &t).is_err());
        let mut tied = FitProblem::new(data.clone(), &[FitParameter::Linewidth866]);
        tied.linewidth_ratio = Some(0.5);
        assert!(fit_spectrum(&tied, &t).is_err());
        let mut outside = FitProblem::new(data.clone(), &SMALL);
        outside.bounds.insert(FitParameter::Rabi866, (1.0, 2.0));
        assert!(fit_spectrum(&outside, &t).is_err());
        let mut zero = FitProblem::new(data, &SMALL);
        zero.uncertainties = Some(vec![0.0; zero.data.counts.len()]);
        assert!(matches!(fit_spectrum(&zero, &t), Err(Error::Weighting(_))));
        assert_eq!(FitParameter::parse("rabi_866").unwrap(), FitParameter::Rabi866);
        assert!(FitParameter::parse("rabi").is_err());
    }
}
