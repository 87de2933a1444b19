//! Parameter sweeps, Monte-Carlo position studies and pulse optimization.
//!
//! Grid points are evaluated in parallel; results are collected in grid order
//! so every sweep is reproducible bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::IntegratorSettings;
use crate::error::{invalid, Error, Result};
use crate::geometry::{perturb_positions, PerturbDims};
use crate::protocols::{build_protocol, build_protocol_with_layout, default_layout, FidelityConvention, ProtocolSpec};
use crate::units::PhysicalUnits;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, values: Vec<f64>) -> Self {
        Self { name: name.to_string(), values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    /// One coordinate per axis.
    pub coords: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; present iff more than one sample was drawn.
    pub std: Option<f64>,
    pub samples: Vec<f64>,
}

impl PointResult {
    fn single(coords: Vec<f64>, fidelity: f64) -> Self {
        Self { coords, mean: fidelity, std: None, samples: vec![fidelity] }
    }

    fn sampled(coords: Vec<f64>, samples: Vec<f64>) -> Self {
        // identical samples must give exactly zero spread, which summation rounding would not
        if samples.windows(2).all(|w| w[0] == w[1]) {
            return Self { coords, mean: samples[0], std: Some(0.0), samples };
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { coords, mean, std: Some(var.sqrt()), samples }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub experiment: String,
    pub axes: Vec<Axis>,
    /// Row-major over `axes`, last axis fastest.
    pub points: Vec<PointResult>,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub convention: FidelityConvention,
    pub spec: ProtocolSpec,
}

impl SweepResult {
    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    pub fn min_mean(&self) -> f64 {
        self.points.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }
}

fn evaluate(spec: &ProtocolSpec, settings: &IntegratorSettings, convention: FidelityConvention) -> Result<f64> {
    Ok(build_protocol(spec)?.run(settings, convention)?.fidelity)
}

fn check_ascending(name: &str, grid: &[f64]) -> Result<()> {
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}

/// How pulse amplitudes follow `V0` in a saturation scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmplitudeRule {
    #[default]
    Fixed,
    /// `Delta_max = V0 / delta_ratio`, `Omega_max = V0 / omega_ratio`.
    ProportionalToV0 { delta_ratio: f64, omega_ratio: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationResult {
    pub sweep: SweepResult,
    pub v_sat: f64,
    pub plateau_infidelity: f64,
}

pub const DEFAULT_PLATEAU_EPS: f64 = 0.1;

/// Smallest `V0` whose infidelity is no worse than the large-`V0` plateau
/// (mean of the top three grid points) by more than a relative `plateau_eps`.
pub fn saturation_point(v_grid: &[f64], infidelity: &[f64], plateau_eps: f64) -> Result<(f64, f64)> {
    if v_grid.len() != infidelity.len() || v_grid.len() < 3 {
        return Err(invalid("saturation detection needs matching grids of >= 3 points"));
    }
    let n = infidelity.len();
    let plateau = infidelity[n - 3..].iter().sum::<f64>() / 3.0;
    let threshold = plateau * (1.0 + plateau_eps);
    let idx = infidelity
        .iter()
        .position(|&e| e <= threshold)
        .expect("plateau points lie below their own threshold on average");
    Ok((v_grid[idx], plateau))
}

/// Dissipation-free fidelity against `V0`.
pub fn saturation_scan(
    spec: &ProtocolSpec,
    v_grid: &[f64],
    plateau_eps: f64,
    rule: AmplitudeRule,
    settings: &IntegratorSettings,
    convention: FidelityConvention,
) -> Result<SaturationResult> {
    if v_grid.len() < 5 {
        return Err(invalid("saturation grid needs at least 5 points"));
    }
    check_ascending("V0", v_grid)?;
    if plateau_eps.is_nan() || plateau_eps < 0.0 {
        return Err(invalid("plateau_eps must be >= 0"));
    }
    let base = spec.without_dissipation();
    let fidelities: Vec<f64> = v_grid
        .par_iter()
        .map(|&v0| {
            let mut s = base.clone();
            s.v0 = v0;
            if let AmplitudeRule::ProportionalToV0 { delta_ratio, omega_ratio } = rule {
                s.delta_max = v0 / delta_ratio;
                s.omega_max = v0 / omega_ratio;
            }
            evaluate(&s, settings, convention)
        })
        .collect::<Result<_>>()?;
    let infidelity: Vec<f64> = fidelities.iter().map(|f| 1.0 - f).collect();
    let (v_sat, plateau_infidelity) = saturation_point(v_grid, &infidelity, plateau_eps)?;
    let points = v_grid.iter().zip(&fidelities).map(|(&v, &f)| PointResult::single(vec![v], f)).collect();
    Ok(SaturationResult {
        sweep: SweepResult {
            experiment: "saturation".into(),
            axes: vec![Axis::new("v0", v_grid.to_vec())],
            points,
            n_samples: 1,
            seed: None,
            convention,
            spec: base,
        },
        v_sat,
        plateau_infidelity,
    })
}

/// Sum of squared residuals of the best non-increasing fit (pool adjacent
/// violators), normalized by the sum of squares of the data.
pub fn nonincreasing_fit_residual(values: &[f64]) -> f64 {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.pop();
            let merged = (m1 * n1 as f64 + m2 * n2 as f64) / (n1 + n2) as f64;
            *blocks.last_mut().expect("two blocks present") = (merged, n1 + n2);
        }
    }
    let fit: Vec<f64> = blocks.iter().flat_map(|&(m, n)| std::iter::repeat_n(m, n)).collect();
    let ss: f64 = values.iter().map(|v| v * v).sum();
    let res: f64 = values.iter().zip(&fit).map(|(v, f)| (v - f).powi(2)).sum();
    if ss == 0.0 {
        0.0
    } else {
        res / ss
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    Rap,
    PiPulse,
}

/// Spec of the protocol actually run for a baseline.
pub fn baseline_spec(spec: &ProtocolSpec, baseline: Baseline) -> Result<ProtocolSpec> {
    match baseline {
        Baseline::Rap => Ok(spec.clone()),
        Baseline::PiPulse => {
            if spec.name.is_pi_pulse() {
                return Ok(spec.clone());
            }
            let name = spec
                .name
                .pi_pulse_variant()
                .ok_or_else(|| Error::Unsupported(format!("no pi-pulse baseline for {}", spec.name)))?;
            Ok(ProtocolSpec { name, ..spec.clone() })
        }
    }
}

/// Fidelity against total physical duration. The dimensionless protocol is
/// fixed and `Omega0` is chosen so it lasts exactly `T`, which rescales only
/// the decay rates.
pub fn time_scan(
    spec: &ProtocolSpec,
    times_us: &[f64],
    baseline: Baseline,
    settings: &IntegratorSettings,
    convention: FidelityConvention,
) -> Result<SweepResult> {
    if times_us.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(invalid("total times must be positive"));
    }
    let run_spec = baseline_spec(spec, baseline)?;
    let tau_total = build_protocol(&run_spec)?.schedule.total_duration();
    let points = times_us
        .par_iter()
        .map(|&t| {
            let stretched = PhysicalUnits::for_duration(tau_total, t)?;
            let units = PhysicalUnits { omega0_over_2pi_mhz: stretched.omega0_over_2pi_mhz, ..run_spec.units };
            let s = ProtocolSpec { units, ..run_spec.clone() };
            Ok(PointResult::single(vec![t], evaluate(&s, settings, convention)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        experiment: match baseline {
            Baseline::Rap => "timescan_rap".into(),
            Baseline::PiPulse => "timescan_pi_pulse".into(),
        },
        axes: vec![Axis::new("total_time_us", times_us.to_vec())],
        points,
        n_samples: 1,
        seed: None,
        convention,
        spec: run_spec,
    })
}

/// Fidelity with `Omega_max` and `Delta_max` multiplied by scale factors.
pub fn robustness_grid(
    spec: &ProtocolSpec,
    omega_scales: &[f64],
    delta_scales: &[f64],
    settings: &IntegratorSettings,
    convention: FidelityConvention,
) -> Result<SweepResult> {
    for (name, grid) in [("omega_scale", omega_scales), ("delta_scale", delta_scales)] {
        check_ascending(name, grid)?;
        if !grid.iter().any(|&s| (s - 1.0).abs() < 1e-12) {
            return Err(invalid(format!("{name} grid must contain 1.0")));
        }
    }
    let pairs: Vec<(f64, f64)> = omega_scales.iter().flat_map(|&o| delta_scales.iter().map(move |&d| (o, d))).collect();
    let points = pairs
        .par_iter()
        .map(|&(o, d)| {
            let s = ProtocolSpec { omega_max: spec.omega_max * o, delta_max: spec.delta_max * d, ..spec.clone() };
            Ok(PointResult::single(vec![o, d], evaluate(&s, settings, convention)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        experiment: "robustness".into(),
        axes: vec![Axis::new("omega_scale", omega_scales.to_vec()), Axis::new("delta_scale", delta_scales.to_vec())],
        points,
        n_samples: 1,
        seed: None,
        convention,
        spec: spec.clone(),
    })
}

pub const DEFAULT_MC_SAMPLES: usize = 30;

/// Independent generator for sample `index`; streams never overlap.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mean and spread of the fidelity over Gaussian position perturbations of
/// the default layout. `sigma` is in units of the unperturbed spacing.
pub fn montecarlo_positions(
    spec: &ProtocolSpec,
    sigma_grid: &[f64],
    n_samples: usize,
    dims: PerturbDims,
    seed: u64,
    settings: &IntegratorSettings,
    convention: FidelityConvention,
) -> Result<SweepResult> {
    if n_samples < 2 {
        return Err(invalid("Monte Carlo needs at least 2 samples per sigma"));
    }
    if sigma_grid.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
        return Err(invalid("sigma values must be >= 0"));
    }
    spec.validate()?;
    let layout = default_layout(spec)?;
    let jobs: Vec<(usize, usize)> = (0..sigma_grid.len()).flat_map(|i| (0..n_samples).map(move |j| (i, j))).collect();
    let fidelities = jobs
        .par_iter()
        .map(|&(i, j)| {
            let mut rng = sample_rng(seed, (i * n_samples + j) as u64);
            let perturbed = perturb_positions(&layout, sigma_grid[i], dims, &mut rng)?;
            Ok(build_protocol_with_layout(spec, perturbed)?.run(settings, convention)?.fidelity)
        })
        .collect::<Result<Vec<f64>>>()?;
    let points = sigma_grid
        .iter()
        .zip(fidelities.chunks(n_samples))
        .map(|(&s, chunk)| PointResult::sampled(vec![s], chunk.to_vec()))
        .collect();
    Ok(SweepResult {
        experiment: "montecarlo".into(),
        axes: vec![Axis::new("sigma", sigma_grid.to_vec())],
        points,
        n_samples,
        seed: Some(seed),
        convention,
        spec: spec.clone(),
    })
}

/// Which pulse parameters the optimizer may vary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterSet {
    /// `(Omega_max, Delta_max)`.
    #[default]
    Amplitudes,
    /// `(Omega_max, Delta_max, tau_R / T_p, tau_D / T_p)`.
    Full,
}

impl ParameterSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            ParameterSet::Amplitudes => &["omega_max", "delta_max"],
            ParameterSet::Full => &["omega_max", "delta_max", "tau_r_ratio", "tau_d_ratio"],
        }
    }

    fn apply(self, spec: &ProtocolSpec, x: &[f64]) -> ProtocolSpec {
        let mut s = spec.clone();
        s.omega_max = x[0];
        s.delta_max = x[1];
        if self == ParameterSet::Full {
            s.tau_r_ratio = x[2];
            s.tau_d_ratio = x[3];
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub evaluation: usize,
    pub params: Vec<f64>,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub parameter_names: Vec<String>,
    pub best_params: Vec<f64>,
    pub best_fidelity: f64,
    pub initial_fidelity: f64,
    pub trace: Vec<TraceEntry>,
    /// The evaluation budget ran out before the simplex converged.
    pub exhausted: bool,
    pub spec: ProtocolSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub max_evals: usize,
    /// Initial simplex edge relative to each starting coordinate.
    pub initial_step: f64,
    /// Convergence on the spread of simplex objective values.
    pub f_tol: f64,
    /// Convergence on the simplex diameter relative to the best point.
    pub x_tol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { max_evals: 200, initial_step: 0.1, f_tol: 1e-9, x_tol: 1e-4 }
    }
}

/// Nelder-Mead maximization of the dissipation-free fidelity inside the box
/// `bounds`. Trial points are projected onto the box.
pub fn optimize_pulse(
    spec: &ProtocolSpec,
    init: &[f64],
    bounds: &[(f64, f64)],
    parameters: ParameterSet,
    options: &OptimizeOptions,
    settings: &IntegratorSettings,
    convention: FidelityConvention,
) -> Result<OptimizationResult> {
    let dim = parameters.names().len();
    if init.len() != dim || bounds.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: init.len().min(bounds.len()) });
    }
    for (i, (&x, &(lo, hi))) in init.iter().zip(bounds).enumerate() {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(invalid(format!("bounds for {} must satisfy 0 < lo < hi", parameters.names()[i])));
        }
        if !(lo..=hi).contains(&x) {
            return Err(invalid(format!("initial {} = {x} lies outside its bounds", parameters.names()[i])));
        }
    }
    if options.max_evals == 0 {
        return Err(invalid("max_evals must be positive"));
    }
    let base = spec.without_dissipation();
    let project = |x: &[f64]| -> Vec<f64> { x.iter().zip(bounds).map(|(v, &(lo, hi))| v.clamp(lo, hi)).collect() };

    let mut trace: Vec<TraceEntry> = Vec::new();
    let objective = |x: &[f64], trace: &mut Vec<TraceEntry>| -> Result<f64> {
        let f = evaluate(&parameters.apply(&base, x), settings, convention)?;
        trace.push(TraceEntry { evaluation: trace.len(), params: x.to_vec(), fidelity: f });
        Ok(1.0 - f)
    };

    // simplex of (point, infidelity)
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let x0 = init.to_vec();
    let f0 = objective(&x0, &mut trace)?;
    let initial_fidelity = 1.0 - f0;
    simplex.push((x0.clone(), f0));
    for i in 0..dim {
        if trace.len() >= options.max_evals {
            break;
        }
        let mut x = x0.clone();
        let step = options.initial_step * x[i];
        x[i] = if x[i] + step <= bounds[i].1 { x[i] + step } else { x[i] - step };
        let x = project(&x);
        let f = objective(&x, &mut trace)?;
        simplex.push((x, f));
    }

    let mut exhausted = simplex.len() < dim + 1;
    while !exhausted {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let spread = simplex[dim].1 - best.1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| ((a - b) / b.abs().max(1e-12)).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= options.f_tol && diameter <= options.x_tol {
            break;
        }
        if trace.len() >= options.max_evals {
            exhausted = true;
            break;
        }
        let centroid: Vec<f64> =
            (0..dim).map(|k| simplex[..dim].iter().map(|(x, _)| x[k]).sum::<f64>() / dim as f64).collect();
        let worst = simplex[dim].0.clone();
        let along = |t: f64| -> Vec<f64> {
            project(&centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect::<Vec<_>>())
        };
        let xr = along(1.0);
        let fr = objective(&xr, &mut trace)?;
        if fr < simplex[0].1 {
            if trace.len() >= options.max_evals {
                simplex[dim] = (xr, fr);
                continue;
            }
            let xe = along(2.0);
            let fe = objective(&xe, &mut trace)?;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            if trace.len() >= options.max_evals {
                exhausted = true;
                break;
            }
            let (xc, fc) = if fr < simplex[dim].1 {
                let xc = along(0.5);
                let fc = objective(&xc, &mut trace)?;
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = objective(&xc, &mut trace)?;
                (xc, fc)
            };
            if fc < fr.min(simplex[dim].1) {
                simplex[dim] = (xc, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    if trace.len() >= options.max_evals {
                        break;
                    }
                    let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let f = objective(&x, &mut trace)?;
                    *vertex = (x, f);
                }
            }
        }
    }

    let best = trace
        .iter()
        .max_by(|a, b| a.fidelity.total_cmp(&b.fidelity).then(b.evaluation.cmp(&a.evaluation)))
        .expect("at least the initial point was evaluated");
    Ok(OptimizationResult {
        parameter_names: parameters.names().iter().map(|s| s.to_string()).collect(),
        best_params: best.params.clone(),
        best_fidelity: best.fidelity,
        initial_fidelity,
        trace: trace.clone(),
        exhausted,
        spec: parameters.apply(&base, &best.params),
    })
}
