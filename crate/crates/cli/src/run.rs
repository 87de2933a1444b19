use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use rydberg_rap::dynamics::uniform_sample_times;
use rydberg_rap::experiments::{
    montecarlo_positions, optimize_pulse, robustness_grid, saturation_scan, time_scan, Baseline, ParameterSet,
};
use rydberg_rap::geometry::{PerturbDims, Shape};
use rydberg_rap::protocols::{build_protocol, ProtocolSpec};
use rydberg_rap::quantum::basis_label;

use crate::config::{Experiment, RunConfig};
use crate::output::{num, OutputDir};
use crate::CliError;

/// Populations below this are left out of the summary (not the CSV).
const SUMMARY_POPULATION_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: Experiment,
    seed: Option<u64>,
    worker_threads: usize,
    wall_time_s: f64,
    files: &'a [String],
    config: &'a RunConfig,
    spec: &'a ProtocolSpec,
}

/// Runs `config.experiment` and writes its artifacts to `out`. The config is
/// expected to carry the experiment already (see [`RunConfig::experiment`]).
pub fn execute(config: &RunConfig, out: &Path) -> Result<RunReport, CliError> {
    let experiment = config.experiment.ok_or_else(|| CliError::Config("experiment: missing".into()))?;
    let spec = config.resolve_spec()?;
    let start = Instant::now();
    let mut dir = OutputDir::create(out)?;
    log::info!("running {} for {}", experiment.as_str(), spec.name);
    match experiment {
        Experiment::Simulate => simulate(config, &spec, &mut dir)?,
        Experiment::Saturation => saturation(config, &spec, &mut dir)?,
        Experiment::Timescan => timescan(config, &spec, &mut dir)?,
        Experiment::Robustness => robustness(config, &spec, &mut dir)?,
        Experiment::Montecarlo => montecarlo(config, &spec, &mut dir)?,
        Experiment::Optimize => optimize(config, &spec, &mut dir)?,
    }
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut files = dir.written().to_vec();
    files.push("manifest.json".into());
    let manifest = Manifest {
        tool: "rapsim",
        version: env!("CARGO_PKG_VERSION"),
        experiment,
        seed: config.seed,
        worker_threads: rayon::current_num_threads(),
        wall_time_s,
        files: &files,
        config,
        spec: &spec,
    };
    dir.write_json("manifest.json", &manifest)?;
    Ok(RunReport { experiment, output_dir: dir.root().to_path_buf(), files, wall_time_s })
}

fn simulate(config: &RunConfig, spec: &ProtocolSpec, dir: &mut OutputDir) -> Result<(), CliError> {
    let core = |e| CliError::from_core("protocol", e);
    let sim = &config.simulate;
    if sim.checkpoints < 2 {
        return Err(CliError::Config("simulate.checkpoints: need at least 2".into()));
    }
    let p = build_protocol(spec).map_err(core)?;
    let total = p.schedule.total_duration();
    let (final_state, checkpoints) =
        p.evolve_recorded(&config.integrator, &uniform_sample_times(total, sim.checkpoints)).map_err(core)?;
    let fidelity = p.score(&final_state, config.convention).map_err(core)?;
    let (n, d) = (final_state.n_atoms(), final_state.dim_local());
    let labels: Vec<String> = (0..final_state.hilbert_dim()).map(|i| basis_label(i, n, d)).collect();

    let mut rows = Vec::with_capacity(checkpoints.len() * labels.len());
    for c in &checkpoints {
        let t_us = num(spec.units.time_to_us(c.t));
        for (label, pop) in labels.iter().zip(&c.populations) {
            rows.push(vec![num(c.t), t_us.clone(), label.clone(), num(*pop)]);
        }
    }
    dir.write_csv("populations.csv", &["t", "t_us", "state", "population"], &rows)?;

    if sim.waveform {
        let rows: Vec<Vec<String>> = p
            .schedule
            .sample(sim.waveform_points)
            .iter()
            .map(|s| vec![num(s.t), num(spec.units.time_to_us(s.t)), num(s.omega), num(s.delta)])
            .collect();
        dir.write_csv("waveform.csv", &["t", "t_us", "omega", "delta"], &rows)?;
    }

    let final_populations: BTreeMap<&str, f64> = labels
        .iter()
        .zip(final_state.populations())
        .filter(|(_, p)| *p >= SUMMARY_POPULATION_FLOOR)
        .map(|(l, p)| (l.as_str(), p))
        .collect();
    dir.write_json(
        "summary.json",
        &json!({
            "experiment": "simulate",
            "protocol": spec.name,
            "convention": config.convention,
            "fidelity": fidelity,
            "purity": final_state.purity(),
            "total_duration": total,
            "total_time_us": spec.units.time_to_us(total),
            "final_populations": final_populations,
            "spec": spec,
        }),
    )
}

fn saturation(config: &RunConfig, spec: &ProtocolSpec, dir: &mut OutputDir) -> Result<(), CliError> {
    let s = &config.saturation;
    let grid = s.v_grid.values();
    let r = saturation_scan(spec, &grid, s.plateau_eps, s.amplitude_rule, &config.integrator, config.convention)
        .map_err(|e| CliError::from_core("saturation", e))?;
    let rows: Vec<Vec<String>> =
        r.sweep.points.iter().map(|p| vec![num(p.coords[0]), num(p.mean), num(1.0 - p.mean)]).collect();
    dir.write_csv("saturation.csv", &["v0", "fidelity", "infidelity"], &rows)?;
    dir.write_json(
        "summary.json",
        &json!({
            "experiment": "saturation",
            "protocol": spec.name,
            "convention": config.convention,
            "v_sat": r.v_sat,
            "plateau_infidelity": r.plateau_infidelity,
            "plateau_eps": s.plateau_eps,
            "amplitude_rule": s.amplitude_rule,
            "spec": r.sweep.spec,
        }),
    )
}

fn timescan(config: &RunConfig, spec: &ProtocolSpec, dir: &mut OutputDir) -> Result<(), CliError> {
    let t = &config.timescan;
    if t.baselines.is_empty() {
        return Err(CliError::Config("timescan.baselines: must not be empty".into()));
    }
    let times = t.times_us.values();
    let mut rows = Vec::new();
    let mut per_baseline = Vec::new();
    for &b in &t.baselines {
        let r = time_scan(spec, &times, b, &config.integrator, config.convention)
            .map_err(|e| CliError::from_core("timescan", e))?;
        let name = match b {
            Baseline::Rap => "rap",
            Baseline::PiPulse => "pi_pulse",
        };
        for p in &r.points {
            rows.push(vec![name.to_string(), num(p.coords[0]), num(p.mean)]);
        }
        per_baseline.push(json!({ "baseline": b, "min_fidelity": r.min_mean(), "spec": r.spec }));
    }
    dir.write_csv("timescan.csv", &["baseline", "total_time_us", "fidelity"], &rows)?;
    dir.write_json(
        "summary.json",
        &json!({
            "experiment": "timescan",
            "protocol": spec.name,
            "convention": config.convention,
            "baselines": per_baseline,
        }),
    )
}

fn robustness(config: &RunConfig, spec: &ProtocolSpec, dir: &mut OutputDir) -> Result<(), CliError> {
    let r = &config.robustness;
    let res = robustness_grid(
        spec,
        &r.omega_scales.values(),
        &r.delta_scales.values(),
        &config.integrator,
        config.convention,
    )
    .map_err(|e| CliError::from_core("robustness", e))?;
    let rows: Vec<Vec<String>> = res
        .points
        .iter()
        .map(|p| {
            let (o, d) = (p.coords[0], p.coords[1]);
            vec![num(o), num(d), num(o * spec.omega_max), num(d * spec.delta_max), num(p.mean)]
        })
        .collect();
    dir.write_csv("robustness.csv", &["omega_scale", "delta_scale", "omega_max", "delta_max", "fidelity"], &rows)?;
    let worst = res.points.iter().min_by(|a, b| a.mean.total_cmp(&b.mean)).expect("grids are non-empty");
    let nominal = res.points.iter().find(|p| p.coords.iter().all(|c| (c - 1.0).abs() < 1e-12)).map(|p| p.mean);
    dir.write_json(
        "summary.json",
        &json!({
            "experiment": "robustness",
            "protocol": spec.name,
            "convention": config.convention,
            "min_fidelity": worst.mean,
            "min_at": { "omega_scale": worst.coords[0], "delta_scale": worst.coords[1] },
            "nominal_fidelity": nominal,
            "spec": spec,
        }),
    )
}

fn montecarlo(config: &RunConfig, spec: &ProtocolSpec, dir: &mut OutputDir) -> Result<(), CliError> {
    let m = &config.montecarlo;
    let seed = config.seed.ok_or_else(|| CliError::Config("seed: required for montecarlo".into()))?;
    let dims = m.dims.unwrap_or(if spec.name.shape() == Shape::Line { PerturbDims::One } else { PerturbDims::Two });
    let r =
        montecarlo_positions(spec, &m.sigmas.values(), m.n_samples, dims, seed, &config.integrator, config.convention)
            .map_err(|e| CliError::from_core("montecarlo", e))?;
    let mut rows = Vec::with_capacity(r.points.len() * r.n_samples);
    for p in &r.points {
        for (j, f) in p.samples.iter().enumerate() {
            rows.push(vec![num(p.coords[0]), j.to_string(), num(*f)]);
        }
    }
    dir.write_csv("montecarlo.csv", &["sigma", "sample_index", "fidelity"], &rows)?;
    let stats: Vec<Vec<String>> = r
        .points
        .iter()
        .map(|p| vec![num(p.coords[0]), num(p.mean), num(p.std.unwrap_or(0.0)), r.n_samples.to_string()])
        .collect();
    dir.write_csv("montecarlo_summary.csv", &["sigma", "mean", "std", "n_samples"], &stats)?;
    let points: Vec<Value> =
        r.points.iter().map(|p| json!({ "sigma": p.coords[0], "mean": p.mean, "std": p.std })).collect();
    dir.write_json(
        "summary.json",
        &json!({
            "experiment": "montecarlo",
            "protocol": spec.name,
            "convention": config.convention,
            "seed": seed,
            "dims": dims,
            "n_samples": r.n_samples,
            "points": points,
            "spec": spec,
        }),
    )
}

fn optimize(config: &RunConfig, spec: &ProtocolSpec, dir: &mut OutputDir) -> Result<(), CliError> {
    let o = &config.optimize;
    let init = o.init.clone().unwrap_or_else(|| match o.parameters {
        ParameterSet::Amplitudes => vec![spec.omega_max, spec.delta_max],
        ParameterSet::Full => vec![spec.omega_max, spec.delta_max, spec.tau_r_ratio, spec.tau_d_ratio],
    });
    let bounds = o.bounds.clone().unwrap_or_else(|| init.iter().map(|&x| (0.5 * x, 2.0 * x)).collect());
    let r = optimize_pulse(spec, &init, &bounds, o.parameters, &o.options, &config.integrator, config.convention)
        .map_err(|e| CliError::from_core("optimize", e))?;
    let mut header = vec!["evaluation"];
    header.extend(o.parameters.names());
    header.push("fidelity");
    let rows: Vec<Vec<String>> = r
        .trace
        .iter()
        .map(|e| {
            let mut row = vec![e.evaluation.to_string()];
            row.extend(e.params.iter().map(|&x| num(x)));
            row.push(num(e.fidelity));
            row
        })
        .collect();
    dir.write_csv("optimize_trace.csv", &header, &rows)?;
    let best: BTreeMap<&str, f64> =
        r.parameter_names.iter().map(String::as_str).zip(r.best_params.iter().copied()).collect();
    dir.write_json(
        "summary.json",
        &json!({
            "experiment": "optimize",
            "protocol": spec.name,
            "convention": config.convention,
            "best": best,
            "best_fidelity": r.best_fidelity,
            "initial_fidelity": r.initial_fidelity,
            "evaluations": r.trace.len(),
            "exhausted": r.exhausted,
            "bounds": bounds,
            "spec": r.spec,
        }),
    )
}
