use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use rydberg_rap::dynamics::IntegratorSettings;
use rydberg_rap::protocols::{build_protocol, FidelityConvention, ProtocolName, ProtocolSpec};
use rydberg_rap_cli::RunConfig;

fn rapsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rapsim")).args(args).env("RAPSIM_THREADS", "2").output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_ok(subcommand: &str, config: &str, out: &Path, extra: &[&str]) {
    let mut args = vec![subcommand, "--config", config, "--out", out.to_str().unwrap()];
    args.extend(extra);
    let o = rapsim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn simulate_bell_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), r#"{"schema_version": 1, "protocol": {"name": "bell2", "preset": "cs"}}"#);
    let out = tmp.path().join("out");
    run_ok("simulate", &config, &out, &[]);

    let summary = read_json(&out.join("summary.json"));
    let expected = build_protocol(&ProtocolSpec::default_for(ProtocolName::Bell2))
        .unwrap()
        .run(&IntegratorSettings::default(), FidelityConvention::Standard)
        .unwrap()
        .fidelity;
    // checkpoints change the step sequence, not the result beyond tolerance
    assert!((summary["fidelity"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert!((summary["total_time_us"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let (header, rows) = csv_rows(&out.join("populations.csv"));
    assert_eq!(header, ["t", "t_us", "state", "population"]);
    assert_eq!(rows.len(), 400 * 9);
    let (header, rows) = csv_rows(&out.join("waveform.csv"));
    assert_eq!(header, ["t", "t_us", "omega", "delta"]);
    assert_eq!(rows.len(), 400);

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["experiment"], "simulate");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["worker_threads"], 2);
    let leftovers: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn manifest_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"schema_version": 1, "protocol": {"name": "w3"},
            "physical_units": {"omega0_over_2pi_MHz": 100, "adjacent_interaction_MHz": 200},
            "simulate": {"checkpoints": 20, "waveform": false}}"#,
    );
    let out = tmp.path().join("out");
    run_ok("simulate", &config, &out, &["--seed", "5", "--convention", "paper"]);
    let manifest = read_json(&out.join("manifest.json"));
    let embedded = RunConfig::from_json(&manifest["config"].to_string()).unwrap();
    let mut expected = RunConfig::load(Path::new(&config)).unwrap();
    expected.experiment = Some(rydberg_rap_cli::Experiment::Simulate);
    expected.seed = Some(5);
    expected.convention = FidelityConvention::PaperSquared;
    expected.output_dir = Some(out.clone());
    assert_eq!(embedded, expected);
    assert!((manifest["spec"]["v0"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(!out.join("waveform.csv").exists());
}

#[test]
fn squared_convention_squares_the_overlap() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"schema_version": 1, "protocol": {"name": "bell2"}, "simulate": {"checkpoints": 2}}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok("simulate", &config, &a, &[]);
    run_ok("simulate", &config, &b, &["--convention", "paper"]);
    let f = read_json(&a.join("summary.json"))["fidelity"].as_f64().unwrap();
    let g = read_json(&b.join("summary.json"))["fidelity"].as_f64().unwrap();
    assert!((g - f * f).abs() < 1e-15);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"schema_version": 1, "protocol": {"name": "w3", "v0": 2.0, "preset": "none"}, "seed": 17,
            "montecarlo": {"sigmas": [0.0, 0.05], "n_samples": 4}}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok("montecarlo", &config, &a, &[]);
    run_ok("montecarlo", &config, &b, &[]);
    for name in ["montecarlo.csv", "montecarlo_summary.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let (header, rows) = csv_rows(&a.join("montecarlo.csv"));
    assert_eq!(header, ["sigma", "sample_index", "fidelity"]);
    assert_eq!(rows.len(), 8);
    let (header, rows) = csv_rows(&a.join("montecarlo_summary.csv"));
    assert_eq!(header, ["sigma", "mean", "std", "n_samples"]);
    assert_eq!(rows[0][2], "0.0");

    let c = tmp.path().join("c");
    run_ok("simulate", &config, &c, &[]);
    run_ok("simulate", &config, &a, &[]);
    assert_eq!(std::fs::read(a.join("populations.csv")).unwrap(), std::fs::read(c.join("populations.csv")).unwrap());
}

#[test]
fn sweep_csvs_have_stable_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"schema_version": 1, "protocol": {"name": "bell2"},
            "saturation": {"v_grid": {"start": 0.4, "stop": 1.2, "points": 5}},
            "timescan": {"times_us": [0.5, 1.0]},
            "robustness": {"omega_scales": [0.95, 1.0, 1.05], "delta_scales": [1.0, 1.1]},
            "optimize": {"init": [0.2, 0.2], "bounds": [[0.05, 0.5], [0.05, 0.5]], "options": {"max_evals": 8}}}"#,
    );
    let cases: [(&str, &str, &[&str], usize); 4] = [
        ("saturation", "saturation.csv", &["v0", "fidelity", "infidelity"], 5),
        ("timescan", "timescan.csv", &["baseline", "total_time_us", "fidelity"], 4),
        ("robustness", "robustness.csv", &["omega_scale", "delta_scale", "omega_max", "delta_max", "fidelity"], 6),
        ("optimize", "optimize_trace.csv", &["evaluation", "omega_max", "delta_max", "fidelity"], 8),
    ];
    for (sub, file, expected_header, n_rows) in cases {
        let out = tmp.path().join(sub);
        run_ok(sub, &config, &out, &[]);
        let (header, rows) = csv_rows(&out.join(file));
        assert_eq!(header, expected_header, "{sub}");
        assert_eq!(rows.len(), n_rows, "{sub}");
        assert_eq!(read_json(&out.join("summary.json"))["experiment"], sub);
    }
    let summary = read_json(&tmp.path().join("optimize/summary.json"));
    assert_eq!(summary["exhausted"], true);
    let (_, rows) = csv_rows(&tmp.path().join("timescan/timescan.csv"));
    assert_eq!(rows[0][0], "rap");
    assert_eq!(rows[2][0], "pi_pulse");
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        ("simulate", r#"{"schema_version": 1, "protocol": {"name": "bell5"}}"#, "protocol.name"),
        ("simulate", r#"{"schema_version": 1, "protocol": {"name": "bell2", "v0": 0}}"#, "v0"),
        ("montecarlo", r#"{"schema_version": 1, "protocol": {"name": "w3"}}"#, "seed"),
        ("saturation", r#"{"schema_version": 1, "experiment": "simulate", "protocol": {"name": "w3"}}"#, "experiment"),
        (
            "robustness",
            r#"{"schema_version": 1, "protocol": {"name": "w3"}, "robustness": {"omega_scales": [0.9, 1.1]}}"#,
            "omega_scale",
        ),
        (
            "simulate",
            r#"{"schema_version": 1, "protocol": {"name": "w3"}, "integrator": {"rel_tol": -1}}"#,
            "integrator",
        ),
    ];
    for (sub, text, field) in cases {
        let config = write_config(tmp.path(), text);
        let o = rapsim(&[sub, "--config", &config, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(stderr.contains(field), "{field}: {stderr}");
    }
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn integrator_failure_reports_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"schema_version": 1, "protocol": {"name": "bell2"},
            "integrator": {"max_step": 1e-12, "min_step": 1e-10}}"#,
    );
    let o = rapsim(&["simulate", "--config", &config, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("segment"));
}

#[test]
fn shipped_configs_parse_and_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let c = RunConfig::load(&path).unwrap();
        c.resolve_spec().unwrap();
        if c.experiment == Some(rydberg_rap_cli::Experiment::Montecarlo) {
            assert!(c.seed.is_some(), "{}", path.display());
        }
        n += 1;
    }
    assert!(n >= 5);
}
