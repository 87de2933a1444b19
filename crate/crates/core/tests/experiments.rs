use rydberg_rap::dynamics::IntegratorSettings;
use rydberg_rap::experiments::{
    montecarlo_positions, nonincreasing_fit_residual, optimize_pulse, saturation_scan, AmplitudeRule, OptimizeOptions,
    ParameterSet, DEFAULT_PLATEAU_EPS,
};
use rydberg_rap::geometry::PerturbDims;
use rydberg_rap::protocols::{
    build_protocol, FidelityConvention, ProtocolName, ProtocolSpec, GHZ_DELTA_RATIO, GHZ_OMEGA_RATIO,
};

const STANDARD: FidelityConvention = FidelityConvention::Standard;

fn closed_fidelity(spec: &ProtocolSpec) -> f64 {
    build_protocol(&spec.without_dissipation()).unwrap().run(&IntegratorSettings::default(), STANDARD).unwrap().fidelity
}

#[test]
fn optimizer_recovers_bell_amplitudes() {
    let spec = ProtocolSpec::default_for(ProtocolName::Bell2);
    let r = optimize_pulse(
        &spec,
        &[0.2, 0.2],
        &[(0.05, 0.5), (0.05, 0.5)],
        ParameterSet::Amplitudes,
        &OptimizeOptions::default(),
        &IntegratorSettings::default(),
        STANDARD,
    )
    .unwrap();
    assert!(!r.exhausted);
    assert!(r.best_fidelity >= r.initial_fidelity);
    assert!(r.best_fidelity >= closed_fidelity(&spec) - 1e-6);
    for (x, reference) in r.best_params.iter().zip([spec.omega_max, spec.delta_max]) {
        assert!((x / reference - 1.0).abs() <= 0.15, "{:?}", r.best_params);
    }
    let best = r.trace.iter().map(|e| e.fidelity).fold(0.0, f64::max);
    assert_eq!(best, r.best_fidelity);
    assert!(r.trace.iter().enumerate().all(|(i, e)| e.evaluation == i));
}

#[test]
fn optimizer_improves_detuned_ghz_and_respects_budget() {
    let spec = ProtocolSpec::default_for(ProtocolName::Ghz4);
    let init = [spec.v0 / GHZ_OMEGA_RATIO * 1.15, spec.v0 / GHZ_DELTA_RATIO * 0.85];
    let options = OptimizeOptions { max_evals: 25, ..Default::default() };
    let r = optimize_pulse(
        &spec,
        &init,
        &[(0.05, 0.6), (0.05, 0.6)],
        ParameterSet::Amplitudes,
        &options,
        &IntegratorSettings::default(),
        STANDARD,
    )
    .unwrap();
    assert!(r.trace.len() <= 25);
    assert!(r.best_fidelity > r.initial_fidelity);
    assert_eq!(r.parameter_names, ["omega_max", "delta_max"]);
}

#[test]
fn optimizer_rejects_start_outside_bounds() {
    let spec = ProtocolSpec::default_for(ProtocolName::Bell2);
    let err = optimize_pulse(
        &spec,
        &[0.7, 0.2],
        &[(0.05, 0.5), (0.05, 0.5)],
        ParameterSet::Amplitudes,
        &OptimizeOptions::default(),
        &IntegratorSettings::default(),
        STANDARD,
    )
    .unwrap_err();
    assert!(err.to_string().contains("omega_max"), "{err}");
}

#[test]
fn saturation_infidelity_trends_down() {
    let grid: Vec<f64> = (0..20).map(|i| 0.2 + 1.3 * i as f64 / 19.0).collect();
    for name in [ProtocolName::Bell2, ProtocolName::W3] {
        let spec = ProtocolSpec::default_for(name);
        let r = saturation_scan(
            &spec,
            &grid,
            DEFAULT_PLATEAU_EPS,
            AmplitudeRule::Fixed,
            &IntegratorSettings::default(),
            STANDARD,
        )
        .unwrap();
        let infidelity: Vec<f64> = r.sweep.means().iter().map(|f| 1.0 - f).collect();
        assert!(nonincreasing_fit_residual(&infidelity) <= 0.05, "{name}: {infidelity:?}");
        assert!(infidelity[0] > 10.0 * r.plateau_infidelity);
        assert!(grid.contains(&r.v_sat));
    }
}

#[test]
fn saturation_with_proportional_amplitudes_runs() {
    let spec = ProtocolSpec::default_for(ProtocolName::Bell2);
    let grid = [0.4, 0.7, 1.0, 1.3, 1.6];
    let rule = AmplitudeRule::ProportionalToV0 { delta_ratio: 3.0, omega_ratio: 4.0 };
    let r = saturation_scan(&spec, &grid, DEFAULT_PLATEAU_EPS, rule, &IntegratorSettings::default(), STANDARD).unwrap();
    assert_eq!(r.sweep.points.len(), 5);
    assert!(saturation_scan(&spec, &grid[..4], DEFAULT_PLATEAU_EPS, rule, &IntegratorSettings::default(), STANDARD)
        .is_err());
}

#[test]
fn montecarlo_mean_does_not_grow_with_disorder() {
    let spec = ProtocolSpec { v0: 2.0, ..ProtocolSpec::default_for(ProtocolName::W3) }.without_dissipation();
    let sigmas = [0.0, 0.02, 0.05];
    let r = montecarlo_positions(&spec, &sigmas, 20, PerturbDims::Two, 7, &IntegratorSettings::default(), STANDARD)
        .unwrap();
    assert_eq!(r.points[0].std, Some(0.0));
    for w in r.points.windows(2) {
        let se = ((w[0].std.unwrap().powi(2) + w[1].std.unwrap().powi(2)) / 20.0).sqrt();
        assert!(w[1].mean <= w[0].mean + 2.0 * se, "{} -> {}", w[0].mean, w[1].mean);
    }
    let again = montecarlo_positions(&spec, &sigmas, 20, PerturbDims::Two, 7, &IntegratorSettings::default(), STANDARD)
        .unwrap();
    assert_eq!(r, again);
}
