//! Helpers shared by the property and acceptance suites.
#![allow(dead_code)]

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;

use rydberg_rap::dynamics::{evolve_observed, IntegratorSettings, LindbladChannelSet};
use rydberg_rap::geometry::InteractionMatrix;
use rydberg_rap::pulses::{build_schedule, Coupling, PulseSchedule, SegmentDescriptor};
use rydberg_rap::quantum::{basis_digits, basis_index, LevelScheme, QuantumState};

pub fn random_density(n: usize, d: usize, rng: &mut impl Rng, offdiag: f64) -> QuantumState {
    let dim = d.pow(n as u32);
    let b = Array2::from_shape_fn((dim, dim), |(i, j)| {
        let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if i == j {
            C64::new(1.0, 0.0) + z * offdiag
        } else {
            z * offdiag
        }
    });
    let rho = b.dot(&b.t().mapv(|a| a.conj()));
    let tr: C64 = rho.diag().sum();
    QuantumState::density(n, d, rho.mapv(|a| a / tr)).unwrap()
}

pub fn random_schedule(rng: &mut impl Rng) -> PulseSchedule {
    let omega = rng.random_range(0.1..0.6);
    let delta = rng.random_range(0.0..0.5);
    let tp = rng.random_range(5.0..25.0);
    let coupling = if rng.random_bool(0.5) { Coupling::G1 } else { Coupling::G0 };
    let mut d = vec![SegmentDescriptor::rap(omega, delta, tp, coupling)];
    for _ in 0..rng.random_range(0..3) {
        match rng.random_range(0..3) {
            0 => {
                d.push(SegmentDescriptor::GroundFlip);
                d.push(SegmentDescriptor::rap(omega, delta, tp, coupling));
            }
            1 => d.push(SegmentDescriptor::SquarePi { n_collective: rng.random_range(1..3), omega, coupling }),
            _ => d.push(SegmentDescriptor::Idle { duration: rng.random_range(0.5..5.0) }),
        }
    }
    build_schedule(&d).unwrap()
}

pub fn permutation_operator(perm: &[usize], d: usize) -> Array2<C64> {
    let n = perm.len();
    let dim = d.pow(n as u32);
    let mut p = Array2::zeros((dim, dim));
    for idx in 0..dim {
        let digits = basis_digits(idx, n, d);
        let mut moved = vec![0; n];
        for (atom, &digit) in digits.iter().enumerate() {
            moved[perm[atom]] = digit;
        }
        p[[basis_index(&moved, d), idx]] = C64::new(1.0, 0.0);
    }
    p
}

pub fn collective_pi_population(n: usize) -> f64 {
    let scheme = LevelScheme::three_level();
    let v = InteractionMatrix::uniform(n, 1e4).unwrap();
    let schedule =
        build_schedule(&[SegmentDescriptor::SquarePi { n_collective: n, omega: 1.0, coupling: Coupling::G1 }]).unwrap();
    let psi0 = QuantumState::basis(&"1".repeat(n), 3).unwrap();
    let labels: Vec<String> = (0..n).map(|i| (0..n).map(|j| if i == j { 'r' } else { '1' }).collect()).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let symmetric = QuantumState::uniform_superposition(&refs, 3).unwrap();
    let out = evolve_observed(
        &psi0,
        &schedule,
        &v,
        &scheme,
        &LindbladChannelSet::empty(),
        &IntegratorSettings::default(),
        &[],
        &mut |_, _| {},
    )
    .unwrap();
    rydberg_rap::protocols::fidelity(&out, &symmetric, Default::default()).unwrap()
}

/// Worst diagnostics seen at any checkpoint over randomized dissipative schedules.
#[derive(Debug, Default)]
pub struct InvariantReport {
    pub checkpoints: usize,
    pub trace_error: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

pub fn random_schedule_invariants(cases: usize, seed: u64) -> InvariantReport {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rydberg_rap::dynamics::uniform_sample_times;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InvariantReport { min_eigenvalue: f64::INFINITY, ..Default::default() };
    for _ in 0..cases {
        let n = rng.random_range(2..4);
        let gamma = rng.random_range(1e-3..5e-2);
        let scheme = if rng.random_bool(0.3) {
            LevelScheme::with_dump(gamma).unwrap()
        } else {
            LevelScheme::cesium(gamma).unwrap()
        };
        let v = InteractionMatrix::uniform(n, rng.random_range(0.1..2.0)).unwrap();
        let schedule = random_schedule(&mut rng);
        let channels = LindbladChannelSet::from_scheme(&scheme, n).unwrap();
        let rho0 = random_density(n, scheme.dim(), &mut rng, 0.3);
        let times = uniform_sample_times(schedule.total_duration(), 12);
        evolve_observed(
            &rho0,
            &schedule,
            &v,
            &scheme,
            &channels,
            &IntegratorSettings::default(),
            &times,
            &mut |_, s| {
                let d = s.diagnostics();
                report.checkpoints += 1;
                report.trace_error = report.trace_error.max(d.normalization_error);
                report.hermiticity = report.hermiticity.max(d.hermiticity);
                report.min_eigenvalue = report.min_eigenvalue.min(d.min_eigenvalue);
            },
        )
        .unwrap();
    }
    report
}
