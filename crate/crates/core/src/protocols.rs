//! Named entangling protocols: layout, level scheme, pulse schedule, initial
//! and target states, plus fidelity evaluation.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::dynamics::{evolve_observed, evolve_recorded, Checkpoint, IntegratorSettings, LindbladChannelSet};
use crate::error::{invalid, Error, Result};
use crate::geometry::{build_layout, interaction_matrix, AtomLayout, InteractionMatrix, Shape};
use crate::pulses::{build_schedule, ground_flip_on, pi_g_unitary, Coupling, PulseSchedule, SegmentDescriptor};
use crate::quantum::{partial_trace, LevelScheme, QuantumState, StateData};
use crate::units::PhysicalUnits;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Bell2,
    W3,
    W4Square,
    W4Pyramid,
    PiPulseBell2,
    PiPulseW3,
    RelayBell3,
    Ghz4,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 8] = [
        ProtocolName::Bell2,
        ProtocolName::W3,
        ProtocolName::W4Square,
        ProtocolName::W4Pyramid,
        ProtocolName::PiPulseBell2,
        ProtocolName::PiPulseW3,
        ProtocolName::RelayBell3,
        ProtocolName::Ghz4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolName::Bell2 => "bell2",
            ProtocolName::W3 => "w3",
            ProtocolName::W4Square => "w4_square",
            ProtocolName::W4Pyramid => "w4_pyramid",
            ProtocolName::PiPulseBell2 => "pi_pulse_bell2",
            ProtocolName::PiPulseW3 => "pi_pulse_w3",
            ProtocolName::RelayBell3 => "relay_bell3",
            ProtocolName::Ghz4 => "ghz4",
        }
    }

    pub fn n_atoms(self) -> usize {
        match self {
            ProtocolName::Bell2 | ProtocolName::PiPulseBell2 => 2,
            ProtocolName::W3 | ProtocolName::PiPulseW3 | ProtocolName::RelayBell3 => 3,
            ProtocolName::W4Square | ProtocolName::W4Pyramid | ProtocolName::Ghz4 => 4,
        }
    }

    pub fn shape(self) -> Shape {
        match self {
            ProtocolName::Bell2 | ProtocolName::PiPulseBell2 | ProtocolName::RelayBell3 => Shape::Line,
            ProtocolName::W3 | ProtocolName::PiPulseW3 => Shape::Triangle,
            ProtocolName::W4Square | ProtocolName::Ghz4 => Shape::Square,
            ProtocolName::W4Pyramid => Shape::Pyramid,
        }
    }

    pub fn is_pi_pulse(self) -> bool {
        matches!(self, ProtocolName::PiPulseBell2 | ProtocolName::PiPulseW3)
    }

    /// The pi-pulse counterpart of a RAP protocol, if any.
    pub fn pi_pulse_variant(self) -> Option<ProtocolName> {
        match self {
            ProtocolName::Bell2 => Some(ProtocolName::PiPulseBell2),
            ProtocolName::W3 => Some(ProtocolName::PiPulseW3),
            _ => None,
        }
    }
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolName::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| Error::UnknownProtocol(s.to_string()))
    }
}

/// Atomic species setting the Rydberg decay model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Three channels to `|0>`, `|1>` and dephasing; lifetime 540 us.
    Cs,
    /// Single channel into a dump level; lifetime 147 us.
    Rb,
    None,
}

impl Preset {
    pub fn lifetime_us(self) -> Option<f64> {
        match self {
            Preset::Cs => Some(540.0),
            Preset::Rb => Some(147.0),
            Preset::None => None,
        }
    }

    /// Level scheme with `gamma_r / Omega0` set by the lifetime and `units`.
    /// A lifetime in `units` replaces the species default.
    pub fn scheme(self, units: &PhysicalUnits) -> Result<LevelScheme> {
        let Some(default_lifetime) = self.lifetime_us() else {
            return Ok(LevelScheme::three_level());
        };
        let gamma = units.decay_rate_from_lifetime_us(units.rydberg_lifetime_us.unwrap_or(default_lifetime))?;
        match self {
            Preset::Cs => LevelScheme::cesium(gamma),
            _ => LevelScheme::with_dump(gamma),
        }
    }
}

/// How the second ground level is addressed between sweeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundCoupling {
    /// Instantaneous global `|0> <-> |1>` swap.
    #[default]
    PiG,
    /// The laser is retargeted to couple the other ground level instead.
    Retarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub name: ProtocolName,
    pub omega_max: f64,
    pub delta_max: f64,
    pub v0: f64,
    /// Width `T_p` of one sweep (or, for pi-pulse protocols, unused).
    pub sweep_width: f64,
    #[serde(default = "default_tau_r_ratio")]
    pub tau_r_ratio: f64,
    #[serde(default = "default_tau_d_ratio")]
    pub tau_d_ratio: f64,
    pub preset: Preset,
    #[serde(default)]
    pub ground_coupling: GroundCoupling,
    #[serde(default)]
    pub units: PhysicalUnits,
}

fn default_tau_r_ratio() -> f64 {
    crate::pulses::DEFAULT_TAU_R_RATIO
}

fn default_tau_d_ratio() -> f64 {
    crate::pulses::DEFAULT_TAU_D_RATIO
}

/// Sweep width giving a two-sweep protocol of 1 us at 100 MHz.
pub const DEFAULT_SWEEP_WIDTH: f64 = 100.0 * PI;
pub const GHZ_DELTA_RATIO: f64 = 4.05;
pub const GHZ_OMEGA_RATIO: f64 = 4.85;

impl ProtocolSpec {
    pub fn default_for(name: ProtocolName) -> Self {
        let base = ProtocolSpec {
            name,
            omega_max: 0.17,
            delta_max: 0.24,
            v0: 0.70,
            sweep_width: DEFAULT_SWEEP_WIDTH,
            tau_r_ratio: default_tau_r_ratio(),
            tau_d_ratio: default_tau_d_ratio(),
            preset: Preset::Cs,
            ground_coupling: GroundCoupling::PiG,
            units: PhysicalUnits::default(),
        };
        match name {
            ProtocolName::Bell2 | ProtocolName::PiPulseBell2 => base,
            ProtocolName::W3 | ProtocolName::PiPulseW3 => ProtocolSpec { v0: 0.73, ..base },
            // the square's diagonal pairs see V0 / 8, which must still blockade
            ProtocolName::W4Square | ProtocolName::W4Pyramid => ProtocolSpec { v0: 8.0, ..base },
            ProtocolName::RelayBell3 => ProtocolSpec {
                omega_max: 0.265,
                delta_max: 0.247,
                v0: 0.96,
                sweep_width: 2.0 * PI * 27.0,
                preset: Preset::Rb,
                ..base
            },
            ProtocolName::Ghz4 => {
                let v0 = 1.13;
                ProtocolSpec { omega_max: v0 / GHZ_OMEGA_RATIO, delta_max: v0 / GHZ_DELTA_RATIO, v0, ..base }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        for (field, value) in [
            ("omega_max", self.omega_max),
            ("v0", self.v0),
            ("sweep_width", self.sweep_width),
            ("tau_r_ratio", self.tau_r_ratio),
            ("tau_d_ratio", self.tau_d_ratio),
        ] {
            if !positive(value) {
                return Err(invalid(format!("{field} must be positive, got {value}")));
            }
        }
        if !(self.delta_max.is_finite() && self.delta_max >= 0.0) {
            return Err(invalid(format!("delta_max must be >= 0, got {}", self.delta_max)));
        }
        self.units.validate()
    }

    pub fn is_dissipative(&self) -> bool {
        self.preset != Preset::None
    }

    /// Same protocol with dissipation switched off. Keeps the dump level of
    /// the Rb preset out, since it only matters when decay is on.
    pub fn without_dissipation(&self) -> Self {
        ProtocolSpec { preset: Preset::None, ..self.clone() }
    }

    /// Descriptors in pi_g form: RAP sweeps (or square pulses) separated by
    /// ground flips.
    fn pi_g_descriptors(&self) -> Vec<SegmentDescriptor> {
        let rap = SegmentDescriptor::Rap {
            omega_max: self.omega_max,
            delta_max: self.delta_max,
            sweep_width: self.sweep_width,
            tau_r_ratio: self.tau_r_ratio,
            tau_d_ratio: self.tau_d_ratio,
            coupling: Coupling::G1,
        };
        let flip = SegmentDescriptor::GroundFlip;
        let square = |n| SegmentDescriptor::SquarePi { n_collective: n, omega: self.omega_max, coupling: Coupling::G1 };
        match self.name {
            ProtocolName::RelayBell3 => vec![rap.clone(), flip.clone(), rap.clone(), flip, rap],
            // the second pulse de-excites a single Rydberg atom, so no collective enhancement
            ProtocolName::PiPulseBell2 => vec![square(2), flip, square(1)],
            ProtocolName::PiPulseW3 => vec![square(3), flip, square(1)],
            _ => vec![rap.clone(), flip, rap],
        }
    }

    pub fn descriptors(&self) -> Vec<SegmentDescriptor> {
        let pi_g = self.pi_g_descriptors();
        match self.ground_coupling {
            GroundCoupling::PiG => pi_g,
            GroundCoupling::Retarget => retarget(&pi_g),
        }
    }
}

/// Replaces every ground flip by toggling the coupled ground level of all
/// later pulses, which is the same evolution seen in the flipped frame.
fn retarget(descriptors: &[SegmentDescriptor]) -> Vec<SegmentDescriptor> {
    let mut flipped = false;
    let toggle = |c: Coupling, flipped: bool| match (c, flipped) {
        (c, false) => c,
        (Coupling::G0, true) => Coupling::G1,
        (Coupling::G1, true) => Coupling::G0,
    };
    descriptors
        .iter()
        .filter_map(|d| match d.clone() {
            SegmentDescriptor::GroundFlip => {
                flipped = !flipped;
                None
            }
            SegmentDescriptor::Rap { omega_max, delta_max, sweep_width, tau_r_ratio, tau_d_ratio, coupling } => {
                Some(SegmentDescriptor::Rap {
                    omega_max,
                    delta_max,
                    sweep_width,
                    tau_r_ratio,
                    tau_d_ratio,
                    coupling: toggle(coupling, flipped),
                })
            }
            SegmentDescriptor::SquarePi { n_collective, omega, coupling } => {
                Some(SegmentDescriptor::SquarePi { n_collective, omega, coupling: toggle(coupling, flipped) })
            }
            other => Some(other),
        })
        .collect()
}

/// Target on a subset of atoms, compared after tracing out the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTarget {
    pub keep: Vec<usize>,
    pub state: QuantumState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    pub spec: ProtocolSpec,
    pub layout: AtomLayout,
    pub interactions: InteractionMatrix,
    pub scheme: LevelScheme,
    pub schedule: PulseSchedule,
    pub initial_label: String,
    pub initial: QuantumState,
    pub target: QuantumState,
    pub reduced_target: Option<ReducedTarget>,
}

pub fn default_layout(spec: &ProtocolSpec) -> Result<AtomLayout> {
    build_layout(spec.name.shape(), spec.name.n_atoms(), 1.0, spec.v0)
}

pub fn build_protocol(spec: &ProtocolSpec) -> Result<Protocol> {
    spec.validate()?;
    build_protocol_with_layout(spec, default_layout(spec)?)
}

fn symmetric_state(labels: &[&str], d: usize) -> Result<QuantumState> {
    QuantumState::uniform_superposition(labels, d)
}

/// Builds a protocol on an explicit (for example perturbed) layout.
pub fn build_protocol_with_layout(spec: &ProtocolSpec, layout: AtomLayout) -> Result<Protocol> {
    spec.validate()?;
    let n = spec.name.n_atoms();
    if layout.n_atoms() != n {
        return Err(Error::DimensionMismatch { expected: n, found: layout.n_atoms() });
    }
    let interactions = interaction_matrix(&layout)?;
    let scheme = spec.preset.scheme(&spec.units)?;
    let d = scheme.dim();
    let schedule = build_schedule(&spec.descriptors())?;

    use ProtocolName::*;
    let initial_label = match spec.name {
        RelayBell3 => "010".to_string(),
        _ => "1".repeat(n),
    };
    let initial = QuantumState::basis(&initial_label, d)?;
    let pi_g_target = match spec.name {
        Bell2 | PiPulseBell2 => symmetric_state(&["10", "01"], d)?,
        W3 | PiPulseW3 => symmetric_state(&["001", "010", "100"], d)?,
        W4Square | W4Pyramid => symmetric_state(&["0001", "0010", "0100", "1000"], d)?,
        RelayBell3 => symmetric_state(&["001", "100"], d)?,
        Ghz4 => symmetric_state(&["0101", "1010"], d)?,
    };
    // retargeting skips the flips, so the result lives in the correspondingly flipped frame
    let target = match spec.ground_coupling {
        GroundCoupling::PiG => pi_g_target,
        GroundCoupling::Retarget => {
            let flips = spec.pi_g_descriptors().iter().filter(|s| matches!(s, SegmentDescriptor::GroundFlip)).count();
            if flips % 2 == 1 {
                pi_g_unitary(n, d)?.apply(&pi_g_target)?
            } else {
                pi_g_target
            }
        }
    };
    let reduced_target = match spec.name {
        RelayBell3 => Some(ReducedTarget { keep: vec![0, 2], state: symmetric_state(&["01", "10"], d)? }),
        _ => None,
    };
    Ok(Protocol {
        spec: spec.clone(),
        layout,
        interactions,
        scheme,
        schedule,
        initial_label,
        initial,
        target,
        reduced_target,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityConvention {
    /// `<psi| rho |psi>`.
    #[default]
    Standard,
    /// `|<psi| rho |psi>|^2`.
    #[serde(alias = "paper")]
    PaperSquared,
}

impl FromStr for FidelityConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(FidelityConvention::Standard),
            "paper" | "paper_squared" => Ok(FidelityConvention::PaperSquared),
            other => Err(invalid(format!("unknown fidelity convention `{other}`"))),
        }
    }
}

/// Overlap of `state` with the pure `target`, clamped to `[0, 1]`.
pub fn fidelity(state: &QuantumState, target: &QuantumState, convention: FidelityConvention) -> Result<f64> {
    state.ensure_compatible(target.n_atoms(), target.dim_local())?;
    let psi = match target.data() {
        StateData::Pure(psi) => psi,
        StateData::Density(_) => return Err(invalid("fidelity target must be a pure state")),
    };
    let overlap = match state.data() {
        StateData::Pure(phi) => {
            let amp: C64 = psi.iter().zip(phi.iter()).map(|(a, b)| a.conj() * b).sum();
            amp.norm_sqr()
        }
        StateData::Density(rho) => {
            let rho_psi = rho.dot(psi);
            psi.iter().zip(rho_psi.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re
        }
    };
    let f = overlap.clamp(0.0, 1.0);
    Ok(match convention {
        FidelityConvention::Standard => f,
        FidelityConvention::PaperSquared => f * f,
    })
}

/// Flips the ground levels of atoms 1 and 3, turning the staggered GHZ state
/// `(|0101> + |1010>)/sqrt2` into `(|0000> + |1111>)/sqrt2`.
pub fn ghz_canonicalize(state: &QuantumState) -> Result<QuantumState> {
    if state.n_atoms() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: state.n_atoms() });
    }
    ground_flip_on(&[1, 3], 4, state.dim_local())?.apply(state)
}

/// Outcome of one protocol run.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolOutcome {
    pub final_state: QuantumState,
    pub fidelity: f64,
}

impl Protocol {
    pub fn n_atoms(&self) -> usize {
        self.initial.n_atoms()
    }

    pub fn channels(&self) -> Result<LindbladChannelSet> {
        LindbladChannelSet::from_scheme(&self.scheme, self.n_atoms())
    }

    /// Initial state in the representation used for evolution: a state vector
    /// for closed systems, a density matrix otherwise.
    fn start_state(&self) -> QuantumState {
        if self.scheme.is_dissipative() {
            self.initial.to_density()
        } else {
            self.initial.clone()
        }
    }

    pub fn evolve(&self, settings: &IntegratorSettings) -> Result<QuantumState> {
        evolve_observed(
            &self.start_state(),
            &self.schedule,
            &self.interactions,
            &self.scheme,
            &self.channels()?,
            settings,
            &[],
            &mut |_, _| {},
        )
    }

    pub fn evolve_recorded(
        &self,
        settings: &IntegratorSettings,
        sample_times: &[f64],
    ) -> Result<(QuantumState, Vec<Checkpoint>)> {
        evolve_recorded(
            &self.start_state(),
            &self.schedule,
            &self.interactions,
            &self.scheme,
            &self.channels()?,
            settings,
            sample_times,
        )
    }

    /// Protocol figure of merit for a final state: the reduced-state overlap
    /// when a reduced target is defined, the full overlap otherwise.
    pub fn score(&self, final_state: &QuantumState, convention: FidelityConvention) -> Result<f64> {
        match &self.reduced_target {
            Some(r) => fidelity(&partial_trace(final_state, &r.keep)?, &r.state, convention),
            None => fidelity(final_state, &self.target, convention),
        }
    }

    pub fn run(&self, settings: &IntegratorSettings, convention: FidelityConvention) -> Result<ProtocolOutcome> {
        let final_state = self.evolve(settings)?;
        let fidelity = self.score(&final_state, convention)?;
        Ok(ProtocolOutcome { final_state, fidelity })
    }
}
