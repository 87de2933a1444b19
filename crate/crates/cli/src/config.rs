//! Run configuration as read from JSON. Every section is optional except the
//! protocol name; omitted values fall back to the protocol defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rydberg_rap::dynamics::IntegratorSettings;
use rydberg_rap::experiments::{
    AmplitudeRule, Baseline, OptimizeOptions, ParameterSet, DEFAULT_MC_SAMPLES, DEFAULT_PLATEAU_EPS,
};
use rydberg_rap::geometry::PerturbDims;
use rydberg_rap::protocols::{FidelityConvention, GroundCoupling, Preset, ProtocolName, ProtocolSpec};
use rydberg_rap::units::{PhysicalUnits, Quantity};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Simulate,
    Saturation,
    Timescan,
    Robustness,
    Montecarlo,
    Optimize,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Saturation => "saturation",
            Experiment::Timescan => "timescan",
            Experiment::Robustness => "robustness",
            Experiment::Montecarlo => "montecarlo",
            Experiment::Optimize => "optimize",
        }
    }
}

/// Protocol selection plus overrides of its default parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: ProtocolName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_r_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_d_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_coupling: Option<GroundCoupling>,
}

impl ProtocolConfig {
    pub fn named(name: ProtocolName) -> Self {
        Self {
            name,
            omega_max: None,
            delta_max: None,
            v0: None,
            sweep_width: None,
            tau_r_ratio: None,
            tau_d_ratio: None,
            preset: None,
            ground_coupling: None,
        }
    }
}

/// Laboratory calibration applied before anything is simulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalUnitsConfig {
    #[serde(rename = "omega0_over_2pi_MHz", alias = "omega0_over_2pi_mhz", default = "default_omega0")]
    pub omega0_over_2pi_mhz: f64,
    /// Rydberg lifetime replacing the species preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_inverse_us: Option<f64>,
    /// Nearest-neighbour interaction `V / 2pi` in MHz; sets `v0`.
    #[serde(
        rename = "adjacent_interaction_MHz",
        alias = "adjacent_interaction_mhz",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub adjacent_interaction_mhz: Option<f64>,
}

fn default_omega0() -> f64 {
    PhysicalUnits::default().omega0_over_2pi_mhz
}

/// An explicit list of values or an inclusive evenly spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Linspace { start: f64, stop: f64, points: usize },
}

impl Grid {
    pub fn linspace(start: f64, stop: f64, points: usize) -> Self {
        Grid::Linspace { start, stop, points }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            Grid::Values(ref v) => v.clone(),
            Grid::Linspace { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..points).map(|i| start + (stop - start) * i as f64 / (points - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Population checkpoints over the whole protocol.
    pub checkpoints: usize,
    pub waveform: bool,
    pub waveform_points: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { checkpoints: 400, waveform: true, waveform_points: 400 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationConfig {
    pub v_grid: Grid,
    pub plateau_eps: f64,
    pub amplitude_rule: AmplitudeRule,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        Self {
            v_grid: Grid::linspace(0.2, 1.5, 20),
            plateau_eps: DEFAULT_PLATEAU_EPS,
            amplitude_rule: AmplitudeRule::Fixed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimescanConfig {
    pub times_us: Grid,
    pub baselines: Vec<Baseline>,
}

impl Default for TimescanConfig {
    fn default() -> Self {
        Self { times_us: Grid::linspace(0.3, 1.0, 8), baselines: vec![Baseline::Rap, Baseline::PiPulse] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub omega_scales: Grid,
    pub delta_scales: Grid,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self { omega_scales: Grid::linspace(0.9, 1.1, 11), delta_scales: Grid::linspace(0.9, 1.1, 11) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MontecarloConfig {
    /// Position spread in units of the adjacent spacing.
    pub sigmas: Grid,
    pub n_samples: usize,
    /// 1, 2 or 3; defaults to 1 for line layouts and 2 otherwise.
    pub dims: Option<PerturbDims>,
}

impl Default for MontecarloConfig {
    fn default() -> Self {
        Self {
            sigmas: Grid::Values(vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05]),
            n_samples: DEFAULT_MC_SAMPLES,
            dims: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub parameters: ParameterSet,
    /// Starting point; defaults to the protocol's own parameters.
    pub init: Option<Vec<f64>>,
    /// `[lo, hi]` per parameter; defaults to half and twice the start.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub options: OptimizeOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Taken from the subcommand when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub protocol: ProtocolConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_units: Option<PhysicalUnitsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub convention: FidelityConvention,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub saturation: SaturationConfig,
    #[serde(default)]
    pub timescan: TimescanConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    #[serde(default)]
    pub montecarlo: MontecarloConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
}

impl RunConfig {
    pub fn new(protocol: ProtocolName) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: None,
            protocol: ProtocolConfig::named(protocol),
            physical_units: None,
            seed: None,
            output_dir: None,
            integrator: IntegratorSettings::default(),
            convention: FidelityConvention::default(),
            simulate: SimulateConfig::default(),
            saturation: SaturationConfig::default(),
            timescan: TimescanConfig::default(),
            robustness: RobustnessConfig::default(),
            montecarlo: MontecarloConfig::default(),
            optimize: OptimizeConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fully resolved protocol parameters, validated.
    pub fn resolve_spec(&self) -> Result<ProtocolSpec, CliError> {
        let p = &self.protocol;
        let mut spec = ProtocolSpec::default_for(p.name);
        spec.omega_max = p.omega_max.unwrap_or(spec.omega_max);
        spec.delta_max = p.delta_max.unwrap_or(spec.delta_max);
        spec.v0 = p.v0.unwrap_or(spec.v0);
        spec.sweep_width = p.sweep_width.unwrap_or(spec.sweep_width);
        spec.tau_r_ratio = p.tau_r_ratio.unwrap_or(spec.tau_r_ratio);
        spec.tau_d_ratio = p.tau_d_ratio.unwrap_or(spec.tau_d_ratio);
        spec.preset = p.preset.unwrap_or(spec.preset);
        spec.ground_coupling = p.ground_coupling.unwrap_or(spec.ground_coupling);
        if let Some(u) = &self.physical_units {
            spec.units =
                PhysicalUnits { omega0_over_2pi_mhz: u.omega0_over_2pi_mhz, rydberg_lifetime_us: u.gamma_inverse_us };
            spec.units.validate().map_err(|e| CliError::Config(format!("physical_units: {e}")))?;
            if let Some(f) = u.adjacent_interaction_mhz {
                if p.v0.is_some() {
                    return Err(CliError::Config(
                        "physical_units.adjacent_interaction_MHz: conflicts with protocol.v0".into(),
                    ));
                }
                spec.v0 = spec
                    .units
                    .to_dimensionless(Quantity::Frequency, f * 1e6)
                    .map_err(|e| CliError::Config(format!("physical_units.adjacent_interaction_MHz: {e}")))?;
            }
        }
        spec.validate().map_err(|e| CliError::Config(format!("protocol: {e}")))?;
        self.integrator.validate().map_err(|e| CliError::Config(format!("integrator: {e}")))?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
