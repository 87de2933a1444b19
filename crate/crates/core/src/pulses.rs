//! Control waveforms: RAP sweeps, instantaneous ground-state flips and
//! square pulses, assembled into a [`PulseSchedule`].
//!
//! Each RAP sweep occupies a window of width `T_p` centred at `T_p / 2`:
//!
//! ```text
//! Omega(t) = Omega_max * (exp(-((t - T_p/2) / tau_R)^4) - a) / (1 - a)
//! Delta(t) = (-1)^(k+1) * Delta_max * sin(pi * (t - T_p/2) / tau_D)
//! a        = exp(-(T_p / (2 tau_R))^4)
//! ```
//!
//! With the default `tau_R = 0.35 T_p` and `tau_D = T_p`, consecutive sweeps
//! join into one continuous sinusoidal detuning.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::quantum::{kron, Level, Operator, ONE, ZERO};

pub const DEFAULT_TAU_R_RATIO: f64 = 0.35;
pub const DEFAULT_TAU_D_RATIO: f64 = 1.0;

/// Ground level coupled to `|r>` by the drive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    G0,
    #[default]
    G1,
}

impl Coupling {
    pub fn level(self) -> Level {
        match self {
            Coupling::G0 => Level::G0,
            Coupling::G1 => Level::G1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RapParams {
    pub omega_max: f64,
    pub delta_max: f64,
    pub sweep_width: f64,
    pub tau_r: f64,
    pub tau_d: f64,
    pub k_index: u32,
}

impl RapParams {
    pub fn new(omega_max: f64, delta_max: f64, sweep_width: f64, k_index: u32) -> Result<Self> {
        Self::with_ratios(omega_max, delta_max, sweep_width, DEFAULT_TAU_R_RATIO, DEFAULT_TAU_D_RATIO, k_index)
    }

    pub fn with_ratios(
        omega_max: f64,
        delta_max: f64,
        sweep_width: f64,
        tau_r_ratio: f64,
        tau_d_ratio: f64,
        k_index: u32,
    ) -> Result<Self> {
        let p = Self {
            omega_max,
            delta_max,
            sweep_width,
            tau_r: tau_r_ratio * sweep_width,
            tau_d: tau_d_ratio * sweep_width,
            k_index,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.omega_max) {
            return Err(invalid(format!("omega_max must be positive, got {}", self.omega_max)));
        }
        if !(self.delta_max.is_finite() && self.delta_max >= 0.0) {
            return Err(invalid(format!("delta_max must be >= 0, got {}", self.delta_max)));
        }
        if !positive(self.sweep_width) || !positive(self.tau_r) || !positive(self.tau_d) {
            return Err(invalid("sweep width and pulse widths must be positive"));
        }
        if self.k_index == 0 {
            return Err(invalid("k_index starts at 1"));
        }
        Ok(())
    }

    /// Envelope floor `a` that makes `Omega` vanish at both sweep edges.
    pub fn floor(&self) -> f64 {
        (-((self.sweep_width / 2.0) / self.tau_r).powi(4)).exp()
    }

    fn sign(&self) -> f64 {
        if self.k_index % 2 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// `(Omega, Delta)` at local time `t` without range checking.
    pub(crate) fn eval(&self, t: f64) -> (f64, f64) {
        let x = t - self.sweep_width / 2.0;
        let a = self.floor();
        let envelope = ((-(x / self.tau_r).powi(4)).exp() - a) / (1.0 - a);
        let omega = self.omega_max * envelope.max(0.0);
        let delta = self.sign() * self.delta_max * (PI * x / self.tau_d).sin();
        (omega, delta)
    }

    pub fn delta_start(&self) -> f64 {
        self.eval(0.0).1
    }

    pub fn delta_end(&self) -> f64 {
        self.eval(self.sweep_width).1
    }
}

/// `(Omega, Delta)` of a RAP sweep at local time `t` in `[0, T_p]`.
pub fn rap_waveform(t: f64, p: &RapParams) -> Result<(f64, f64)> {
    if !(0.0..=p.sweep_width).contains(&t) {
        return Err(Error::OutOfRange { time: t, end: p.sweep_width });
    }
    Ok(p.eval(t))
}

/// Drive parameters seen by the Hamiltonian at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drive {
    pub omega: f64,
    pub delta: f64,
    pub coupling: Coupling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Rap {
        params: RapParams,
        coupling: Coupling,
    },
    /// Instantaneous global `|0> <-> |1>` swap.
    GroundFlip,
    /// Resonant constant drive.
    Square {
        omega: f64,
        duration: f64,
        coupling: Coupling,
    },
    Idle {
        duration: f64,
    },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match self {
            Segment::Rap { params, .. } => params.sweep_width,
            Segment::GroundFlip => 0.0,
            Segment::Square { duration, .. } | Segment::Idle { duration } => *duration,
        }
    }

    pub fn is_instant(&self) -> bool {
        matches!(self, Segment::GroundFlip)
    }

    /// Drive at local time `t`; `None` for instantaneous segments.
    pub fn drive(&self, t: f64) -> Option<Drive> {
        match self {
            Segment::Rap { params, coupling } => {
                let (omega, delta) = params.eval(t);
                Some(Drive { omega, delta, coupling: *coupling })
            }
            Segment::Square { omega, coupling, .. } => Some(Drive { omega: *omega, delta: 0.0, coupling: *coupling }),
            Segment::Idle { .. } => Some(Drive { omega: 0.0, delta: 0.0, coupling: Coupling::G1 }),
            Segment::GroundFlip => None,
        }
    }

    /// Whether the drive is time independent over the whole segment.
    pub fn is_constant(&self) -> bool {
        !matches!(self, Segment::Rap { .. })
    }
}

/// Resonant square pulse implementing a collective pi rotation of `n` atoms
/// in the perfect-blockade limit: duration `pi / (sqrt(n) * omega)`.
pub fn square_pi_segment(n_collective: usize, omega: f64, coupling: Coupling) -> Result<Segment> {
    if n_collective == 0 {
        return Err(invalid("square pulse needs at least one driven atom"));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(invalid(format!("square pulse Rabi frequency must be positive, got {omega}")));
    }
    Ok(Segment::Square { omega, duration: PI / ((n_collective as f64).sqrt() * omega), coupling })
}

/// Relative tolerance on detuning continuity between consecutive sweeps.
const CONTINUITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    segments: Vec<Segment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformSample {
    pub t: f64,
    pub omega: f64,
    pub delta: f64,
}

impl PulseSchedule {
    /// Validates segment parameters and detuning continuity across RAP sweeps
    /// that are separated only by instantaneous events.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let mut last_rap: Option<&RapParams> = None;
        for seg in &segments {
            match seg {
                Segment::Rap { params, .. } => {
                    params.validate()?;
                    if let Some(prev) = last_rap {
                        let jump = (prev.delta_end() - params.delta_start()).abs();
                        let scale = prev.delta_max.max(params.delta_max);
                        if jump > CONTINUITY_TOL * scale {
                            return Err(Error::Schedule(format!(
                                "detuning jumps by {jump:.3e} between sweeps {} and {}",
                                prev.k_index, params.k_index
                            )));
                        }
                    }
                    last_rap = Some(params);
                }
                Segment::GroundFlip => {}
                Segment::Square { omega, duration, .. } => {
                    if !(omega.is_finite() && *omega >= 0.0 && duration.is_finite() && *duration >= 0.0) {
                        return Err(Error::Schedule("square pulse needs omega, duration >= 0".into()));
                    }
                    last_rap = None;
                }
                Segment::Idle { duration } => {
                    if !(duration.is_finite() && *duration >= 0.0) {
                        return Err(Error::Schedule("idle duration must be >= 0".into()));
                    }
                    last_rap = None;
                }
            }
        }
        Ok(Self { segments })
    }

    pub fn empty() -> Self {
        Self { segments: Vec::new() }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    /// Start time of every segment.
    pub fn segment_starts(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration();
                start
            })
            .collect()
    }

    /// Index of the timed segment containing `t` and the local time inside it.
    /// A boundary time belongs to the later segment, the final time to the
    /// last timed segment.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let total = self.total_duration();
        if !(0.0..=total).contains(&t) {
            return Err(Error::OutOfRange { time: t, end: total });
        }
        let mut start = 0.0;
        let mut last_timed = None;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.is_instant() {
                continue;
            }
            let end = start + seg.duration();
            if t < end {
                return Ok((i, t - start));
            }
            last_timed = Some((i, start));
            start = end;
        }
        last_timed.map(|(i, s)| (i, t - s)).ok_or(Error::OutOfRange { time: t, end: total })
    }

    pub fn drive_at(&self, t: f64) -> Result<Drive> {
        let (i, local) = self.locate(t)?;
        Ok(self.segments[i].drive(local).expect("located segment is timed"))
    }

    /// `n_points` evenly spaced samples over the whole schedule.
    pub fn sample(&self, n_points: usize) -> Vec<WaveformSample> {
        let total = self.total_duration();
        if n_points == 0 || total == 0.0 {
            return Vec::new();
        }
        let denom = (n_points.max(2) - 1) as f64;
        (0..n_points)
            .filter_map(|i| {
                let t = total * i as f64 / denom;
                self.drive_at(t.min(total)).ok().map(|d| WaveformSample { t, omega: d.omega, delta: d.delta })
            })
            .collect()
    }
}

/// Declarative schedule element; RAP sweeps receive consecutive `k` indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentDescriptor {
    Rap { omega_max: f64, delta_max: f64, sweep_width: f64, tau_r_ratio: f64, tau_d_ratio: f64, coupling: Coupling },
    GroundFlip,
    SquarePi { n_collective: usize, omega: f64, coupling: Coupling },
    Idle { duration: f64 },
}

impl SegmentDescriptor {
    pub fn rap(omega_max: f64, delta_max: f64, sweep_width: f64, coupling: Coupling) -> Self {
        SegmentDescriptor::Rap {
            omega_max,
            delta_max,
            sweep_width,
            tau_r_ratio: DEFAULT_TAU_R_RATIO,
            tau_d_ratio: DEFAULT_TAU_D_RATIO,
            coupling,
        }
    }
}

pub fn build_schedule(descriptors: &[SegmentDescriptor]) -> Result<PulseSchedule> {
    if descriptors.is_empty() {
        return Err(Error::Schedule("no segments given".into()));
    }
    let mut k = 0u32;
    let segments = descriptors
        .iter()
        .map(|d| {
            Ok(match *d {
                SegmentDescriptor::Rap { omega_max, delta_max, sweep_width, tau_r_ratio, tau_d_ratio, coupling } => {
                    k += 1;
                    let params =
                        RapParams::with_ratios(omega_max, delta_max, sweep_width, tau_r_ratio, tau_d_ratio, k)?;
                    Segment::Rap { params, coupling }
                }
                SegmentDescriptor::GroundFlip => Segment::GroundFlip,
                SegmentDescriptor::SquarePi { n_collective, omega, coupling } => {
                    square_pi_segment(n_collective, omega, coupling)?
                }
                SegmentDescriptor::Idle { duration } => Segment::Idle { duration },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PulseSchedule::new(segments)
}

/// Local unitary swapping `|0>` and `|1>`, identity on `|r>` (and `|d>`).
pub fn local_ground_flip(dim_local: usize) -> Result<Array2<num_complex::Complex64>> {
    if dim_local < 3 {
        return Err(invalid(format!("ground flip needs >= 3 local levels, got {dim_local}")));
    }
    let mut u = Array2::eye(dim_local);
    u[[0, 0]] = ZERO;
    u[[1, 1]] = ZERO;
    u[[0, 1]] = ONE;
    u[[1, 0]] = ONE;
    Ok(u)
}

/// Ground flip applied to the listed atoms only.
pub fn ground_flip_on(atoms: &[usize], n_atoms: usize, dim_local: usize) -> Result<Operator> {
    let flip = local_ground_flip(dim_local)?;
    if let Some(&bad) = atoms.iter().find(|&&a| a >= n_atoms) {
        return Err(invalid(format!("atom {bad} out of range for {n_atoms} atoms")));
    }
    let mut m = Array2::eye(1);
    for atom in 0..n_atoms {
        let factor = if atoms.contains(&atom) { flip.clone() } else { Array2::eye(dim_local) };
        m = kron(&m, &factor);
    }
    Operator::new(n_atoms, dim_local, m)
}

/// Global instantaneous pi pulse in the ground manifold.
pub fn pi_g_unitary(n_atoms: usize, dim_local: usize) -> Result<Operator> {
    let all: Vec<usize> = (0..n_atoms).collect();
    ground_flip_on(&all, n_atoms, dim_local)
}
