//! Time evolution under
//!
//! ```text
//! H(t) = Delta(t) sum_i |r><r|_i + Omega(t)/2 sum_i (|r><c|_i + h.c.) + sum_{i<j} V_ij |rr><rr|_ij
//! d rho / dt = -i [H, rho] + sum_k (L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho})
//! ```
//!
//! where `c` is the ground level coupled by the active segment. Two routes
//! are provided: an adaptive Dormand-Prince 5(4) integrator working directly
//! on the state vector or density matrix, and an independent oracle that
//! freezes the drive at slice midpoints and applies the exponential of the
//! vectorized Lindblad generator.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::InteractionMatrix;
use crate::integrator::{Dopri5, StepFailure};
use crate::pulses::{pi_g_unitary, Coupling, Drive, PulseSchedule, Segment};
use crate::quantum::{
    basis_digits, embed_single, hilbert_dim, local_transition, two_site_projector, Level, LevelScheme, Operator,
    QuantumState, StateData, ZERO,
};

/// Jump operators, each acting on exactly one atom.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladChannelSet {
    jumps: Vec<Operator>,
}

impl LindbladChannelSet {
    pub fn empty() -> Self {
        Self { jumps: Vec::new() }
    }

    /// `sqrt(rate) |to><from|` for every channel of `scheme` on every atom.
    /// Channels with zero rate are dropped.
    pub fn from_scheme(scheme: &LevelScheme, n_atoms: usize) -> Result<Self> {
        let d = scheme.dim();
        let mut jumps = Vec::new();
        for ch in scheme.channels().iter().filter(|c| c.rate > 0.0) {
            let local = local_transition(ch.to, ch.from, d)?.mapv(|a| a * ch.rate.sqrt());
            for atom in 0..n_atoms {
                jumps.push(embed_single(&local, atom, n_atoms, d)?);
            }
        }
        Ok(Self { jumps })
    }

    pub fn jumps(&self) -> &[Operator] {
        &self.jumps
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-11, max_step: 10.0, min_step: 1e-10 }
    }
}

impl IntegratorSettings {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0 && self.min_step > 0.0) {
            return Err(Error::InvalidArgument("integrator tolerances and steps must be > 0".into()));
        }
        Ok(())
    }
}

fn check_dimensions(state: &QuantumState, v: &InteractionMatrix, scheme: &LevelScheme) -> Result<()> {
    if v.n_atoms() != state.n_atoms() {
        return Err(Error::DimensionMismatch { expected: state.n_atoms(), found: v.n_atoms() });
    }
    if scheme.dim() != state.dim_local() {
        return Err(Error::DimensionMismatch { expected: state.dim_local(), found: scheme.dim() });
    }
    Ok(())
}

/// Dense `H` for a given drive, built from embedded single-atom operators.
pub fn hamiltonian_for_drive(drive: Drive, v: &InteractionMatrix, scheme: &LevelScheme) -> Result<Operator> {
    let n = v.n_atoms();
    let d = scheme.dim();
    let c = |x: f64| C64::new(x, 0.0);
    let ryd = local_transition(Level::Ryd, Level::Ryd, d)?.mapv(|a| a * c(drive.delta));
    let up = local_transition(Level::Ryd, drive.coupling.level(), d)?;
    let flip = (&up + &up.t()).mapv(|a| a * c(drive.omega / 2.0));
    let local = ryd + flip;
    let mut h = Operator::zeros(n, d);
    for atom in 0..n {
        h = h.add(&embed_single(&local, atom, n, d)?)?;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let vij = v.get(i, j);
            if vij != 0.0 {
                h = h.add(&two_site_projector(i, j, Level::Ryd, n, d)?.scale(c(vij)))?;
            }
        }
    }
    Ok(h)
}

/// `H(t)` at global schedule time `t`.
pub fn hamiltonian_at(
    t: f64,
    schedule: &PulseSchedule,
    v: &InteractionMatrix,
    scheme: &LevelScheme,
) -> Result<Operator> {
    hamiltonian_for_drive(schedule.drive_at(t)?, v, scheme)
}

type SparseEntries = Vec<(usize, usize, C64)>;

fn nonzeros(m: &Array2<C64>) -> SparseEntries {
    m.indexed_iter().filter(|(_, v)| **v != ZERO).map(|((i, j), v)| (i, j, *v)).collect()
}

/// Structured form of the generator used by the integrator.
struct Generator {
    dim: usize,
    ryd_count: Vec<f64>,
    interaction: Vec<f64>,
    /// `(ground, excited)` index pairs connected by the drive, per coupling.
    drive_g0: Vec<(usize, usize)>,
    drive_g1: Vec<(usize, usize)>,
    decay_diag: Vec<f64>,
    decay_offdiag: SparseEntries,
    jumps: Vec<SparseEntries>,
    scratch: Vec<C64>,
}

impl Generator {
    fn new(n: usize, v: &InteractionMatrix, scheme: &LevelScheme, channels: &LindbladChannelSet) -> Self {
        let d = scheme.dim();
        let dim = hilbert_dim(n, d);
        let r = Level::Ryd.index();
        let mut ryd_count = vec![0.0; dim];
        let mut interaction = vec![0.0; dim];
        let mut drive_g0 = Vec::new();
        let mut drive_g1 = Vec::new();
        for idx in 0..dim {
            let digits = basis_digits(idx, n, d);
            for (atom, &digit) in digits.iter().enumerate() {
                let stride = d.pow((n - atom - 1) as u32);
                if digit == r {
                    ryd_count[idx] += 1.0;
                    for (other, _) in digits.iter().enumerate().skip(atom + 1).filter(|&(_, &x)| x == r) {
                        interaction[idx] += v.get(atom, other);
                    }
                } else if digit == Level::G0.index() {
                    drive_g0.push((idx, idx + (r - digit) * stride));
                } else if digit == Level::G1.index() {
                    drive_g1.push((idx, idx + (r - digit) * stride));
                }
            }
        }

        let jumps: Vec<SparseEntries> = channels.jumps().iter().map(|l| nonzeros(l.matrix())).collect();
        // K = sum_k L_k^dag L_k
        let mut k = Array2::<C64>::zeros((dim, dim));
        for jump in &jumps {
            for &(a, p, x) in jump {
                for &(b, q, y) in jump {
                    if a == b {
                        k[[p, q]] += x.conj() * y;
                    }
                }
            }
        }
        let decay_diag = (0..dim).map(|i| k[[i, i]].re).collect();
        let decay_offdiag = nonzeros(&k).into_iter().filter(|(i, j, _)| i != j).collect();

        Self {
            dim,
            ryd_count,
            interaction,
            drive_g0,
            drive_g1,
            decay_diag,
            decay_offdiag,
            jumps,
            scratch: vec![ZERO; dim * dim],
        }
    }

    fn pairs(&self, coupling: Coupling) -> &[(usize, usize)] {
        match coupling {
            Coupling::G0 => &self.drive_g0,
            Coupling::G1 => &self.drive_g1,
        }
    }

    /// `d psi / dt = -i H psi`.
    fn pure_rhs(&self, drive: Drive, psi: &[C64], out: &mut [C64]) {
        for i in 0..self.dim {
            let e = drive.delta * self.ryd_count[i] + self.interaction[i];
            out[i] = C64::new(0.0, -e) * psi[i];
        }
        let w = C64::new(0.0, -0.5 * drive.omega);
        if drive.omega != 0.0 {
            for &(g, r) in self.pairs(drive.coupling) {
                out[g] += w * psi[r];
                out[r] += w * psi[g];
            }
        }
    }

    /// With `M = -i H - K/2`, the master equation reads
    /// `d rho / dt = M rho + (M rho)^dag + sum_k L_k rho L_k^dag`.
    fn density_rhs(&mut self, drive: Drive, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let a = &mut self.scratch;
        for i in 0..d {
            let e = drive.delta * self.ryd_count[i] + self.interaction[i];
            let coeff = C64::new(-0.5 * self.decay_diag[i], -e);
            let (row_a, row_rho) = (&mut a[i * d..(i + 1) * d], &rho[i * d..(i + 1) * d]);
            for (x, y) in row_a.iter_mut().zip(row_rho) {
                *x = coeff * y;
            }
        }
        if drive.omega != 0.0 {
            let w = C64::new(0.0, -0.5 * drive.omega);
            let pairs = match drive.coupling {
                Coupling::G0 => &self.drive_g0,
                Coupling::G1 => &self.drive_g1,
            };
            for &(g, r) in pairs {
                for j in 0..d {
                    a[g * d + j] += w * rho[r * d + j];
                    a[r * d + j] += w * rho[g * d + j];
                }
            }
        }
        for &(p, q, v) in &self.decay_offdiag {
            let w = -0.5 * v;
            for j in 0..d {
                a[p * d + j] += w * rho[q * d + j];
            }
        }
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = a[i * d + j] + a[j * d + i].conj();
            }
        }
        for jump in &self.jumps {
            for &(ra, ca, x) in jump {
                for &(rb, cb, y) in jump {
                    out[ra * d + rb] += x * rho[ca * d + cb] * y.conj();
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Repr {
    Pure,
    Density,
}

fn flatten(state: &QuantumState) -> (Repr, Vec<C64>) {
    match state.data() {
        StateData::Pure(psi) => (Repr::Pure, psi.to_vec()),
        StateData::Density(rho) => (Repr::Density, rho.iter().copied().collect()),
    }
}

fn unflatten(repr: Repr, n: usize, d: usize, y: &[C64]) -> QuantumState {
    let dim = hilbert_dim(n, d);
    match repr {
        Repr::Pure => QuantumState::pure_unchecked(n, d, Array1::from(y.to_vec())),
        Repr::Density => QuantumState::density_unchecked(
            n,
            d,
            Array2::from_shape_vec((dim, dim), y.to_vec()).expect("flat density has dim^2 entries"),
        ),
    }
}

fn apply_unitary(repr: Repr, u: &Operator, y: &mut Vec<C64>) {
    let dim = u.dim();
    let m = u.matrix();
    match repr {
        Repr::Pure => {
            let psi = Array1::from(std::mem::take(y));
            *y = m.dot(&psi).to_vec();
        }
        Repr::Density => {
            let rho = Array2::from_shape_vec((dim, dim), std::mem::take(y)).expect("square density");
            let u_dag = m.t().mapv(|a| a.conj());
            *y = m.dot(&rho).dot(&u_dag).iter().copied().collect();
        }
    }
}

/// Integrates `initial` through `schedule`, calling `observer` at each of the
/// ascending `sample_times` (global time, state after any gates at that time).
#[allow(clippy::too_many_arguments)]
pub fn evolve_observed(
    initial: &QuantumState,
    schedule: &PulseSchedule,
    v: &InteractionMatrix,
    scheme: &LevelScheme,
    channels: &LindbladChannelSet,
    settings: &IntegratorSettings,
    sample_times: &[f64],
    observer: &mut dyn FnMut(f64, &QuantumState),
) -> Result<QuantumState> {
    settings.validate()?;
    check_dimensions(initial, v, scheme)?;
    let n = initial.n_atoms();
    let d = initial.dim_local();
    let (repr, mut y) = flatten(initial);
    if repr == Repr::Pure && !channels.is_empty() {
        return Err(Error::Unsupported("dissipative evolution needs a density-matrix state".into()));
    }
    let mut generator = Generator::new(n, v, scheme, channels);
    let stepper = Dopri5::new(*settings);
    let flip = if schedule.segments().iter().any(Segment::is_instant) { Some(pi_g_unitary(n, d)?) } else { None };

    let mut samples = sample_times.iter().copied().peekable();
    let total = schedule.total_duration();
    let mut start = 0.0;
    let mut h = None;
    let n_segments = schedule.segments().len();
    for (index, seg) in schedule.segments().iter().enumerate() {
        if seg.is_instant() {
            apply_unitary(repr, flip.as_ref().expect("flip built when instant segments exist"), &mut y);
            continue;
        }
        let duration = seg.duration();
        let end = start + duration;
        let is_last_timed =
            schedule.segments()[index + 1..n_segments].iter().all(|s| s.is_instant() || s.duration() == 0.0);
        let mut t_local = 0.0;
        loop {
            // next stop inside this segment: a sample time or the segment end
            let next_sample = samples.peek().copied().filter(|&ts| ts < end || (is_last_timed && ts <= end));
            let stop = match next_sample {
                Some(ts) => (ts - start).max(t_local),
                None => duration,
            };
            if stop > t_local {
                let rhs = |t: f64, yy: &[C64], out: &mut [C64]| {
                    let drive = seg.drive(t).expect("timed segment");
                    match repr {
                        Repr::Pure => generator.pure_rhs(drive, yy, out),
                        Repr::Density => generator.density_rhs(drive, yy, out),
                    }
                };
                h = Some(stepper.integrate(rhs, t_local, stop, &mut y, h).map_err(
                    |StepFailure { time, reason }| Error::Integration { segment: index, time: start + time, reason },
                )?);
                t_local = stop;
            }
            match next_sample {
                Some(ts) => {
                    samples.next();
                    observer(ts, &unflatten(repr, n, d, &y));
                }
                None => break,
            }
        }
        start = end;
    }
    // samples at the very end of a schedule that ends with instant events
    for ts in samples {
        if ts <= total + 1e-12 * total.max(1.0) {
            observer(ts, &unflatten(repr, n, d, &y));
        }
    }
    Ok(unflatten(repr, n, d, &y))
}

/// Closed-system propagation of a pure state. Channels of `scheme` are ignored.
pub fn evolve_pure(
    psi0: &QuantumState,
    schedule: &PulseSchedule,
    v: &InteractionMatrix,
    scheme: &LevelScheme,
    settings: &IntegratorSettings,
) -> Result<QuantumState> {
    if !psi0.is_pure() {
        return Err(Error::InvalidArgument("evolve_pure needs a pure state".into()));
    }
    psi0.check()?;
    evolve_observed(psi0, schedule, v, scheme, &LindbladChannelSet::empty(), settings, &[], &mut |_, _| {})
}

/// Master-equation propagation. Pure inputs are converted to density matrices.
pub fn evolve_density(
    rho0: &QuantumState,
    schedule: &PulseSchedule,
    v: &InteractionMatrix,
    scheme: &LevelScheme,
    channels: &LindbladChannelSet,
    settings: &IntegratorSettings,
) -> Result<QuantumState> {
    let rho0 = rho0.to_density();
    rho0.check()?;
    evolve_observed(&rho0, schedule, v, scheme, channels, settings, &[], &mut |_, _| {})
}

/// Basis-state populations at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub populations: Vec<f64>,
}

/// `n_points` evenly spaced sample times over `[0, total]`.
pub fn uniform_sample_times(total: f64, n_points: usize) -> Vec<f64> {
    match n_points {
        0 => Vec::new(),
        1 => vec![total],
        _ => (0..n_points).map(|i| total * i as f64 / (n_points - 1) as f64).collect(),
    }
}

/// Evolution that also records populations at `sample_times`. Uses a pure
/// state when `channels` is empty and the input is pure.
pub fn evolve_recorded(
    initial: &QuantumState,
    schedule: &PulseSchedule,
    v: &InteractionMatrix,
    scheme: &LevelScheme,
    channels: &LindbladChannelSet,
    settings: &IntegratorSettings,
    sample_times: &[f64],
) -> Result<(QuantumState, Vec<Checkpoint>)> {
    let start = if channels.is_empty() { initial.clone() } else { initial.to_density() };
    let mut checkpoints = Vec::with_capacity(sample_times.len());
    let final_state = evolve_observed(&start, schedule, v, scheme, channels, settings, sample_times, &mut |t, s| {
        checkpoints.push(Checkpoint { t, populations: s.populations() })
    })?;
    Ok((final_state, checkpoints))
}

/// Compressed sparse row matrix used for the vectorized generator.
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("merged entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { row_ptr, cols, vals }
    }

    fn mul(&self, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    fn inf_norm(&self) -> f64 {
        (0..self.row_ptr.len() - 1)
            .map(|r| self.vals[self.row_ptr[r]..self.row_ptr[r + 1]].iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Row-major vectorization `vec(rho)[i * D + j] = rho_ij` of
/// `-i [H, .] + sum_k D[L_k]`:
/// `-i (H (x) 1 - 1 (x) H^T) + sum_k (L_k (x) conj(L_k) - 1/2 K (x) 1 - 1/2 1 (x) K^T)`.
fn vectorized_generator(h: &Operator, jumps: &[Operator]) -> Csr {
    let dim = h.dim();
    let h_nz = nonzeros(h.matrix());
    let mut k = Array2::<C64>::zeros((dim, dim));
    for l in jumps {
        k += &l.dagger().dot(l).expect("jump operators share the space").into_matrix();
    }
    let k_nz = nonzeros(&k);
    let minus_i = C64::new(0.0, -1.0);
    let mut triplets = Vec::new();
    for &(a, b, v) in &h_nz {
        for j in 0..dim {
            // H rho: row (a, j) <- col (b, j)
            triplets.push((a * dim + j, b * dim + j, minus_i * v));
            // rho H: row (j, b) <- col (j, a)
            triplets.push((j * dim + b, j * dim + a, -minus_i * v));
        }
    }
    for &(a, b, v) in &k_nz {
        for j in 0..dim {
            triplets.push((a * dim + j, b * dim + j, -0.5 * v));
            triplets.push((j * dim + b, j * dim + a, -0.5 * v));
        }
    }
    for l in jumps {
        let nz = nonzeros(l.matrix());
        for &(i, kk, x) in &nz {
            for &(j, ll, y) in &nz {
                triplets.push((i * dim + j, kk * dim + ll, x * y.conj()));
            }
        }
    }
    Csr::from_triplets(dim * dim, triplets)
}

/// `x <- exp(A dt) x` by a Taylor series on sub-steps with `||A h|| <= 1`,
/// truncated once terms drop below double precision.
fn expm_action(a: &Csr, dt: f64, x: &mut [C64]) {
    let norm = a.inf_norm() * dt.abs();
    let substeps = norm.ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let mut term = vec![ZERO; x.len()];
    let mut next = vec![ZERO; x.len()];
    let sup = |v: &[C64]| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for _ in 0..substeps {
        term.copy_from_slice(x);
        for k in 1..=80 {
            a.mul(&term, &mut next);
            let f = h / k as f64;
            for (t, n) in term.iter_mut().zip(&next) {
                *t = n * f;
            }
            for (s, t) in x.iter_mut().zip(&term) {
                *s += t;
            }
            if sup(&term) <= 1e-17 * sup(x).max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
}

/// Piecewise-constant reference propagator: every timed segment is cut into
/// `n_steps` slices with the drive frozen at each slice midpoint, and the
/// exact exponential of the vectorized generator is applied per slice.
pub fn propagate_oracle(
    rho0: &QuantumState,
    schedule: &PulseSchedule,
    v: &InteractionMatrix,
    scheme: &LevelScheme,
    channels: &LindbladChannelSet,
    n_steps: usize,
) -> Result<QuantumState> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("oracle needs at least one slice".into()));
    }
    check_dimensions(rho0, v, scheme)?;
    let n = rho0.n_atoms();
    let d = rho0.dim_local();
    let dim = hilbert_dim(n, d);
    let rho = rho0.density_matrix();
    let mut y: Vec<C64> = rho.iter().copied().collect();
    let flip = pi_g_unitary(n, d)?;
    for seg in schedule.segments() {
        if seg.is_instant() {
            apply_unitary(Repr::Density, &flip, &mut y);
            continue;
        }
        let duration = seg.duration();
        if duration == 0.0 {
            continue;
        }
        let dt = duration / n_steps as f64;
        for s in 0..n_steps {
            let drive = seg.drive((s as f64 + 0.5) * dt).expect("timed segment");
            let h = hamiltonian_for_drive(drive, v, scheme)?;
            let gen = vectorized_generator(&h, channels.jumps());
            expm_action(&gen, dt, &mut y);
        }
    }
    let rho = Array2::from_shape_vec((dim, dim), y).expect("square density");
    Ok(QuantumState::density_unchecked(n, d, rho))
}

/// Largest elementwise difference between the density matrices of two states.
pub fn max_density_deviation(a: &QuantumState, b: &QuantumState) -> f64 {
    a.density_matrix().iter().zip(b.density_matrix().iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
