//! Tensor-product Hilbert space over `n` atoms with 3 or 4 local levels.
//!
//! Basis ordering: atom 0 is the slowest-varying digit and local levels are
//! ordered `g0 = 0, g1 = 1, r = 2, d = 3`. For two three-level atoms the
//! state `|r1>` therefore sits at index `2 * 3 + 1 = 7`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on the norm of a pure state and the trace of a density matrix.
pub const NORM_TOL: f64 = 1e-9;
/// Maximum elementwise deviation `|rho - rho^dagger|` accepted for a density matrix.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Lowest eigenvalue accepted for a density matrix.
pub const EIGENVALUE_FLOOR: f64 = -1e-8;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    G0,
    G1,
    Ryd,
    Dump,
}

impl Level {
    pub const fn index(self) -> usize {
        match self {
            Level::G0 => 0,
            Level::G1 => 1,
            Level::Ryd => 2,
            Level::Dump => 3,
        }
    }

    pub const fn symbol(self) -> char {
        match self {
            Level::G0 => '0',
            Level::G1 => '1',
            Level::Ryd => 'r',
            Level::Dump => 'd',
        }
    }

    pub fn from_symbol(c: char) -> Option<Level> {
        match c {
            '0' => Some(Level::G0),
            '1' => Some(Level::G1),
            'r' => Some(Level::Ryd),
            'd' => Some(Level::Dump),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> Option<Level> {
        [Level::G0, Level::G1, Level::Ryd, Level::Dump].get(i).copied()
    }
}

/// A single-atom Lindblad channel `sqrt(rate) |to><from|`.
///
/// `to == from` describes pure dephasing of `from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayChannel {
    pub from: Level,
    pub to: Level,
    pub rate: f64,
}

impl DecayChannel {
    pub fn is_dephasing(&self) -> bool {
        self.from == self.to
    }
}

/// Local level structure shared by every atom, plus its decay channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    levels: Vec<Level>,
    channels: Vec<DecayChannel>,
}

impl LevelScheme {
    pub fn new(levels: Vec<Level>, channels: Vec<DecayChannel>) -> Result<Self> {
        let canonical = [Level::G0, Level::G1, Level::Ryd, Level::Dump];
        if !(levels.len() == 3 || levels.len() == 4) || levels[..] != canonical[..levels.len()] {
            return Err(invalid(format!("levels must be [g0, g1, ryd] or [g0, g1, ryd, dump], got {levels:?}")));
        }
        let has_dump = levels.contains(&Level::Dump);
        for ch in &channels {
            if !(ch.rate.is_finite() && ch.rate >= 0.0) {
                return Err(invalid(format!("decay rate must be finite and >= 0, got {}", ch.rate)));
            }
            if !levels.contains(&ch.from) || !levels.contains(&ch.to) {
                return Err(invalid(format!("channel {ch:?} references a missing level")));
            }
        }
        let targets_dump = channels.iter().any(|c| c.to == Level::Dump);
        if has_dump != targets_dump {
            return Err(invalid("dump level must be present iff a channel targets it"));
        }
        Ok(Self { levels, channels })
    }

    /// Closed three-level atom `{|0>, |1>, |r>}`.
    pub fn three_level() -> Self {
        Self { levels: vec![Level::G0, Level::G1, Level::Ryd], channels: Vec::new() }
    }

    /// Cesium-style Rydberg decay: `gamma/16` into each ground level and
    /// `7 gamma / 8` pure dephasing of `|r>`.
    pub fn cesium(gamma_r: f64) -> Result<Self> {
        Self::new(
            vec![Level::G0, Level::G1, Level::Ryd],
            vec![
                DecayChannel { from: Level::Ryd, to: Level::G0, rate: gamma_r / 16.0 },
                DecayChannel { from: Level::Ryd, to: Level::G1, rate: gamma_r / 16.0 },
                DecayChannel { from: Level::Ryd, to: Level::Ryd, rate: 7.0 * gamma_r / 8.0 },
            ],
        )
    }

    /// All Rydberg decay collected in a fictitious dump level `|d>`.
    pub fn with_dump(gamma_r: f64) -> Result<Self> {
        Self::new(
            vec![Level::G0, Level::G1, Level::Ryd, Level::Dump],
            vec![DecayChannel { from: Level::Ryd, to: Level::Dump, rate: gamma_r }],
        )
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn channels(&self) -> &[DecayChannel] {
        &self.channels
    }

    pub fn has_dump(&self) -> bool {
        self.levels.contains(&Level::Dump)
    }

    /// Total decay rate out of (or dephasing of) the Rydberg level.
    pub fn gamma_r(&self) -> f64 {
        self.channels.iter().filter(|c| c.from == Level::Ryd).map(|c| c.rate).sum()
    }

    /// Same levels and channels with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let channels = self.channels.iter().map(|c| DecayChannel { rate: c.rate * factor, ..*c }).collect();
        Self::new(self.levels.clone(), channels)
    }

    pub fn is_dissipative(&self) -> bool {
        self.channels.iter().any(|c| c.rate > 0.0)
    }
}

pub fn hilbert_dim(n_atoms: usize, dim_local: usize) -> usize {
    dim_local.pow(n_atoms as u32)
}

pub fn basis_index(digits: &[usize], dim_local: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * dim_local + d)
}

pub fn basis_digits(mut index: usize, n_atoms: usize, dim_local: usize) -> Vec<usize> {
    let mut digits = vec![0; n_atoms];
    for slot in digits.iter_mut().rev() {
        *slot = index % dim_local;
        index /= dim_local;
    }
    digits
}

/// Label such as `"01r"` for a basis index.
pub fn basis_label(index: usize, n_atoms: usize, dim_local: usize) -> String {
    basis_digits(index, n_atoms, dim_local)
        .into_iter()
        .map(|d| Level::from_index(d).map_or('?', Level::symbol))
        .collect()
}

pub fn parse_basis_label(label: &str, dim_local: usize) -> Result<Vec<usize>> {
    if label.is_empty() {
        return Err(invalid("empty basis label"));
    }
    label
        .chars()
        .map(|c| {
            let level =
                Level::from_symbol(c).ok_or_else(|| invalid(format!("unknown level symbol `{c}` in `{label}`")))?;
            if level.index() >= dim_local {
                return Err(invalid(format!("level `{c}` not available with {dim_local} local levels")));
            }
            Ok(level.index())
        })
        .collect()
}

/// Number of atoms in `|r>` for each basis index.
pub fn rydberg_counts(n_atoms: usize, dim_local: usize) -> Vec<usize> {
    (0..hilbert_dim(n_atoms, dim_local))
        .map(|i| basis_digits(i, n_atoms, dim_local).into_iter().filter(|&d| d == Level::Ryd.index()).count())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateData {
    Pure(Array1<C64>),
    Density(Array2<C64>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDiagnostics {
    /// `| ||psi|| - 1 |` for pure states, `|tr rho - 1|` for density matrices.
    pub normalization_error: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

impl StateDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.normalization_error <= NORM_TOL
            && self.hermiticity <= HERMITICITY_TOL
            && self.min_eigenvalue >= EIGENVALUE_FLOOR
    }
}

/// Pure state vector or density matrix over `n_atoms` atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    n_atoms: usize,
    dim_local: usize,
    data: StateData,
}

impl QuantumState {
    pub fn pure(n_atoms: usize, dim_local: usize, amplitudes: Array1<C64>) -> Result<Self> {
        let dim = hilbert_dim(n_atoms, dim_local);
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: amplitudes.len() });
        }
        let state = Self { n_atoms, dim_local, data: StateData::Pure(amplitudes) };
        let diag = state.diagnostics();
        if diag.normalization_error > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "state vector norm deviates from 1 by {:.3e}",
                diag.normalization_error
            )));
        }
        Ok(state)
    }

    pub fn density(n_atoms: usize, dim_local: usize, rho: Array2<C64>) -> Result<Self> {
        let dim = hilbert_dim(n_atoms, dim_local);
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: rho.nrows() });
        }
        let state = Self { n_atoms, dim_local, data: StateData::Density(rho) };
        state.check()?;
        Ok(state)
    }

    /// Wraps a density matrix without validation; used for integrator output
    /// that is checked separately.
    pub(crate) fn density_unchecked(n_atoms: usize, dim_local: usize, rho: Array2<C64>) -> Self {
        Self { n_atoms, dim_local, data: StateData::Density(rho) }
    }

    pub(crate) fn pure_unchecked(n_atoms: usize, dim_local: usize, psi: Array1<C64>) -> Self {
        Self { n_atoms, dim_local, data: StateData::Pure(psi) }
    }

    /// Computational basis product state, e.g. `"0r1"`.
    pub fn basis(label: &str, dim_local: usize) -> Result<Self> {
        let digits = parse_basis_label(label, dim_local)?;
        let n = digits.len();
        let mut psi = Array1::zeros(hilbert_dim(n, dim_local));
        psi[basis_index(&digits, dim_local)] = ONE;
        Ok(Self::pure_unchecked(n, dim_local, psi))
    }

    /// Normalized superposition of basis states with the given weights.
    pub fn superposition(terms: &[(&str, C64)], dim_local: usize) -> Result<Self> {
        let first = terms.first().ok_or_else(|| invalid("empty superposition"))?;
        let n = first.0.len();
        let mut psi = Array1::<C64>::zeros(hilbert_dim(n, dim_local));
        for (label, amp) in terms {
            let digits = parse_basis_label(label, dim_local)?;
            if digits.len() != n {
                return Err(invalid(format!("label `{label}` does not have {n} atoms")));
            }
            psi[basis_index(&digits, dim_local)] += amp;
        }
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(invalid("superposition has zero norm"));
        }
        psi.mapv_inplace(|a| a / norm);
        Ok(Self::pure_unchecked(n, dim_local, psi))
    }

    /// Equal-weight superposition of basis states.
    pub fn uniform_superposition(labels: &[&str], dim_local: usize) -> Result<Self> {
        let terms: Vec<_> = labels.iter().map(|l| (*l, ONE)).collect();
        Self::superposition(&terms, dim_local)
    }

    pub fn maximally_mixed(n_atoms: usize, dim_local: usize) -> Self {
        let dim = hilbert_dim(n_atoms, dim_local);
        let rho = Array2::from_diag(&Array1::from_elem(dim, C64::new(1.0 / dim as f64, 0.0)));
        Self::density_unchecked(n_atoms, dim_local, rho)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim_local(&self) -> usize {
        self.dim_local
    }

    pub fn hilbert_dim(&self) -> usize {
        hilbert_dim(self.n_atoms, self.dim_local)
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn amplitudes(&self) -> Option<&Array1<C64>> {
        match &self.data {
            StateData::Pure(psi) => Some(psi),
            StateData::Density(_) => None,
        }
    }

    pub fn density_matrix(&self) -> Array2<C64> {
        match &self.data {
            StateData::Pure(psi) => {
                let dim = psi.len();
                Array2::from_shape_fn((dim, dim), |(i, j)| psi[i] * psi[j].conj())
            }
            StateData::Density(rho) => rho.clone(),
        }
    }

    pub fn to_density(&self) -> QuantumState {
        Self::density_unchecked(self.n_atoms, self.dim_local, self.density_matrix())
    }

    pub fn populations(&self) -> Vec<f64> {
        match &self.data {
            StateData::Pure(psi) => psi.iter().map(|a| a.norm_sqr()).collect(),
            StateData::Density(rho) => rho.diag().iter().map(|a| a.re).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        match &self.data {
            StateData::Pure(psi) => C64::new(psi.iter().map(|a| a.norm_sqr()).sum(), 0.0),
            StateData::Density(rho) => rho.diag().sum(),
        }
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        match &self.data {
            StateData::Pure(psi) => psi.iter().map(|a| a.norm_sqr()).sum::<f64>().powi(2),
            // tr(rho^2) = sum_ij rho_ij rho_ji = sum_ij |rho_ij|^2 for Hermitian rho
            StateData::Density(rho) => rho.iter().map(|a| a.norm_sqr()).sum(),
        }
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        match &self.data {
            StateData::Pure(psi) => StateDiagnostics {
                normalization_error: (psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs(),
                hermiticity: 0.0,
                min_eigenvalue: 0.0,
            },
            StateData::Density(rho) => StateDiagnostics {
                normalization_error: (rho.diag().sum() - ONE).norm(),
                hermiticity: hermiticity_deviation(rho),
                min_eigenvalue: min_eigenvalue(rho),
            },
        }
    }

    /// Validates the state invariants and returns the measured diagnostics.
    pub fn check(&self) -> Result<StateDiagnostics> {
        let diag = self.diagnostics();
        if diag.is_valid() {
            Ok(diag)
        } else {
            Err(Error::InvalidState(format!(
                "normalization error {:.3e}, hermiticity {:.3e}, min eigenvalue {:.3e}",
                diag.normalization_error, diag.hermiticity, diag.min_eigenvalue
            )))
        }
    }

    pub(crate) fn ensure_compatible(&self, n_atoms: usize, dim_local: usize) -> Result<()> {
        if self.n_atoms != n_atoms || self.dim_local != dim_local {
            return Err(Error::DimensionMismatch {
                expected: hilbert_dim(n_atoms, dim_local),
                found: self.hilbert_dim(),
            });
        }
        Ok(())
    }
}

pub fn hermiticity_deviation(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    dev
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]].conj()));
    dm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Dense operator on the `n_atoms`-atom tensor space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    n_atoms: usize,
    dim_local: usize,
    matrix: Array2<C64>,
}

impl Operator {
    pub fn new(n_atoms: usize, dim_local: usize, matrix: Array2<C64>) -> Result<Self> {
        let dim = hilbert_dim(n_atoms, dim_local);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        Ok(Self { n_atoms, dim_local, matrix })
    }

    pub fn identity(n_atoms: usize, dim_local: usize) -> Self {
        Self { n_atoms, dim_local, matrix: Array2::eye(hilbert_dim(n_atoms, dim_local)) }
    }

    pub fn zeros(n_atoms: usize, dim_local: usize) -> Self {
        let dim = hilbert_dim(n_atoms, dim_local);
        Self { n_atoms, dim_local, matrix: Array2::zeros((dim, dim)) }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim_local(&self) -> usize {
        self.dim_local
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn dagger(&self) -> Operator {
        Self { matrix: self.matrix.t().mapv(|a| a.conj()), ..*self }
    }

    fn same_space(&self, other: &Operator) -> Result<()> {
        if self.n_atoms != other.n_atoms || self.dim_local != other.dim_local {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Operator) -> Result<Operator> {
        self.same_space(other)?;
        Ok(Self { matrix: self.matrix.dot(&other.matrix), ..*self })
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.same_space(other)?;
        Ok(Self { matrix: &self.matrix + &other.matrix, ..*self })
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Self { matrix: self.matrix.mapv(|a| a * factor), ..*self }
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.same_space(other)?;
        let ab = self.matrix.dot(&other.matrix);
        let ba = other.matrix.dot(&self.matrix);
        Ok(Self { matrix: ab - ba, ..*self })
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.matrix)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.matrix.iter().zip(other.matrix.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `U|psi>` for pure states, `U rho U^dagger` for density matrices.
    pub fn apply(&self, state: &QuantumState) -> Result<QuantumState> {
        state.ensure_compatible(self.n_atoms, self.dim_local)?;
        let data = match &state.data {
            StateData::Pure(psi) => StateData::Pure(self.matrix.dot(psi)),
            StateData::Density(rho) => {
                let u_dag = self.matrix.t().mapv(|a| a.conj());
                StateData::Density(self.matrix.dot(rho).dot(&u_dag))
            }
        };
        Ok(QuantumState { data, ..*state })
    }
}

/// Local operator `|to><from|` as a `dim_local x dim_local` matrix.
pub fn local_transition(to: Level, from: Level, dim_local: usize) -> Result<Array2<C64>> {
    if to.index() >= dim_local || from.index() >= dim_local {
        return Err(invalid(format!("levels {to:?}/{from:?} exceed local dimension {dim_local}")));
    }
    let mut m = Array2::zeros((dim_local, dim_local));
    m[[to.index(), from.index()]] = ONE;
    Ok(m)
}

/// `1 x ... x local_op x ... x 1` with `local_op` acting on `atom`.
pub fn embed_single(local_op: &Array2<C64>, atom: usize, n_atoms: usize, dim_local: usize) -> Result<Operator> {
    if local_op.nrows() != dim_local || local_op.ncols() != dim_local {
        return Err(Error::DimensionMismatch { expected: dim_local, found: local_op.nrows() });
    }
    if atom >= n_atoms {
        return Err(invalid(format!("atom index {atom} out of range for {n_atoms} atoms")));
    }
    let dim = hilbert_dim(n_atoms, dim_local);
    let stride = dim_local.pow((n_atoms - atom - 1) as u32);
    let mut matrix = Array2::zeros((dim, dim));
    for row in 0..dim {
        let digit = (row / stride) % dim_local;
        let base = row - digit * stride;
        for b in 0..dim_local {
            let v = local_op[[digit, b]];
            if v != ZERO {
                matrix[[row, base + b * stride]] = v;
            }
        }
    }
    Ok(Operator { n_atoms, dim_local, matrix })
}

/// Projector onto states where atoms `i` and `j` both occupy `level`.
pub fn two_site_projector(
    atom_i: usize,
    atom_j: usize,
    level: Level,
    n_atoms: usize,
    dim_local: usize,
) -> Result<Operator> {
    if atom_i == atom_j {
        return Err(invalid("two-site projector needs two distinct atoms"));
    }
    if atom_i >= n_atoms || atom_j >= n_atoms {
        return Err(invalid(format!("atom index out of range for {n_atoms} atoms")));
    }
    if level.index() >= dim_local {
        return Err(invalid(format!("level {level:?} exceeds local dimension {dim_local}")));
    }
    let dim = hilbert_dim(n_atoms, dim_local);
    let mut matrix = Array2::zeros((dim, dim));
    for idx in 0..dim {
        let digits = basis_digits(idx, n_atoms, dim_local);
        if digits[atom_i] == level.index() && digits[atom_j] == level.index() {
            matrix[[idx, idx]] = ONE;
        }
    }
    Ok(Operator { n_atoms, dim_local, matrix })
}

/// `<psi|O|psi>` or `tr(rho O)`.
pub fn expectation(state: &QuantumState, op: &Operator) -> Result<C64> {
    state.ensure_compatible(op.n_atoms, op.dim_local)?;
    let m = &op.matrix;
    Ok(match &state.data {
        StateData::Pure(psi) => {
            let o_psi = m.dot(psi);
            psi.iter().zip(o_psi.iter()).map(|(a, b)| a.conj() * b).sum()
        }
        StateData::Density(rho) => {
            let n = rho.nrows();
            let mut acc = ZERO;
            for i in 0..n {
                for j in 0..n {
                    acc += rho[[i, j]] * m[[j, i]];
                }
            }
            acc
        }
    })
}

/// Reduced density matrix over the atoms in `keep` (kept in ascending order).
pub fn partial_trace(state: &QuantumState, keep: &[usize]) -> Result<QuantumState> {
    if keep.is_empty() {
        return Err(invalid("partial trace needs at least one kept atom"));
    }
    let n = state.n_atoms;
    let d = state.dim_local;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() || kept.iter().any(|&a| a >= n) {
        return Err(invalid(format!("keep set {keep:?} is not a subset of 0..{n}")));
    }
    let traced: Vec<usize> = (0..n).filter(|a| !kept.contains(a)).collect();
    let stride = |atom: usize| d.pow((n - atom - 1) as u32);

    let offsets = |atoms: &[usize]| -> Vec<usize> {
        (0..hilbert_dim(atoms.len(), d))
            .map(|sub| {
                basis_digits(sub, atoms.len(), d)
                    .into_iter()
                    .zip(atoms)
                    .map(|(digit, &atom)| digit * stride(atom))
                    .sum()
            })
            .collect()
    };
    let kept_off = offsets(&kept);
    let traced_off = offsets(&traced);

    let rho = state.density_matrix();
    let dk = kept_off.len();
    let mut reduced = Array2::<C64>::zeros((dk, dk));
    for (a, &ka) in kept_off.iter().enumerate() {
        for (b, &kb) in kept_off.iter().enumerate() {
            reduced[[a, b]] = traced_off.iter().map(|&t| rho[[ka + t, kb + t]]).sum();
        }
    }
    Ok(QuantumState::density_unchecked(kept.len(), d, reduced))
}

/// Kronecker product of two dense matrices.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Explicit Kronecker chain, independent of the index arithmetic in `embed_single`.
    fn kron_chain(local: &Array2<C64>, atom: usize, n: usize, d: usize) -> Array2<C64> {
        let mut m = Array2::<C64>::eye(1);
        for k in 0..n {
            let factor = if k == atom { local.clone() } else { Array2::eye(d) };
            m = kron(&m, &factor);
        }
        m
    }

    fn random_local(seed: u64, d: usize) -> Array2<C64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((d, d), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn embed_identity_is_identity() {
        for atom in 0..2 {
            let op = embed_single(&Array2::eye(3), atom, 2, 3).unwrap();
            assert_eq!(op.matrix(), &Array2::<C64>::eye(9));
        }
    }

    #[test]
    fn embed_rydberg_projector_on_first_atom() {
        let p = local_transition(Level::Ryd, Level::Ryd, 3).unwrap();
        let op = embed_single(&p, 0, 2, 3).unwrap();
        for i in 0..9 {
            let expected = if (6..9).contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(op.matrix()[[i, i]], c(expected));
        }
        assert_eq!(op.matrix().iter().filter(|a| a.norm() > 0.0).count(), 3);
    }

    #[test]
    fn embed_matches_kronecker_chain_and_trace() {
        for (seed, (atom, n)) in [(0, 3), (1, 3), (2, 3), (0, 2), (1, 4)].into_iter().enumerate() {
            let a = random_local(seed as u64, 3);
            let op = embed_single(&a, atom, n, 3).unwrap();
            let reference = kron_chain(&a, atom, n, 3);
            let dev = op.matrix().iter().zip(reference.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(dev < 1e-15);
            let tr: C64 = op.matrix().diag().sum();
            let expected = a.diag().sum() * 3f64.powi(n as i32 - 1);
            assert!((tr - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn embed_rejects_bad_dimensions() {
        assert!(matches!(embed_single(&Array2::eye(4), 0, 2, 3), Err(Error::DimensionMismatch { .. })));
        assert!(embed_single(&Array2::eye(3), 2, 2, 3).is_err());
    }

    #[test]
    fn embedded_operators_on_distinct_atoms_commute() {
        let a = embed_single(&random_local(7, 3), 0, 3, 3).unwrap();
        let b = embed_single(&random_local(8, 3), 2, 3, 3).unwrap();
        let comm = a.commutator(&b).unwrap();
        assert!(comm.matrix().iter().all(|x| x.norm() <= 1e-12));
    }

    #[test]
    fn two_site_projector_basics() {
        let p = two_site_projector(0, 1, Level::Ryd, 2, 3).unwrap();
        for i in 0..9 {
            assert_eq!(p.matrix()[[i, i]], c(if i == 8 { 1.0 } else { 0.0 }));
        }
        let p = two_site_projector(1, 3, Level::Ryd, 4, 3).unwrap();
        assert_eq!(p.matrix().diag().sum(), c(9.0));
        assert!(two_site_projector(1, 1, Level::Ryd, 3, 3).is_err());
    }

    #[test]
    fn two_site_projector_commutes_with_rydberg_number() {
        let p = two_site_projector(0, 2, Level::Ryd, 3, 3).unwrap();
        let nr = local_transition(Level::Ryd, Level::Ryd, 3).unwrap();
        for k in 0..3 {
            let e = embed_single(&nr, k, 3, 3).unwrap();
            let comm = p.commutator(&e).unwrap();
            assert!(comm.matrix().iter().all(|x| x.norm() <= 1e-14));
        }
    }

    #[test]
    fn expectation_values() {
        let s = QuantumState::basis("11", 3).unwrap();
        let mut proj = Array2::zeros((9, 9));
        proj[[4, 4]] = ONE;
        let op = Operator::new(2, 3, proj).unwrap();
        assert_eq!(expectation(&s, &op).unwrap(), ONE);

        let mixed = QuantumState::maximally_mixed(2, 3);
        let nr0 = embed_single(&local_transition(Level::Ryd, Level::Ryd, 3).unwrap(), 0, 2, 3).unwrap();
        assert!((expectation(&mixed, &nr0).unwrap() - c(1.0 / 3.0)).norm() < 1e-15);

        let wrong = Operator::identity(3, 3);
        assert!(expectation(&mixed, &wrong).is_err());
    }

    #[test]
    fn partial_trace_of_product_state() {
        let s = QuantumState::basis("01", 3).unwrap();
        let r = partial_trace(&s, &[0]).unwrap();
        let expected = QuantumState::basis("0", 3).unwrap().density_matrix();
        assert_eq!(r.density_matrix(), expected);
        assert!(partial_trace(&s, &[]).is_err());
        assert!(partial_trace(&s, &[0, 0]).is_err());
        assert!(partial_trace(&s, &[2]).is_err());
    }

    #[test]
    fn partial_trace_of_relay_output_is_bell() {
        let s = QuantumState::uniform_superposition(&["001", "100"], 3).unwrap();
        let r = partial_trace(&s, &[0, 2]).unwrap();
        let bell = QuantumState::uniform_superposition(&["01", "10"], 3).unwrap();
        let dev = r
            .density_matrix()
            .iter()
            .zip(bell.density_matrix().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-15);
        assert!((r.purity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn superposition_labels_and_basis_ordering() {
        assert_eq!(basis_index(&[2, 1], 3), 7);
        assert_eq!(basis_label(7, 2, 3), "r1");
        assert_eq!(parse_basis_label("0rd", 4).unwrap(), vec![0, 2, 3]);
        assert!(parse_basis_label("0d", 3).is_err());
        assert!(parse_basis_label("0x", 3).is_err());
        let s = QuantumState::superposition(&[("0", c(3.0)), ("1", c(4.0))], 3).unwrap();
        assert!((s.amplitudes().unwrap()[1].re - 0.8).abs() < 1e-15);
    }

    #[test]
    fn density_validation() {
        let rho = array![[c(0.5), c(0.0)], [c(0.0), c(0.6)]];
        let bad_trace = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { rho[[i.min(1), j.min(1)]] } else { ZERO });
        assert!(QuantumState::density(1, 3, bad_trace).is_err());
        let mut neg = Array2::<C64>::zeros((3, 3));
        neg[[0, 0]] = c(1.1);
        neg[[1, 1]] = c(-0.1);
        assert!(QuantumState::density(1, 3, neg).is_err());
        assert!(QuantumState::pure(1, 3, Array1::from_elem(3, ONE)).is_err());
    }

    #[test]
    fn level_scheme_presets() {
        let cs = LevelScheme::cesium(1.6).unwrap();
        assert_eq!(cs.dim(), 3);
        assert!((cs.gamma_r() - 1.6).abs() < 1e-15);
        let rb = LevelScheme::with_dump(0.5).unwrap();
        assert_eq!(rb.dim(), 4);
        assert!(rb.has_dump());
        assert!(LevelScheme::new(vec![Level::G0, Level::G1, Level::Ryd, Level::Dump], vec![]).is_err());
        assert!(LevelScheme::new(
            vec![Level::G0, Level::G1, Level::Ryd],
            vec![DecayChannel { from: Level::Ryd, to: Level::G0, rate: -1.0 }]
        )
        .is_err());
        assert!(LevelScheme::new(vec![Level::G1, Level::G0, Level::Ryd], vec![]).is_err());
        let off = rb.scaled(0.0).unwrap();
        assert!(!off.is_dissipative());
        assert!(off.has_dump());
    }
}
