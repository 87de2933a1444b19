//! Atom layouts and van-der-Waals interaction matrices.
//!
//! Lengths are dimensionless (in units of the nominal spacing) and
//! interactions are in units of the Rabi-frequency unit `Omega_0`.
//! A layout carries the interaction `v_ref` at a reference distance; every
//! pair then interacts with `v_ref * (d_ref / d_ij)^6`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Line,
    Triangle,
    Square,
    /// Regular tetrahedron.
    Pyramid,
}

/// Which coordinates a positional perturbation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PerturbDims {
    /// Along x only (the axis of a line layout).
    One,
    /// In the x-y plane.
    Two,
    Three,
}

impl PerturbDims {
    pub fn count(self) -> usize {
        match self {
            PerturbDims::One => 1,
            PerturbDims::Two => 2,
            PerturbDims::Three => 3,
        }
    }
}

impl TryFrom<u8> for PerturbDims {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(PerturbDims::One),
            2 => Ok(PerturbDims::Two),
            3 => Ok(PerturbDims::Three),
            _ => Err(format!("perturbation dimensions must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<PerturbDims> for u8 {
    fn from(d: PerturbDims) -> u8 {
        d.count() as u8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomLayout {
    positions: Vec<[f64; 3]>,
    reference_pair: (usize, usize),
    reference_distance: f64,
    v_ref: f64,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl AtomLayout {
    /// Builds a layout whose reference distance is the current separation of
    /// `reference_pair`.
    pub fn new(positions: Vec<[f64; 3]>, reference_pair: (usize, usize), v_ref: f64) -> Result<Self> {
        let n = positions.len();
        if n < 2 {
            return Err(invalid("a layout needs at least two atoms"));
        }
        let (i, j) = reference_pair;
        if i == j || i >= n || j >= n {
            return Err(invalid(format!("invalid reference pair {reference_pair:?}")));
        }
        if !(v_ref.is_finite() && v_ref >= 0.0) {
            return Err(invalid(format!("reference interaction must be >= 0, got {v_ref}")));
        }
        let reference_distance = distance(&positions[i], &positions[j]);
        let layout = Self { positions, reference_pair, reference_distance, v_ref };
        layout.check_distinct()?;
        Ok(layout)
    }

    fn check_distinct(&self) -> Result<()> {
        for i in 0..self.positions.len() {
            for j in (i + 1)..self.positions.len() {
                if distance(&self.positions[i], &self.positions[j]) <= 0.0 {
                    return Err(invalid(format!("atoms {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn reference_pair(&self) -> (usize, usize) {
        self.reference_pair
    }

    pub fn reference_distance(&self) -> f64 {
        self.reference_distance
    }

    pub fn v_ref(&self) -> f64 {
        self.v_ref
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.positions[i], &self.positions[j])
    }

    /// All coordinates multiplied by `factor`; the reference distance is kept.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            positions: self.positions.iter().map(|p| [p[0] * factor, p[1] * factor, p[2] * factor]).collect(),
            ..self.clone()
        }
    }
}

/// Regular layouts with nearest-neighbour distance `spacing`.
///
/// Atom 0 and atom 1 are always nearest neighbours and serve as the
/// reference pair. Square atoms are numbered around the perimeter, so
/// `(0, 2)` and `(1, 3)` are the diagonals.
pub fn build_layout(shape: Shape, n_atoms: usize, spacing: f64, v_ref: f64) -> Result<AtomLayout> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(invalid(format!("spacing must be positive, got {spacing}")));
    }
    let s = spacing;
    let positions = match (shape, n_atoms) {
        (Shape::Line, n) if n >= 2 => (0..n).map(|i| [i as f64 * s, 0.0, 0.0]).collect(),
        (Shape::Triangle, 3) => vec![[0.0, 0.0, 0.0], [s, 0.0, 0.0], [0.5 * s, 0.5 * 3f64.sqrt() * s, 0.0]],
        (Shape::Square, 4) => vec![[0.0, 0.0, 0.0], [s, 0.0, 0.0], [s, s, 0.0], [0.0, s, 0.0]],
        (Shape::Pyramid, 4) => vec![
            [0.0, 0.0, 0.0],
            [s, 0.0, 0.0],
            [0.5 * s, 0.5 * 3f64.sqrt() * s, 0.0],
            [0.5 * s, 3f64.sqrt() / 6.0 * s, (2.0f64 / 3.0).sqrt() * s],
        ],
        _ => {
            return Err(invalid(format!("shape {shape:?} is incompatible with {n_atoms} atoms")));
        }
    };
    AtomLayout::new(positions, (0, 1), v_ref)
}

/// Symmetric pairwise Rydberg-Rydberg interaction strengths with zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    v: Array2<f64>,
}

impl InteractionMatrix {
    pub fn from_matrix(v: Array2<f64>) -> Result<Self> {
        let n = v.nrows();
        if v.ncols() != n {
            return Err(invalid("interaction matrix must be square"));
        }
        for i in 0..n {
            if v[[i, i]] != 0.0 {
                return Err(invalid("interaction matrix must have a zero diagonal"));
            }
            for j in 0..n {
                if v[[i, j]] != v[[j, i]] || v[[i, j]].is_nan() || v[[i, j]] < 0.0 {
                    return Err(invalid("interaction matrix must be symmetric and nonnegative"));
                }
            }
        }
        Ok(Self { v })
    }

    /// Every pair interacting with the same strength.
    pub fn uniform(n_atoms: usize, v: f64) -> Result<Self> {
        Self::from_matrix(Array2::from_shape_fn((n_atoms, n_atoms), |(i, j)| if i == j { 0.0 } else { v }))
    }

    pub fn n_atoms(&self) -> usize {
        self.v.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.v[[i, j]]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.v
    }
}

pub fn interaction_matrix(layout: &AtomLayout) -> Result<InteractionMatrix> {
    let n = layout.n_atoms();
    let mut v = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = layout.distance(i, j);
            if d <= 0.0 {
                return Err(invalid(format!("atoms {i} and {j} coincide")));
            }
            let vij = layout.v_ref * (layout.reference_distance / d).powi(6);
            v[[i, j]] = vij;
            v[[j, i]] = vij;
        }
    }
    Ok(InteractionMatrix { v })
}

/// Displaces every atom by independent `N(0, sigma^2)` noise on the active
/// coordinates. The reference distance stays pinned to the unperturbed value,
/// so interactions follow the new distances.
pub fn perturb_positions<R: Rng + ?Sized>(
    layout: &AtomLayout,
    sigma: f64,
    dims: PerturbDims,
    rng: &mut R,
) -> Result<AtomLayout> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(layout.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
    let positions = layout
        .positions
        .iter()
        .map(|p| {
            let mut q = *p;
            for coord in q.iter_mut().take(dims.count()) {
                *coord += normal.sample(rng);
            }
            q
        })
        .collect();
    let perturbed = AtomLayout { positions, ..layout.clone() };
    perturbed.check_distinct()?;
    Ok(perturbed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn line_positions() {
        let l = build_layout(Shape::Line, 3, 1.0, 1.0).unwrap();
        assert_eq!(l.positions(), &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
    }

    #[test]
    fn square_and_pyramid_distances() {
        let sq = build_layout(Shape::Square, 4, 1.0, 1.0).unwrap();
        assert!((sq.distance(0, 2) - 2f64.sqrt()).abs() < 1e-15);
        assert!((sq.distance(1, 3) - 2f64.sqrt()).abs() < 1e-15);
        let py = build_layout(Shape::Pyramid, 4, 1.0, 1.0).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!((py.distance(i, j) - 1.0).abs() < 1e-14, "{i}-{j}");
            }
        }
    }

    #[test]
    fn incompatible_shapes_rejected() {
        assert!(build_layout(Shape::Triangle, 4, 1.0, 1.0).is_err());
        assert!(build_layout(Shape::Square, 3, 1.0, 1.0).is_err());
        assert!(build_layout(Shape::Pyramid, 3, 1.0, 1.0).is_err());
        assert!(build_layout(Shape::Line, 1, 1.0, 1.0).is_err());
        assert!(build_layout(Shape::Line, 3, 0.0, 1.0).is_err());
    }

    #[test]
    fn relay_line_end_pair_interaction() {
        let l = build_layout(Shape::Line, 3, 1.0, 0.96).unwrap();
        let v = interaction_matrix(&l).unwrap();
        assert!((v.get(0, 2) - 0.96 / 64.0).abs() < 1e-15);
        assert!((v.get(0, 2) - 0.015).abs() < 1e-12);
        assert_eq!(v.get(0, 1), 0.96);
    }

    #[test]
    fn square_diagonal_is_an_eighth() {
        let l = build_layout(Shape::Square, 4, 1.0, 1.13).unwrap();
        let v = interaction_matrix(&l).unwrap();
        assert!((v.get(0, 2) - 1.13 / 8.0).abs() < 1e-14);
        assert!((v.get(1, 2) - 1.13).abs() < 1e-14);
    }

    #[test]
    fn triangle_is_uniform() {
        let l = build_layout(Shape::Triangle, 3, 1.0, 0.73).unwrap();
        let v = interaction_matrix(&l).unwrap();
        assert!((v.get(0, 1) - v.get(1, 2)).abs() < 1e-12);
        assert!((v.get(0, 1) - v.get(0, 2)).abs() < 1e-12);
    }

    #[test]
    fn doubling_coordinates_divides_by_64() {
        let l = build_layout(Shape::Pyramid, 4, 1.0, 2.0).unwrap();
        let v1 = interaction_matrix(&l).unwrap();
        let v2 = interaction_matrix(&l.scaled(2.0)).unwrap();
        for (a, b) in v1.matrix().iter().zip(v2.matrix().iter()) {
            assert!((a / 64.0 - b).abs() < 1e-15);
        }
    }

    #[test]
    fn coincident_atoms_rejected() {
        assert!(AtomLayout::new(vec![[0.0; 3], [0.0; 3]], (0, 1), 1.0).is_err());
    }

    #[test]
    fn zero_sigma_and_determinism() {
        let l = build_layout(Shape::Triangle, 3, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb_positions(&l, 0.0, PerturbDims::Two, &mut rng).unwrap(), l);
        let a = perturb_positions(&l, 0.05, PerturbDims::Two, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = perturb_positions(&l, 0.05, PerturbDims::Two, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reference_distance(), l.reference_distance());
        for (p, q) in a.positions().iter().zip(l.positions()) {
            assert_eq!(p[2], q[2]);
        }
    }

    #[test]
    fn one_dimensional_noise_stays_on_the_line() {
        let l = build_layout(Shape::Line, 3, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = perturb_positions(&l, 0.04, PerturbDims::One, &mut rng).unwrap();
        assert!(p.positions().iter().all(|q| q[1] == 0.0 && q[2] == 0.0));
    }

    #[test]
    fn empirical_sigma_within_five_percent() {
        let l = build_layout(Shape::Triangle, 3, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let sigma = 0.05;
        let samples = 10_000;
        let mut sums = [[0.0f64; 2]; 2];
        let mut sq = [[0.0f64; 2]; 2];
        for _ in 0..samples {
            let p = perturb_positions(&l, sigma, PerturbDims::Two, &mut rng).unwrap();
            for atom in 0..2 {
                for c in 0..2 {
                    let dx = p.positions()[atom][c] - l.positions()[atom][c];
                    sums[atom][c] += dx;
                    sq[atom][c] += dx * dx;
                }
            }
        }
        for atom in 0..2 {
            for c in 0..2 {
                let mean = sums[atom][c] / samples as f64;
                let var = sq[atom][c] / samples as f64 - mean * mean;
                assert!((var.sqrt() / sigma - 1.0).abs() < 0.05);
            }
        }
    }
}
