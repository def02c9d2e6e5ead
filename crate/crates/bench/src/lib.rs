//! Deterministic inputs shared by the benchmarks.

use std::path::PathBuf;

use cineswarm_core::qpsolve::QpProblem;
use cineswarm_core::sim::Scenario;
use cineswarm_core::world::{Aabb, VoxelGrid};
use cineswarm_core::Vec3;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(path).expect("bundled scenario")
}

/// Strictly convex QP with `m` general rows and an interior point, so it is
/// always feasible.
pub fn random_qp(n: usize, m: usize, seed: u64) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let inner = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &inner + DVector::from_fn(m, |_, _| rng.random_range(0.05..1.0));
    let lo = inner.map(|v| v - rng.random_range(0.1..2.0));
    let hi = inner.map(|v| v + rng.random_range(0.1..2.0));
    QpProblem { h, g, a, b, lo, hi }
}

/// Unit-cell grid with each cell occupied with probability `density`; the
/// two opposite corners are kept free.
pub fn random_grid(dims: [usize; 3], density: f64, seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ext = Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64);
    let mut g = VoxelGrid::empty(Aabb::new(Vec3::zeros(), ext), 1.0, usize::MAX).expect("grid");
    let last = dims.map(|d| d as i64 - 1);
    for z in 0..=last[2] {
        for y in 0..=last[1] {
            for x in 0..=last[0] {
                let c = [x, y, z];
                if c != [0, 0, 0] && c != last && rng.random_bool(density) {
                    g.set_occupied(c);
                }
            }
        }
    }
    g
}
