//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use cineswarm_core::qpsolve::{QpProblem, QpSolution};
use cineswarm_core::world::VoxelGrid;
use nalgebra::{DMatrix, DVector};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(PartialEq)]
struct Entry(f64, f64, u64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.total_cmp(&self.1)).then_with(|| o.2.cmp(&self.2))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

pub struct AstarResult {
    /// Axis, planar-diagonal and cube-diagonal move counts.
    pub moves: [u32; 3],
    pub expansions: usize,
}

impl AstarResult {
    pub fn cost_cells(&self) -> f64 {
        self.moves[0] as f64 + self.moves[1] as f64 * SQRT2 + self.moves[2] as f64 * SQRT3
    }
}

/// Plain A* over every cell, 26-connected, diagonal moves only when the
/// whole spanned cube is free. Cells outside the grid are blocked.
pub fn astar(grid: &VoxelGrid, start: [i64; 3], goal: [i64; 3]) -> Option<AstarResult> {
    let dims = grid.dims();
    let free = |c: [i64; 3]| grid.in_bounds(c) && !grid.is_occupied_cell(c);
    if !free(start) {
        return None;
    }
    let idx = |c: [i64; 3]| ((c[2] as usize * dims[1]) + c[1] as usize) * dims[0] + c[0] as usize;
    let total = dims[0] * dims[1] * dims[2];
    let mut g = vec![f64::INFINITY; total];
    let mut moves = vec![[0u32; 3]; total];
    let mut closed = vec![false; total];
    let mut cells = vec![[0i64; 3]; total];
    let h = |c: [i64; 3]| {
        let mut d = [(c[0] - goal[0]).abs(), (c[1] - goal[1]).abs(), (c[2] - goal[2]).abs()];
        d.sort_unstable();
        SQRT3 * d[0] as f64 + SQRT2 * (d[1] - d[0]) as f64 + (d[2] - d[1]) as f64
    };
    let mut open = BinaryHeap::new();
    let mut seq = 0;
    g[idx(start)] = 0.0;
    cells[idx(start)] = start;
    open.push(Entry(h(start), h(start), seq, idx(start)));
    let mut expansions = 0;
    while let Some(Entry(_, _, _, i)) = open.pop() {
        if closed[i] {
            continue;
        }
        closed[i] = true;
        expansions += 1;
        let c = cells[i];
        if c == goal {
            return Some(AstarResult { moves: moves[i], expansions });
        }
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let d = [dx, dy, dz];
                    if d == [0, 0, 0] {
                        continue;
                    }
                    // every cell of the spanned cube must be free
                    let mut ok = true;
                    for mz in 0..=dz.abs() {
                        for my in 0..=dy.abs() {
                            for mx in 0..=dx.abs() {
                                if (mx, my, mz) == (0, 0, 0) {
                                    continue;
                                }
                                let s = [c[0] + mx * dx.signum(), c[1] + my * dy.signum(), c[2] + mz * dz.signum()];
                                ok &= free(s);
                            }
                        }
                    }
                    if !ok {
                        continue;
                    }
                    let n = [c[0] + dx, c[1] + dy, c[2] + dz];
                    let class = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize - 1;
                    let ng = g[i] + [1.0, SQRT2, SQRT3][class];
                    let j = idx(n);
                    if closed[j] || ng >= g[j] - 1e-12 {
                        continue;
                    }
                    g[j] = ng;
                    cells[j] = n;
                    let mut m = moves[i];
                    m[class] += 1;
                    moves[j] = m;
                    seq += 1;
                    open.push(Entry(ng + h(n), h(n), seq, j));
                }
            }
        }
    }
    None
}

/// KKT residuals of a QP solution computed from scratch: stationarity
/// `Hz + g + A'y + y_box` (box multipliers signed: positive at the upper
/// bound), primal feasibility and complementarity.
pub struct Kkt {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    pub dual_sign: f64,
}

impl Kkt {
    pub fn worst(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity).max(self.dual_sign)
    }
}

pub fn kkt_check(p: &QpProblem, s: &QpSolution) -> Kkt {
    let z = &s.z;
    let mut r = &p.h * z + &p.g;
    if p.a.nrows() > 0 {
        r += p.a.transpose() * &s.y_ineq;
    }
    r += &s.y_box;
    let stationarity = r.amax();
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut sign: f64 = 0.0;
    if p.a.nrows() > 0 {
        let az = &p.a * z;
        for i in 0..p.a.nrows() {
            let slack = az[i] - p.b[i];
            primal = primal.max(slack);
            sign = sign.max(-s.y_ineq[i]);
            comp = comp.max((s.y_ineq[i] * slack).abs());
        }
    }
    for i in 0..z.len() {
        primal = primal.max(p.lo[i] - z[i]).max(z[i] - p.hi[i]);
        let y = s.y_box[i];
        if y > 0.0 {
            comp = comp.max((y * (p.hi[i] - z[i])).abs());
        } else {
            comp = comp.max((y * (z[i] - p.lo[i])).abs());
        }
    }
    Kkt { stationarity, primal, complementarity: comp, dual_sign: sign }
}

/// Reference solver for small QPs: accelerated projected gradient on the
/// dual of `min 1/2 z'Hz + g'z s.t. Az <= b, lo <= z <= hi` with `H` strictly
/// positive definite. Each dual step solves the box-constrained primal
/// subproblem by projected gradient. Slow but simple.
pub fn dual_projected_gradient(p: &QpProblem, iters: usize) -> DVector<f64> {
    let n = p.g.len();
    let m = p.a.nrows();
    let hinv = p.h.clone().try_inverse().expect("oracle needs H positive definite");
    let lip_h = p.h.symmetric_eigenvalues().max();
    let inner = |y: &DVector<f64>, z0: &DVector<f64>| -> DVector<f64> {
        // argmin over the box of 1/2 z'Hz + (g + A'y)'z
        let c = if m > 0 { &p.g + p.a.transpose() * y } else { p.g.clone() };
        let mut z = z0.clone();
        let mut zp = z.clone();
        let mut t = 1.0;
        for _ in 0..4000 {
            let w = &z + (&z - &zp) * ((t - 1.0) / (t + 2.0));
            let grad = &p.h * &w + &c;
            zp = z.clone();
            z = (&w - grad / lip_h).zip_zip_map(&p.lo, &p.hi, |v, lo, hi| v.clamp(lo, hi));
            t += 1.0;
            if (&z - &zp).amax() < 1e-13 {
                break;
            }
        }
        z
    };
    if m == 0 {
        return inner(&DVector::zeros(0), &(-&hinv * &p.g).zip_zip_map(&p.lo, &p.hi, |v, lo, hi| v.clamp(lo, hi)));
    }
    let lip_d = (&p.a * &hinv * p.a.transpose()).symmetric_eigenvalues().max().max(1e-12);
    let mut y = DVector::zeros(m);
    let mut yp = y.clone();
    let mut z = DVector::zeros(n);
    for k in 0..iters {
        let beta = k as f64 / (k as f64 + 3.0);
        let w = &y + (&y - &yp) * beta;
        z = inner(&w, &z);
        let grad = &p.a * &z - &p.b;
        yp = y.clone();
        y = (&w + grad / lip_d).map(|v| v.max(0.0));
    }
    inner(&y, &z)
}

pub fn objective(p: &QpProblem, z: &DVector<f64>) -> f64 {
    0.5 * z.dot(&(&p.h * z)) + p.g.dot(z)
}

pub fn random_spd(n: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * 0.5
}
