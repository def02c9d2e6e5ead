//! Jump point search on a 26-connected voxel grid without corner cutting.
//!
//! A diagonal move is legal only when every cell of the unit cube it spans
//! is free. Pruning follows the usual dominance argument: when arriving at
//! `x` from `p = x - d`, a neighbor `n` of `x` is skipped if some path from
//! `p` to `n` that avoids `x` is shorter, or equally long and canonical
//! (see `build_rules`). Only one- and two-move detours are considered, which is
//! conservative: a neighbor without such a detour is treated as forced. All
//! cells involved lie in the 3x3x3 block around `x`, so the rules are
//! precomputed as bitmasks over that block.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use crate::dynamics::Vec3;
use crate::world::VoxelGrid;

pub type Cell = [i64; 3];
type Dir = [i64; 3];

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JpsOptions {
    /// Maximum number of nodes popped from the open list.
    pub max_expansions: usize,
    /// Optional wall-clock limit. Makes results timing dependent; the
    /// simulator leaves it unset and relies on `max_expansions`.
    pub timeout: Option<Duration>,
}

impl Default for JpsOptions {
    fn default() -> Self {
        Self { max_expansions: 20_000, timeout: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JpsFailureKind {
    Unreachable,
    Budget,
    Timeout,
    /// Start cell is occupied or outside the grid.
    BadStart,
}

/// Path through cell centers with its move counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPath {
    pub cells: Vec<Cell>,
    /// Number of axis, planar-diagonal and cube-diagonal unit moves.
    pub moves: [u32; 3],
    pub expansions: usize,
}

impl CellPath {
    /// Length in cell units, computed from the move counts so that searches
    /// finding the same multiset of moves report bit-identical costs.
    pub fn cost_cells(&self) -> f64 {
        self.moves[0] as f64 + self.moves[1] as f64 * SQRT2 + self.moves[2] as f64 * SQRT3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JpsFailure {
    pub kind: JpsFailureKind,
    /// Path to the expanded node closest to the goal, if any node was expanded.
    pub closest: Option<CellPath>,
    pub expansions: usize,
}

fn move_class(d: Dir) -> usize {
    (d[0] != 0) as usize + (d[1] != 0) as usize + (d[2] != 0) as usize - 1
}

fn move_cost(d: Dir) -> f64 {
    [1.0, SQRT2, SQRT3][move_class(d)]
}

fn all_dirs() -> Vec<Dir> {
    let mut v = Vec::with_capacity(26);
    for z in -1..=1 {
        for y in -1..=1 {
            for x in -1..=1 {
                if (x, y, z) != (0, 0, 0) {
                    v.push([x, y, z]);
                }
            }
        }
    }
    v
}

/// Nonzero sub-vectors of `d` (including `d`).
fn sub_dirs(d: Dir) -> Vec<Dir> {
    let mut out = Vec::new();
    for mask in 1u8..8 {
        let s = [0, 1, 2].map(|i| if mask >> i & 1 == 1 { d[i] } else { 0 });
        if s != [0, 0, 0] && !out.contains(&s) && (0..3).all(|i| s[i] == 0 || s[i] == d[i]) {
            out.push(s);
        }
    }
    out
}

#[inline]
fn bit(off: Dir) -> u32 {
    1 << ((off[2] + 1) * 9 + (off[1] + 1) * 3 + (off[0] + 1))
}

/// Cells (as offsets from `from`) that must be free to move by `d`.
fn span_mask(from: Dir, d: Dir) -> Option<u32> {
    let mut m = 0;
    for s in sub_dirs(d) {
        let c = [from[0] + s[0], from[1] + s[1], from[2] + s[2]];
        if c.iter().any(|v| v.abs() > 1) {
            return None;
        }
        m |= bit(c);
    }
    Some(m)
}

struct Rule {
    /// Cells needed for the move x -> n.
    legal: u32,
    dir: Dir,
    /// Each detour's required cells; the neighbor is dominated if any is free.
    detours: Vec<u32>,
}

struct DirRules {
    natural: Vec<Dir>,
    rules: Vec<Rule>,
}

fn build_rules() -> Vec<DirRules> {
    let dirs = all_dirs();
    dirs.iter()
        .map(|&d| {
            let natural = sub_dirs(d);
            let p = [-d[0], -d[1], -d[2]];
            let class_d = move_class(d);
            let mut rules = Vec::new();
            for &e in &dirs {
                if natural.contains(&e) || e == p {
                    continue;
                }
                let legal = span_mask([0, 0, 0], e).expect("unit move stays in block");
                let budget = move_cost(d) + move_cost(e);
                // Ties may be pruned only in favor of a detour that starts with
                // a higher-dimensional move (or always after a straight move),
                // so two equal paths never prune each other.
                let better = |c: f64, first: Dir| {
                    c < budget - 1e-12 || (c <= budget + 1e-12 && (class_d == 0 || move_class(first) > class_d))
                };
                let n = e;
                let mut detours = Vec::new();
                // p -> n directly
                let f = [n[0] - p[0], n[1] - p[1], n[2] - p[2]];
                if f.iter().all(|v| v.abs() <= 1) && f != [0, 0, 0] && better(move_cost(f), f) {
                    if let Some(m) = span_mask(p, f) {
                        detours.push(m);
                    }
                }
                // p -> m -> n, m != x
                for &g in &dirs {
                    let m = [p[0] + g[0], p[1] + g[1], p[2] + g[2]];
                    if m == [0, 0, 0] || m.iter().any(|v| v.abs() > 1) {
                        continue;
                    }
                    let h = [n[0] - m[0], n[1] - m[1], n[2] - m[2]];
                    if h == [0, 0, 0] || h.iter().any(|v| v.abs() > 1) {
                        continue;
                    }
                    if !better(move_cost(g) + move_cost(h), g) {
                        continue;
                    }
                    if let (Some(a), Some(b)) = (span_mask(p, g), span_mask(m, h)) {
                        detours.push(a | b);
                    }
                }
                rules.push(Rule { legal, dir: e, detours });
            }
            DirRules { natural, rules }
        })
        .collect()
}

fn rules() -> &'static [DirRules] {
    static RULES: OnceLock<Vec<DirRules>> = OnceLock::new();
    RULES.get_or_init(build_rules)
}

#[inline]
fn dir_index(d: Dir) -> usize {
    let i = ((d[2] + 1) * 9 + (d[1] + 1) * 3 + (d[0] + 1)) as usize;
    if i > 13 { i - 1 } else { i }
}

/// Forced directions when arriving along `d` with free-cell `mask`.
fn forced(d: Dir, mask: u32) -> impl Iterator<Item = Dir> {
    rules()[dir_index(d)]
        .rules
        .iter()
        .filter(move |r| r.legal & mask == r.legal && !r.detours.iter().any(|m| m & mask == *m))
        .map(|r| r.dir)
}

struct Search<'g> {
    grid: &'g VoxelGrid,
    goal: Cell,
}

impl Search<'_> {
    #[inline]
    fn free(&self, c: Cell) -> bool {
        self.grid.in_bounds(c) && !self.grid.is_occupied_cell(c)
    }

    fn block_mask(&self, x: Cell) -> u32 {
        let mut m = 0;
        for z in -1..=1 {
            for y in -1..=1 {
                for dx in -1..=1 {
                    if self.free([x[0] + dx, x[1] + y, x[2] + z]) {
                        m |= bit([dx, y, z]);
                    }
                }
            }
        }
        m
    }

    fn legal(&self, from: Cell, d: Dir) -> bool {
        sub_dirs(d).iter().all(|s| self.free([from[0] + s[0], from[1] + s[1], from[2] + s[2]]))
    }

    fn has_forced(&self, x: Cell, d: Dir) -> bool {
        forced(d, self.block_mask(x)).next().is_some()
    }

    /// Successor directions of a node reached along `d` (`None` at the start).
    fn successors(&self, x: Cell, d: Option<Dir>) -> Vec<Dir> {
        match d {
            None => all_dirs(),
            Some(d) => {
                let mask = self.block_mask(x);
                let mut out = rules()[dir_index(d)].natural.clone();
                out.extend(forced(d, mask));
                out
            }
        }
    }

    /// Jumps from `x` along `d`; returns the jump point and the step count.
    fn jump(&self, x: Cell, d: Dir) -> Option<(Cell, i64)> {
        let mut cur = x;
        let mut k = 0;
        loop {
            if !self.legal(cur, d) {
                return None;
            }
            cur = [cur[0] + d[0], cur[1] + d[1], cur[2] + d[2]];
            k += 1;
            if cur == self.goal || self.has_forced(cur, d) {
                return Some((cur, k));
            }
            if move_class(d) > 0 {
                for s in sub_dirs(d) {
                    if s != d && self.jump(cur, s).is_some() {
                        return Some((cur, k));
                    }
                }
            }
        }
    }
}

/// Octile distance in cell units for 26-connectivity.
pub fn octile(a: Cell, b: Cell) -> f64 {
    let mut d = [(a[0] - b[0]).abs(), (a[1] - b[1]).abs(), (a[2] - b[2]).abs()];
    d.sort_unstable();
    let (lo, mid, hi) = (d[0] as f64, d[1] as f64, d[2] as f64);
    SQRT3 * lo + SQRT2 * (mid - lo) + (hi - mid)
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    h: f64,
    seq: u64,
    cell: Cell,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then h, then insertion order
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct NodeInfo {
    g: f64,
    moves: [u32; 3],
    parent: Option<Cell>,
    dir: Option<Dir>,
    closed: bool,
}

/// Searches from `start` to `goal` (cell coordinates). An occupied goal is
/// never reached; the search then reports the closest expanded node.
pub fn jps_cells(grid: &VoxelGrid, start: Cell, goal: Cell, opts: &JpsOptions) -> Result<CellPath, JpsFailure> {
    let search = Search { grid, goal };
    if !search.free(start) {
        return Err(JpsFailure { kind: JpsFailureKind::BadStart, closest: None, expansions: 0 });
    }
    let began = Instant::now();
    let mut nodes: HashMap<Cell, NodeInfo> = HashMap::new();
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    let h0 = octile(start, goal);
    nodes.insert(start, NodeInfo { g: 0.0, moves: [0; 3], parent: None, dir: None, closed: false });
    open.push(Open { f: h0, h: h0, seq, cell: start });
    let mut expansions = 0usize;
    // closest expanded node: (distance to goal, g, cell)
    let mut closest: Option<(f64, f64, Cell)> = None;

    let fail = |kind, closest: Option<(f64, f64, Cell)>, nodes: &HashMap<Cell, NodeInfo>, expansions| JpsFailure {
        kind,
        closest: closest.map(|(_, _, c)| reconstruct(nodes, c, expansions)),
        expansions,
    };

    while let Some(Open { cell, .. }) = open.pop() {
        let info = nodes.get_mut(&cell).expect("open node is tracked");
        if info.closed {
            continue;
        }
        info.closed = true;
        let g = info.g;
        let moves = info.moves;
        let dir = info.dir;
        expansions += 1;

        let dist = euclid(cell, goal);
        let better = match closest {
            None => true,
            Some((bd, bg, _)) => dist < bd || (dist == bd && g < bg),
        };
        if better {
            closest = Some((dist, g, cell));
        }
        if cell == goal {
            return Ok(reconstruct(&nodes, cell, expansions));
        }
        if expansions >= opts.max_expansions {
            return Err(fail(JpsFailureKind::Budget, closest, &nodes, expansions));
        }
        if let Some(limit) = opts.timeout {
            if expansions % 64 == 0 && began.elapsed() > limit {
                return Err(fail(JpsFailureKind::Timeout, closest, &nodes, expansions));
            }
        }

        for d in search.successors(cell, dir) {
            let Some((next, k)) = search.jump(cell, d) else { continue };
            let mut m = moves;
            m[move_class(d)] += k as u32;
            let ng = g + move_cost(d) * k as f64;
            let entry = nodes.entry(next).or_insert(NodeInfo {
                g: f64::INFINITY,
                moves: [0; 3],
                parent: None,
                dir: None,
                closed: false,
            });
            if entry.closed || ng >= entry.g - 1e-12 {
                continue;
            }
            entry.g = ng;
            entry.moves = m;
            entry.parent = Some(cell);
            entry.dir = Some(d);
            let h = octile(next, goal);
            seq += 1;
            open.push(Open { f: ng + h, h, seq, cell: next });
        }
    }
    Err(fail(JpsFailureKind::Unreachable, closest, &nodes, expansions))
}

fn euclid(a: Cell, b: Cell) -> f64 {
    let d = [(a[0] - b[0]) as f64, (a[1] - b[1]) as f64, (a[2] - b[2]) as f64];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn reconstruct(nodes: &HashMap<Cell, NodeInfo>, end: Cell, expansions: usize) -> CellPath {
    let mut cells = vec![end];
    let mut cur = end;
    while let Some(p) = nodes[&cur].parent {
        cells.push(p);
        cur = p;
    }
    cells.reverse();
    CellPath { cells, moves: nodes[&end].moves, expansions }
}

/// A path in world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    pub waypoints: Vec<Vec3>,
    /// Grid-geodesic length between the start and end cell centers, meters.
    pub cost: f64,
    /// Nodes expanded by the search that produced the path.
    pub expansions: usize,
}

/// World-coordinate wrapper around [`jps_cells`]: the returned path starts
/// at `start`, runs through the centers of the jump points and ends at
/// `goal` (or at the center of the closest expanded node on failure).
pub fn jps3d(grid: &VoxelGrid, start: &Vec3, goal: &Vec3, opts: &JpsOptions) -> Result<GridPath, (JpsFailure, Option<GridPath>)> {
    let sc = grid.cell_of(start);
    let gc = grid.cell_of(goal);
    let res = grid.resolution();
    let to_world = |cp: &CellPath, end: Option<&Vec3>| {
        let mut w = vec![*start];
        for c in &cp.cells {
            let p = grid.cell_center(*c);
            if (p - w.last().unwrap()).norm() > 1e-9 {
                w.push(p);
            }
        }
        if let Some(e) = end {
            if (e - w.last().unwrap()).norm() > 1e-9 {
                w.push(*e);
            }
        }
        GridPath { waypoints: w, cost: cp.cost_cells() * res, expansions: cp.expansions }
    };
    match jps_cells(grid, sc, gc, opts) {
        Ok(cp) => Ok(to_world(&cp, Some(goal))),
        Err(f) => {
            let partial = f.closest.as_ref().map(|cp| to_world(cp, None));
            Err((f, partial))
        }
    }
}
