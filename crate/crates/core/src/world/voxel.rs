use serde::{Deserialize, Serialize};

use super::ObstacleCloud;
use crate::dynamics::Vec3;
use crate::error::{Error, Result};

/// Default upper bound on the number of cells a grid may allocate.
pub const DEFAULT_CELL_BUDGET: usize = 64_000_000;

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        Some(it.fold(Self::new(first, first), |b, p| Self::new(b.min.inf(p), b.max.sup(p))))
    }

    pub fn expanded(&self, margin: f64) -> Self {
        Self::new(self.min.add_scalar(-margin), self.max.add_scalar(margin))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|i| !(self.max[i] > self.min[i]))
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        (0..3)
            .map(|i| {
                let d = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
                d * d
            })
            .sum()
    }
}

/// Dense occupancy grid stored as a bitset.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    bits: Vec<u64>,
}

impl VoxelGrid {
    /// Empty grid covering `bounds`.
    pub fn empty(bounds: Aabb, resolution: f64, cell_budget: usize) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidArgument("resolution must be positive".into()));
        }
        if bounds.is_degenerate() {
            return Err(Error::InvalidArgument("grid bounds are degenerate".into()));
        }
        let ext = bounds.max - bounds.min;
        let dims = [0, 1, 2].map(|i| ((ext[i] / resolution).ceil() as usize).max(1));
        let cells = dims.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d));
        match cells {
            Some(c) if c <= cell_budget => Ok(Self {
                origin: bounds.min,
                resolution,
                dims,
                bits: vec![0; c.div_ceil(64)],
            }),
            _ => Err(Error::ResourceLimit(format!(
                "grid of {}x{}x{} cells exceeds budget of {cell_budget}",
                dims[0], dims[1], dims[2]
            ))),
        }
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> Aabb {
        let ext = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.resolution;
        Aabb::new(self.origin, self.origin + ext)
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Integer cell coordinates of `p`; may lie outside the grid.
    pub fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|i| ((p[i] - self.origin[i]) / self.resolution).floor() as i64)
    }

    pub fn in_bounds(&self, c: [i64; 3]) -> bool {
        (0..3).all(|i| c[i] >= 0 && (c[i] as usize) < self.dims[i])
    }

    pub fn cell_center(&self, c: [i64; 3]) -> Vec3 {
        Vec3::new(
            self.origin.x + (c[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (c[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (c[2] as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_box(&self, c: [i64; 3]) -> Aabb {
        let min = self.origin + Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.resolution;
        Aabb::new(min, min.add_scalar(self.resolution))
    }

    #[inline]
    pub fn linear_index(&self, c: [i64; 3]) -> usize {
        (c[2] as usize * self.dims[1] + c[1] as usize) * self.dims[0] + c[0] as usize
    }

    /// Occupancy of a cell; cells outside the grid are free.
    #[inline]
    pub fn is_occupied_cell(&self, c: [i64; 3]) -> bool {
        if !self.in_bounds(c) {
            return false;
        }
        let i = self.linear_index(c);
        self.bits[i >> 6] >> (i & 63) & 1 == 1
    }

    pub fn set_occupied(&mut self, c: [i64; 3]) {
        if self.in_bounds(c) {
            let i = self.linear_index(c);
            self.bits[i >> 6] |= 1 << (i & 63);
        }
    }

    pub fn clear_cell(&mut self, c: [i64; 3]) {
        if self.in_bounds(c) {
            let i = self.linear_index(c);
            self.bits[i >> 6] &= !(1 << (i & 63));
        }
    }

    pub fn is_free(&self, p: &Vec3) -> bool {
        !self.is_occupied_cell(self.cell_of(p))
    }

    /// Copy of the part of this grid covering `bounds`, on the same lattice.
    /// Cells outside this grid are free in the copy.
    pub fn window(&self, bounds: &Aabb, cell_budget: usize) -> Result<VoxelGrid> {
        let lo = self.cell_of(&bounds.min);
        let hi = self.cell_of(&bounds.max);
        let min = self.cell_box(lo).min;
        let max = self.cell_box(hi).max;
        let mut out = VoxelGrid::empty(Aabb::new(min, max), self.resolution, cell_budget)?;
        let d = out.dims;
        for z in 0..d[2] as i64 {
            for y in 0..d[1] as i64 {
                for x in 0..d[0] as i64 {
                    if self.is_occupied_cell([lo[0] + x, lo[1] + y, lo[2] + z]) {
                        out.set_occupied([x, y, z]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Marks the cell containing `center` and every cell whose closest point
    /// lies strictly within `radius` of it.
    pub fn mark_ball(&mut self, center: &Vec3, radius: f64) {
        let c = self.cell_of(center);
        self.set_occupied(c);
        if radius <= 0.0 {
            return;
        }
        let r_cells = (radius / self.resolution).ceil() as i64 + 1;
        let r2 = radius * radius;
        for dz in -r_cells..=r_cells {
            for dy in -r_cells..=r_cells {
                for dx in -r_cells..=r_cells {
                    let cell = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if !self.in_bounds(cell) {
                        continue;
                    }
                    if self.cell_box(cell).distance_sq(center) < r2 {
                        self.set_occupied(cell);
                    }
                }
            }
        }
    }

    /// Visits every cell the segment `a -> b` passes through, inside the grid,
    /// in order. Stops early when `visit` returns `false`.
    pub fn traverse(&self, a: &Vec3, b: &Vec3, mut visit: impl FnMut([i64; 3]) -> bool) {
        let d = b - a;
        let bounds = self.bounds();
        // clip to the grid box
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if a[i] < bounds.min[i] || a[i] > bounds.max[i] {
                    return;
                }
            } else {
                let ta = (bounds.min[i] - a[i]) / d[i];
                let tb = (bounds.max[i] - a[i]) / d[i];
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        if t0 > t1 {
            return;
        }
        let clamp_cell = |p: Vec3| -> [i64; 3] {
            let c = self.cell_of(&p);
            [0, 1, 2].map(|i| c[i].clamp(0, self.dims[i] as i64 - 1))
        };
        let start = a + d * t0;
        let mut cell = clamp_cell(start);
        let end = clamp_cell(a + d * t1);

        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            if d[i] > 1e-15 {
                step[i] = 1;
                let boundary = self.origin[i] + (cell[i] + 1) as f64 * self.resolution;
                t_max[i] = (boundary - a[i]) / d[i];
                t_delta[i] = self.resolution / d[i];
            } else if d[i] < -1e-15 {
                step[i] = -1;
                let boundary = self.origin[i] + cell[i] as f64 * self.resolution;
                t_max[i] = (boundary - a[i]) / d[i];
                t_delta[i] = -self.resolution / d[i];
            }
        }
        let max_steps = self.dims.iter().sum::<usize>() + 3;
        for _ in 0..max_steps {
            if !visit(cell) || cell == end {
                return;
            }
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[axis] > t1 {
                return;
            }
            cell[axis] += step[axis];
            t_max[axis] += t_delta[axis];
            if !self.in_bounds(cell) {
                return;
            }
        }
    }
}

/// Builds an occupancy grid over `bounds` from the cloud's points (inflated
/// by the cloud's inflation radius) and its dynamic spheres (radius plus
/// inflation).
pub fn voxelize(cloud: &ObstacleCloud, bounds: Aabb, resolution: f64, cell_budget: usize) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::empty(bounds, resolution, cell_budget)?;
    let reach = bounds.expanded(cloud.inflation_radius);
    for p in &cloud.points {
        if reach.contains(p) {
            grid.mark_ball(p, cloud.inflation_radius);
        }
    }
    for s in &cloud.dynamic.spheres {
        let r = s.radius + cloud.inflation_radius;
        if reach.expanded(s.radius).contains(&s.center) {
            grid.mark_ball(&s.center, r);
        }
    }
    Ok(grid)
}

/// True when every grid cell the segment crosses is free. Parts of the
/// segment outside the grid count as free.
pub fn segment_free(grid: &VoxelGrid, a: &Vec3, b: &Vec3) -> bool {
    let mut free = true;
    grid.traverse(a, b, |c| {
        if grid.is_occupied_cell(c) {
            free = false;
        }
        free
    });
    free
}
