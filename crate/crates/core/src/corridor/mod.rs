//! Collision-free path repair and safe corridor construction.

mod decompose;
pub mod jps;
mod repair;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::dynamics::Vec3;
use crate::error::{Error, Result};
use crate::world::{PointIndex, Sphere};

pub use decompose::{closest_on_segment, decompose, segment_box, Ball, DecomposeOptions, HalfSpace, Polyhedron};
pub use jps::{jps3d, jps_cells, CellPath, GridPath, JpsFailure, JpsFailureKind, JpsOptions};
pub use repair::{point_at, polyline_length, repair_path, resample, Repair, RepairOutcome};

/// Ordered polyhedra along a path; `polys[k]` encloses the segment from
/// `waypoints[k]` to `waypoints[k + 1]`, i.e. transition point `k + 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SafeCorridor {
    pub waypoints: Vec<Vec3>,
    pub polys: Vec<Polyhedron>,
    /// Dynamic spheres ignored because they already overlapped a segment.
    pub dropped_spheres: usize,
}

impl SafeCorridor {
    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }
}

/// Obstacles seen by the decomposition: static points plus dynamic spheres.
#[derive(Clone, Copy, Debug)]
pub struct ObstacleView<'a> {
    pub points: &'a PointIndex,
    pub spheres: &'a [Sphere],
}

impl ObstacleView<'_> {
    /// Obstacles that can touch the local box of segment `a -> b`, points
    /// first (ascending index) then spheres (input order).
    fn local(&self, a: &Vec3, b: &Vec3, opts: &DecomposeOptions) -> (Vec<Ball>, Vec<Ball>) {
        let bbox = segment_box(a, b, opts);
        let pts = self
            .points
            .in_box(&bbox)
            .into_iter()
            .map(|i| Ball { center: self.points.points()[i], radius: 0.0 })
            .collect();
        let spheres = self
            .spheres
            .iter()
            .filter(|s| bbox.distance_sq(&s.center) < s.radius * s.radius || bbox.contains(&s.center))
            .map(|s| Ball { center: s.center, radius: s.radius })
            .collect();
        (pts, spheres)
    }
}

/// Builds one polyhedron per segment of `waypoints` (current position first).
///
/// A dynamic sphere that already comes within the vehicle radius of a
/// segment is left out of that segment's decomposition and counted in
/// `dropped_spheres`; static points that do so make the corridor infeasible.
pub fn build_corridor(waypoints: &[Vec3], obstacles: &ObstacleView, opts: &DecomposeOptions) -> Result<SafeCorridor> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidArgument("corridor needs at least two waypoints".into()));
    }
    let mut polys = Vec::with_capacity(waypoints.len() - 1);
    let mut dropped = 0;
    for w in waypoints.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (mut local, spheres) = obstacles.local(a, b, opts);
        for s in spheres {
            let gap = (closest_on_segment(a, b, &s.center) - s.center).norm() - s.radius;
            if gap < opts.vehicle_radius {
                dropped += 1;
            } else {
                local.push(s);
            }
        }
        polys.push(decompose(a, b, &local, opts)?);
    }
    if dropped > 0 {
        debug!("corridor ignored {dropped} dynamic spheres overlapping the path");
    }
    Ok(SafeCorridor { waypoints: waypoints.to_vec(), polys, dropped_spheres: dropped })
}

/// Exhaustive check that every polyhedron contains its segment endpoints and
/// keeps `clearance` from every obstacle that could have been used to build
/// it. Returns the number of violations.
pub fn verify_corridor(corridor: &SafeCorridor, obstacles: &ObstacleView, opts: &DecomposeOptions) -> usize {
    let mut bad = 0;
    for (k, poly) in corridor.polys.iter().enumerate() {
        let (a, b) = (&corridor.waypoints[k], &corridor.waypoints[k + 1]);
        if !poly.contains(a, 1e-9) || !poly.contains(b, 1e-9) {
            bad += 1;
        }
        let (pts, spheres) = obstacles.local(a, b, opts);
        for o in pts.iter().chain(spheres.iter()) {
            let gap = (closest_on_segment(a, b, &o.center) - o.center).norm() - o.radius;
            let used = o.radius == 0.0 || gap >= opts.vehicle_radius;
            if used && !poly.excludes_ball(&o.center, o.radius + opts.vehicle_radius) {
                bad += 1;
            }
        }
    }
    bad
}
