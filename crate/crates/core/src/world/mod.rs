//! Obstacle map: point clouds, dynamic spheres and voxel occupancy.

mod generators;
mod index;
mod voxel;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Trajectory, Vec3};
use crate::error::{Error, Result};

pub use generators::ObstacleSource;
pub use index::PointIndex;
pub use voxel::{segment_free, voxelize, Aabb, VoxelGrid, DEFAULT_CELL_BUDGET};

/// Spherical obstacle, used for teammate plans and the predicted target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    /// Horizon step from which the sphere is meaningful. Only consulted by
    /// time-aware consumers; snapshot planning treats every sphere as present.
    pub valid_from_step: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacleSet {
    pub spheres: Vec<Sphere>,
}

impl DynamicObstacleSet {
    /// Adds a sphere unless an identical one (center within 1e-6, same radius)
    /// is already present. Returns whether it was added.
    pub fn insert(&mut self, sphere: Sphere) -> bool {
        let dup = self.spheres.iter().any(|s| {
            (s.center - sphere.center).amax() <= 1e-6 && (s.radius - sphere.radius).abs() <= 1e-12
        });
        if !dup {
            self.spheres.push(sphere);
        }
        !dup
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }
}

/// The obstacle map as a set of points plus dynamic spheres.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObstacleCloud {
    pub points: Vec<Vec3>,
    /// Safety inflation applied when voxelizing.
    pub inflation_radius: f64,
    #[serde(default)]
    pub dynamic: DynamicObstacleSet,
}

impl ObstacleCloud {
    pub fn new(points: Vec<Vec3>, inflation_radius: f64) -> Result<Self> {
        if !(inflation_radius >= 0.0) {
            return Err(Error::InvalidArgument("inflation radius must be non-negative".into()));
        }
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidArgument("obstacle points must be finite".into()));
        }
        Ok(Self { points, inflation_radius, dynamic: DynamicObstacleSet::default() })
    }

    /// Reads whitespace-separated `x y z` lines. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn read_xyz(path: impl AsRef<Path>) -> Result<Vec<Vec3>> {
        let text = std::fs::read_to_string(path.as_ref())?;
        parse_xyz(&text)
    }
}

pub fn parse_xyz(text: &str) -> Result<Vec<Vec3>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Scenario(format!("point cloud line {}: {e}", lineno + 1)))?;
        if vals.len() != 3 || !vals.iter().all(|v| v.is_finite()) {
            return Err(Error::Scenario(format!("point cloud line {}: expected 3 finite values", lineno + 1)));
        }
        points.push(Vec3::new(vals[0], vals[1], vals[2]));
    }
    Ok(points)
}

/// Returns a copy of `cloud` with one sphere of `radius` at every waypoint of
/// every trajectory. The source cloud is left untouched.
pub fn inject_teammates(cloud: &ObstacleCloud, trajectories: &[&Trajectory], radius: f64) -> ObstacleCloud {
    let mut out = cloud.clone();
    for traj in trajectories {
        for (k, s) in traj.states.iter().enumerate() {
            out.dynamic.insert(Sphere { center: s.p, radius, valid_from_step: k });
        }
    }
    out
}

/// Returns a copy of `cloud` with spheres at the given positions, e.g. the
/// predicted target path.
pub fn inject_path(cloud: &ObstacleCloud, centers: &[Vec3], radius: f64) -> ObstacleCloud {
    let mut out = cloud.clone();
    for (k, c) in centers.iter().enumerate() {
        out.dynamic.insert(Sphere { center: *c, radius, valid_from_step: k });
    }
    out
}
