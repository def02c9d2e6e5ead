use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::parse_xyz;
use crate::dynamics::{Vec2, Vec3};
use crate::error::{Error, Result};

/// Planar strip kept free of trees, e.g. along the target's path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearStrip {
    pub from: Vec2,
    pub to: Vec2,
    pub half_width: f64,
}

/// Obstacle primitives accepted in scenario files, expanded to points at load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObstacleSource {
    Points {
        points: Vec<Vec3>,
    },
    /// `x y z` text file, relative paths resolved against the scenario file.
    File {
        path: String,
    },
    /// Straight run of points, e.g. a cable.
    Line {
        from: Vec3,
        to: Vec3,
        spacing: f64,
    },
    /// Lattice tower: four tapering legs, horizontal rings and X bracing.
    Tower {
        base: Vec3,
        base_half_width: f64,
        top_half_width: f64,
        height: f64,
        levels: usize,
        spacing: f64,
    },
    /// Jittered grid of vertical trunks.
    TreeGrid {
        min: Vec2,
        max: Vec2,
        spacing: f64,
        jitter: f64,
        trunk_radius: f64,
        height: f64,
        #[serde(default)]
        clear: Vec<ClearStrip>,
        seed: u64,
        #[serde(default = "default_point_spacing")]
        point_spacing: f64,
    },
}

fn default_point_spacing() -> f64 {
    0.25
}

impl ObstacleSource {
    pub fn expand(&self, base_dir: Option<&Path>) -> Result<Vec<Vec3>> {
        match self {
            ObstacleSource::Points { points } => Ok(points.clone()),
            ObstacleSource::File { path } => {
                let p = match base_dir {
                    Some(dir) if Path::new(path).is_relative() => dir.join(path),
                    _ => Path::new(path).to_path_buf(),
                };
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Scenario(format!("reading {}: {e}", p.display())))?;
                parse_xyz(&text)
            }
            ObstacleSource::Line { from, to, spacing } => {
                check_positive("spacing", *spacing)?;
                Ok(sample_line(from, to, *spacing))
            }
            ObstacleSource::Tower { base, base_half_width, top_half_width, height, levels, spacing } => {
                check_positive("spacing", *spacing)?;
                check_positive("height", *height)?;
                Ok(tower(base, *base_half_width, *top_half_width, *height, (*levels).max(1), *spacing))
            }
            ObstacleSource::TreeGrid { min, max, spacing, jitter, trunk_radius, height, clear, seed, point_spacing } => {
                check_positive("spacing", *spacing)?;
                check_positive("point_spacing", *point_spacing)?;
                Ok(trees(min, max, *spacing, *jitter, clear, *seed)
                    .into_iter()
                    .flat_map(|c| trunk(&c, *trunk_radius, *height, *point_spacing))
                    .collect())
            }
        }
    }

    /// Trunk base positions of a tree grid; empty for other sources.
    pub fn tree_positions(&self) -> Vec<Vec2> {
        match self {
            ObstacleSource::TreeGrid { min, max, spacing, jitter, clear, seed, .. } => {
                trees(min, max, *spacing, *jitter, clear, *seed)
            }
            _ => Vec::new(),
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Scenario(format!("obstacle generator: {name} must be positive")))
    }
}

fn sample_line(a: &Vec3, b: &Vec3, spacing: f64) -> Vec<Vec3> {
    let n = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
    (0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect()
}

fn tower(base: &Vec3, w0: f64, w1: f64, height: f64, levels: usize, spacing: f64) -> Vec<Vec3> {
    let corners = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    let ring = |level: usize| -> Vec<Vec3> {
        let s = level as f64 / levels as f64;
        let w = w0 + (w1 - w0) * s;
        corners.iter().map(|(x, y)| base + Vec3::new(x * w, y * w, s * height)).collect()
    };
    let mut pts = Vec::new();
    for level in 0..levels {
        let lo = ring(level);
        let hi = ring(level + 1);
        for c in 0..4 {
            let n = (c + 1) % 4;
            pts.extend(sample_line(&lo[c], &hi[c], spacing));
            pts.extend(sample_line(&hi[c], &hi[n], spacing));
            pts.extend(sample_line(&lo[c], &hi[n], spacing));
            pts.extend(sample_line(&lo[n], &hi[c], spacing));
        }
    }
    pts
}

fn trees(min: &Vec2, max: &Vec2, spacing: f64, jitter: f64, clear: &[ClearStrip], seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = ((max.x - min.x) / spacing).floor() as usize + 1;
    let ny = ((max.y - min.y) / spacing).floor() as usize + 1;
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let jx = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
            let jy = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
            let c = Vec2::new(min.x + i as f64 * spacing + jx, min.y + j as f64 * spacing + jy);
            if clear.iter().all(|s| point_segment_distance_2d(&c, &s.from, &s.to) > s.half_width) {
                out.push(c);
            }
        }
    }
    out
}

fn trunk(c: &Vec2, radius: f64, height: f64, spacing: f64) -> Vec<Vec3> {
    let rings = (height / spacing).ceil() as usize;
    let around = if radius > 0.0 { ((TAU * radius / spacing).ceil() as usize).max(4) } else { 1 };
    let mut pts = Vec::with_capacity((rings + 1) * around);
    for r in 0..=rings {
        let z = height * r as f64 / rings as f64;
        for k in 0..around {
            let a = TAU * k as f64 / around as f64;
            pts.push(Vec3::new(c.x + radius * a.cos(), c.y + radius * a.sin(), z));
        }
    }
    pts
}

pub(crate) fn point_segment_distance_2d(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm()
}
