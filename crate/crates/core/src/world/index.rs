use std::collections::HashMap;

use super::Aabb;
use crate::dynamics::Vec3;

/// Uniform hash grid over a static point set for local range queries.
#[derive(Clone, Debug)]
pub struct PointIndex {
    cell: f64,
    points: Vec<Vec3>,
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl PointIndex {
    pub fn new(points: Vec<Vec3>, cell: f64) -> Self {
        assert!(cell > 0.0, "index cell size must be positive");
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(key(p, cell)).or_default().push(i as u32);
        }
        Self { cell, points, buckets }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of all points inside `b`, ascending.
    pub fn in_box(&self, b: &Aabb) -> Vec<usize> {
        let lo = key(&b.min, self.cell);
        let hi = key(&b.max, self.cell);
        let span = (0..3).map(|i| (hi[i] - lo[i] + 1) as u64).product::<u64>();
        let mut out = Vec::new();
        if span > 4 * self.buckets.len() as u64 {
            // sparse index relative to the box: scan buckets instead
            for (k, ids) in &self.buckets {
                if (0..3).all(|i| k[i] >= lo[i] && k[i] <= hi[i]) {
                    out.extend(ids.iter().map(|&i| i as usize).filter(|&i| b.contains(&self.points[i])));
                }
            }
        } else {
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        if let Some(ids) = self.buckets.get(&[x, y, z]) {
                            out.extend(ids.iter().map(|&i| i as usize).filter(|&i| b.contains(&self.points[i])));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Distance to the nearest point within `radius` of `p`, if any.
    pub fn nearest_within(&self, p: &Vec3, radius: f64) -> Option<(usize, f64)> {
        let b = Aabb::new(p.add_scalar(-radius), p.add_scalar(radius));
        self.in_box(&b)
            .into_iter()
            .map(|i| (i, (self.points[i] - p).norm()))
            .filter(|&(_, d)| d <= radius)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }
}

fn key(p: &Vec3, cell: f64) -> [i64; 3] {
    [0, 1, 2].map(|i| (p[i] / cell).floor() as i64)
}
