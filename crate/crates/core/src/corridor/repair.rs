use serde::{Deserialize, Serialize};

use super::jps::{jps3d, GridPath, JpsOptions};
use crate::dynamics::Vec3;
use crate::error::{Error, Result};
use crate::world::{segment_free, VoxelGrid};

/// Which rung of the repair ladder produced the path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairOutcome {
    /// Every waypoint and segment was free.
    Verbatim,
    /// Colliding runs were bridged between free waypoints.
    Detoured,
    /// A bridge failed and the path was connected to the final waypoint.
    ToFinal,
    /// No connection was found; the path ends at the expanded node closest
    /// to the final waypoint.
    Partial,
}

#[derive(Clone, Debug)]
pub struct Repair {
    pub path: GridPath,
    pub outcome: RepairOutcome,
    pub expansions: usize,
}

pub fn polyline_length(p: &[Vec3]) -> f64 {
    p.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Turns reference waypoints into a collision-free polyline.
pub fn repair_path(waypoints: &[Vec3], grid: &VoxelGrid, opts: &JpsOptions) -> Result<Repair> {
    let Some(first) = waypoints.first() else {
        return Err(Error::InvalidArgument("reference has no waypoints".into()));
    };
    if !grid.is_free(first) {
        return Err(Error::StartOccupied([first.x, first.y, first.z]));
    }
    let n = waypoints.len() - 1;
    let mut out = vec![*first];
    let mut outcome = RepairOutcome::Verbatim;
    let mut expansions = 0;
    let append = |out: &mut Vec<Vec3>, path: &GridPath| {
        for p in &path.waypoints[1..] {
            if (p - out.last().unwrap()).norm() > 1e-9 {
                out.push(*p);
            }
        }
    };

    let mut k = 1;
    while k <= n {
        let last = *out.last().unwrap();
        let w = waypoints[k];
        if grid.is_free(&w) && segment_free(grid, &last, &w) {
            out.push(w);
            k += 1;
            continue;
        }
        let next_free = (k..=n).find(|&j| grid.is_free(&waypoints[j]));
        let mut partial = None;
        if let Some(b) = next_free {
            match jps3d(grid, &last, &waypoints[b], opts) {
                Ok(path) => {
                    expansions += path.expansions;
                    append(&mut out, &path);
                    outcome = outcome.max(RepairOutcome::Detoured);
                    k = b + 1;
                    continue;
                }
                Err((fail, p)) => {
                    expansions += fail.expansions;
                    if b == n {
                        partial = p;
                    }
                }
            }
        }
        if partial.is_none() {
            match jps3d(grid, &last, &waypoints[n], opts) {
                Ok(path) => {
                    expansions += path.expansions;
                    append(&mut out, &path);
                    outcome = outcome.max(RepairOutcome::ToFinal);
                    break;
                }
                Err((fail, p)) => {
                    expansions += fail.expansions;
                    partial = p;
                }
            }
        }
        if let Some(p) = partial {
            append(&mut out, &p);
        }
        outcome = RepairOutcome::Partial;
        break;
    }
    let cost = polyline_length(&out);
    Ok(Repair { path: GridPath { waypoints: out, cost, expansions }, outcome, expansions })
}

/// Places `d.len() - 1` points along the polyline `p`.
///
/// Point `k` sits at arc length `min(target_k, s_{k-1} + d_s_max)`, where
/// `target_k` is the reference's cumulative arc length up to waypoint `k`,
/// rescaled to the length of `p` when `p` ends at the reference's final
/// waypoint. Positions are clamped to the end of `p`.
pub fn resample(p: &[Vec3], d: &[Vec3], d_s_max: f64) -> Vec<Vec3> {
    assert!(!p.is_empty(), "resample needs a non-empty path");
    let n = d.len().saturating_sub(1);
    let lp = polyline_length(p);
    let ld = polyline_length(d);
    let reaches_end = d.last().is_some_and(|e| (p.last().unwrap() - e).norm() <= 1e-6);
    let scale = if reaches_end && ld > 1e-12 { lp / ld } else { 1.0 };
    let mut out = Vec::with_capacity(n);
    let mut cum_d = 0.0;
    let mut s = 0.0;
    for k in 1..=n {
        cum_d += (d[k] - d[k - 1]).norm();
        s = (cum_d * scale).min(s + d_s_max).min(lp);
        out.push(point_at(p, s));
    }
    out
}

/// Point at arc length `s` along the polyline.
pub fn point_at(p: &[Vec3], s: f64) -> Vec3 {
    let mut acc = 0.0;
    for w in p.windows(2) {
        let len = (w[1] - w[0]).norm();
        if acc + len >= s && len > 0.0 {
            return w[0] + (w[1] - w[0]) * ((s - acc) / len).clamp(0.0, 1.0);
        }
        acc += len;
    }
    *p.last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Aabb, VoxelGrid};
    use approx::assert_relative_eq;

    fn open_grid() -> VoxelGrid {
        VoxelGrid::empty(Aabb::new(Vec3::new(-1.0, -10.0, 0.0), Vec3::new(41.0, 10.0, 6.0)), 0.25, 1 << 24).unwrap()
    }

    fn line(n: usize, step: f64) -> Vec<Vec3> {
        (0..=n).map(|k| Vec3::new(k as f64 * step, 0.0, 2.0)).collect()
    }

    #[test]
    fn free_reference_is_copied() {
        let d = line(40, 0.3);
        let r = repair_path(&d, &open_grid(), &JpsOptions::default()).unwrap();
        assert_eq!(r.outcome, RepairOutcome::Verbatim);
        assert_eq!(r.path.waypoints, d);
    }

    #[test]
    fn blocked_run_is_bridged() {
        let mut g = open_grid();
        // a post across the reference at x = 5
        for z in 0..24 {
            for y in -4..4 {
                g.set_occupied([24, 40 + y, z]);
            }
        }
        let d = line(40, 0.3);
        let r = repair_path(&d, &g, &JpsOptions::default()).unwrap();
        assert_eq!(r.outcome, RepairOutcome::Detoured);
        for w in r.path.waypoints.windows(2) {
            assert!(segment_free(&g, &w[0], &w[1]));
        }
        assert_relative_eq!(*r.path.waypoints.last().unwrap(), d[40]);
    }

    #[test]
    fn occupied_start_is_an_error() {
        let mut g = open_grid();
        let d = line(4, 0.3);
        let c = g.cell_of(&d[0]);
        g.set_occupied(c);
        assert!(matches!(repair_path(&d, &g, &JpsOptions::default()), Err(Error::StartOccupied(_))));
    }

    #[test]
    fn resample_identity_when_steps_are_short() {
        let d = line(40, 0.3);
        let out = resample(&d, &d, 0.5);
        assert_eq!(out.len(), 40);
        for (a, b) in out.iter().zip(&d[1..]) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn resample_limits_spacing() {
        let d = line(40, 1.0);
        let out = resample(&d, &d, 0.5);
        for (k, p) in out.iter().enumerate() {
            assert_relative_eq!(p.x, 0.5 * (k + 1) as f64, epsilon = 1e-9);
        }
        assert_relative_eq!(out[39].x, 20.0, epsilon = 1e-9);
    }

    #[test]
    fn resample_saturates_on_short_path() {
        let d = line(10, 0.4);
        let p = vec![d[0], Vec3::new(1.0, 0.0, 2.0)];
        let out = resample(&p, &d, 0.5);
        assert_relative_eq!(out[9], Vec3::new(1.0, 0.0, 2.0), epsilon = 1e-12);
        assert_relative_eq!(out[1], Vec3::new(0.8, 0.0, 2.0), epsilon = 1e-12);
    }
}
