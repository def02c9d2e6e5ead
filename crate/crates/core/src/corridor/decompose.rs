use nalgebra::{Matrix3, Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::dynamics::Vec3;
use crate::error::{Error, Result};
use crate::world::Aabb;

/// Half-space `normal . x <= offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub offset: f64,
}

impl HalfSpace {
    pub fn violation(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Convex polyhedron as an intersection of half-spaces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    pub halfspaces: Vec<HalfSpace>,
}

impl Polyhedron {
    /// Largest face violation at `p`; non-positive inside.
    pub fn max_violation(&self, p: &Vec3) -> f64 {
        self.halfspaces.iter().map(|h| h.violation(p)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.max_violation(p) <= tol
    }

    /// True when some face separates the whole ball from the polyhedron.
    pub fn excludes_ball(&self, c: &Vec3, r: f64) -> bool {
        self.halfspaces.iter().any(|h| h.normal.dot(c) - r >= h.offset - 1e-9)
    }
}

/// Obstacle used in a decomposition: a point (`radius` 0) or a ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeOptions {
    /// Half-extents of the local bounding box around the segment midpoint.
    pub bbox_limit: Vec3,
    /// Clearance kept between the polyhedron and every obstacle.
    pub vehicle_radius: f64,
    /// Segments shorter than this are seeded with a sphere of this radius.
    pub min_segment: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self { bbox_limit: Vec3::new(4.0, 4.0, 2.0), vehicle_radius: 0.5, min_segment: 0.25 }
    }
}

/// Extra room kept around the segment inside the bounding box.
const BOX_MARGIN: f64 = 0.1;

/// Local bounding box of the segment before shrinking.
pub fn segment_box(a: &Vec3, b: &Vec3, opts: &DecomposeOptions) -> Aabb {
    let mid = (a + b) * 0.5;
    let half = Vec3::from_fn(|i, _| opts.bbox_limit[i].max((b[i] - a[i]).abs() * 0.5 + opts.vehicle_radius + BOX_MARGIN));
    Aabb::new(mid - half, mid + half)
}

pub fn closest_on_segment(a: &Vec3, b: &Vec3, p: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= 0.0 {
        return *a;
    }
    a + ab * ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
}

/// Obstacle-free polyhedron around the segment `a -> b`.
///
/// `obstacles` should already be restricted to the neighborhood of the
/// segment (anything not touching [`segment_box`] is ignored anyway). The
/// result keeps `vehicle_radius` of clearance from every obstacle ball.
pub fn decompose(a: &Vec3, b: &Vec3, obstacles: &[Ball], opts: &DecomposeOptions) -> Result<Polyhedron> {
    let r_v = opts.vehicle_radius;
    let bbox = segment_box(a, b, opts);
    let mut work: Vec<(usize, Ball)> = obstacles
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, o)| bbox.distance_sq(&o.center) < o.radius * o.radius || bbox.contains(&o.center))
        .collect();

    for (_, o) in &work {
        let gap = (closest_on_segment(a, b, &o.center) - o.center).norm() - o.radius;
        if gap < r_v {
            return Err(Error::InfeasibleSegment { clearance: gap });
        }
    }

    let (center, shape_inv) = seed_ellipsoid(a, b, &work, opts.min_segment);

    let mut halfspaces = Vec::new();
    while !work.is_empty() {
        // nearest remaining obstacle in the ellipsoid metric, lowest index on ties
        let (pos, _) = work
            .iter()
            .enumerate()
            .map(|(i, (idx, o))| (i, ((shape_inv * (o.center - center)).norm(), *idx)))
            .min_by(|x, y| x.1 .0.total_cmp(&y.1 .0).then(x.1 .1.cmp(&y.1 .1)))
            .expect("work set is non-empty");
        let o = work[pos].1;
        let grad = shape_inv.transpose() * shape_inv * (o.center - center);
        let mut plane = None;
        if grad.norm() > 1e-12 {
            let n = grad.normalize();
            let off = n.dot(&o.center) - o.radius;
            if n.dot(a) <= off - r_v && n.dot(b) <= off - r_v {
                plane = Some(HalfSpace { normal: n, offset: off });
            }
        }
        let plane = plane.unwrap_or_else(|| {
            // tangent plane at the obstacle as seen from the segment
            let s = closest_on_segment(a, b, &o.center);
            let n = (o.center - s).normalize();
            HalfSpace { normal: n, offset: n.dot(&o.center) - o.radius }
        });
        work.retain(|(_, q)| plane.normal.dot(&q.center) - q.radius < plane.offset - 1e-12);
        halfspaces.push(plane);
    }

    for i in 0..3 {
        let mut n = Vec3::zeros();
        n[i] = 1.0;
        halfspaces.push(HalfSpace { normal: n, offset: bbox.max[i] });
        halfspaces.push(HalfSpace { normal: -n, offset: -bbox.min[i] });
    }
    for h in &mut halfspaces {
        h.offset -= r_v;
    }
    Ok(Polyhedron { halfspaces })
}

/// Segment-aligned spheroid whose minor axes are shrunk until no obstacle
/// center lies inside. Returns its center and the inverse of its shape
/// matrix (mapping the ellipsoid to the unit ball).
fn seed_ellipsoid(a: &Vec3, b: &Vec3, obstacles: &[(usize, Ball)], min_segment: f64) -> (Vec3, Matrix3<f64>) {
    let center = (a + b) * 0.5;
    let len = (b - a).norm();
    if len < min_segment {
        return (center, Matrix3::identity() / min_segment.max(1e-9));
    }
    let axis = (b - a) / len;
    let rot = Rotation3::rotation_between(&Vec3::x(), &axis)
        .unwrap_or_else(|| Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::z()), std::f64::consts::PI));
    let major = len * 0.5;
    let mut minor = major;
    for (_, o) in obstacles {
        let local = rot.inverse() * (o.center - center);
        let t = (local.x / major).powi(2);
        if t < 1.0 {
            let perp2 = local.y * local.y + local.z * local.z;
            let needed = (perp2 / (1.0 - t)).sqrt();
            if needed < minor {
                minor = needed;
            }
        }
    }
    let minor = minor.max(1e-6);
    let inv_axes = Matrix3::from_diagonal(&Vec3::new(1.0 / major, 1.0 / minor, 1.0 / minor));
    (center, inv_axes * rot.inverse().matrix())
}
