//! Shot-quality and safety measures computed from the simulated motion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{normalize_angle, Vec3};
use crate::formation::{optical_axis, virtual_target, LightingSpec};

/// Removes `2 pi` jumps between consecutive samples.
pub fn unwrap_series(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut offset = 0.0;
    for (i, &a) in series.iter().enumerate() {
        if i > 0 {
            let d = a - series[i - 1];
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(a + offset);
    }
    out
}

/// Root mean square of the third derivative of an angle series sampled
/// every `dt`, using the five-point central difference on the unwrapped
/// series. Returns 0 for series shorter than five samples.
pub fn rms_jerk(series: &[f64], dt: f64) -> f64 {
    let x = unwrap_series(series);
    if x.len() < 5 {
        return 0.0;
    }
    let d3 = 2.0 * dt * dt * dt;
    let sum: f64 = (2..x.len() - 2)
        .map(|i| {
            let j = (x[i + 2] - 2.0 * x[i + 1] + 2.0 * x[i - 1] - x[i - 2]) / d3;
            j * j
        })
        .sum();
    (sum / (x.len() - 4) as f64).sqrt()
}

/// Signed distance from `p` to the camera's viewing pyramid: apex at
/// `camera`, axis along heading/pitch, half-angles `fov_h` (horizontal) and
/// `fov_v` (vertical), unbounded depth. Positive outside, negative inside.
pub fn fov_distance(p: &Vec3, camera: &Vec3, heading: f64, pitch: f64, fov_h: f64, fov_v: f64) -> f64 {
    let f = optical_axis(heading, pitch);
    let l = Vec3::new(-heading.sin(), heading.cos(), 0.0);
    let u = f.cross(&l);
    let d = p - camera;
    let q = Vec3::new(f.dot(&d), l.dot(&d), u.dot(&d));

    let (sh, ch) = fov_h.sin_cos();
    let (sv, cv) = fov_v.sin_cos();
    let faces = [
        Vec3::new(-sh, ch, 0.0),
        Vec3::new(-sh, -ch, 0.0),
        Vec3::new(-sv, 0.0, cv),
        Vec3::new(-sv, 0.0, -cv),
    ];
    let inside = |x: &Vec3| faces.iter().all(|n| n.dot(x) <= 1e-12);
    if inside(&q) {
        return faces.iter().map(|n| n.dot(&q)).fold(f64::NEG_INFINITY, f64::max);
    }
    // projection onto the cone lies on a face, an edge ray, or the apex
    let mut best = q.norm();
    for n in &faces {
        let c = q - n * n.dot(&q);
        if inside(&c) {
            best = best.min((q - c).norm());
        }
    }
    let (th, tv) = (fov_h.tan(), fov_v.tan());
    for (sy, sz) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let e = Vec3::new(1.0, sy * th, sz * tv).normalize();
        let t = e.dot(&q);
        if t > 0.0 {
            best = best.min((q - e * t).norm());
        }
    }
    best
}

/// Deviation of a light's actual placement from its desired lighting
/// angles, measured around the virtual target of the current camera pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightingDeviation {
    pub heading: f64,
    pub pitch: f64,
}

pub fn lighting_deviation(
    light: &Vec3,
    camera: &Vec3,
    cam_heading: f64,
    cam_pitch: f64,
    spec: &LightingSpec,
    anchor: Option<&Vec3>,
) -> LightingDeviation {
    let v = match anchor {
        Some(a) => *a,
        None => virtual_target(camera, cam_heading, cam_pitch, spec.virtual_distance),
    };
    let w = light - v;
    let norm = w.norm();
    if norm < 1e-9 {
        return LightingDeviation { heading: 0.0, pitch: 0.0 };
    }
    let heading = (-w.y).atan2(-w.x);
    let pitch = (w.z / norm).clamp(-1.0, 1.0).asin();
    LightingDeviation {
        heading: normalize_angle(heading - (cam_heading + spec.chi)),
        pitch: pitch - (cam_pitch + spec.varrho),
    }
}
