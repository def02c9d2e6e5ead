//! Lighting formation: follower references derived from the camera pose.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::dynamics::{HorizonConfig, OriPlan, PosInput, PosState, Trajectory, Vec3};
use crate::error::{Error, Result};

/// Desired placement of one light relative to the camera's optical axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightingSpec {
    /// Heading offset from the optical axis, radians.
    pub chi: f64,
    /// Pitch offset from the optical axis, radians.
    pub varrho: f64,
    /// Light-to-target distance.
    pub distance: f64,
    /// Distance of the virtual target along the optical axis.
    pub virtual_distance: f64,
}

impl Default for LightingSpec {
    fn default() -> Self {
        Self { chi: 0.0, varrho: 0.0, distance: 6.0, virtual_distance: 5.0 }
    }
}

impl LightingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi.is_finite() && self.varrho.is_finite()) {
            return Err(Error::InvalidArgument("lighting angles must be finite".into()));
        }
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return Err(Error::InvalidArgument("light distance must be positive".into()));
        }
        if !(self.virtual_distance > 0.0 && self.virtual_distance.is_finite()) {
            return Err(Error::InvalidArgument("virtual target distance must be positive".into()));
        }
        Ok(())
    }
}

/// Unit vector of the optical axis for heading `phi` and pitch `xi`.
pub fn optical_axis(phi: f64, xi: f64) -> Vec3 {
    Vec3::new(phi.cos() * xi.cos(), phi.sin() * xi.cos(), xi.sin())
}

/// Point at distance `d_v` along the camera's optical axis.
pub fn virtual_target(p_l: &Vec3, phi_l: f64, xi_l: f64, d_v: f64) -> Vec3 {
    p_l + optical_axis(phi_l, xi_l) * d_v
}

/// Desired light position around `anchor` (the virtual or true target).
pub fn light_position(anchor: &Vec3, phi_l: f64, xi_l: f64, spec: &LightingSpec) -> Vec3 {
    let phi = phi_l + spec.chi;
    let xi = xi_l + spec.varrho;
    anchor + Vec3::new(-phi.cos() * xi.cos(), -phi.sin() * xi.cos(), xi.sin()) * spec.distance
}

/// Follower reference over the horizon starting at `t0`.
///
/// The leader's plans are evaluated at the follower's sample times; times
/// past the end of the leader plan extrapolate the position at its terminal
/// velocity and hold the terminal orientation. With `raw_target` set the
/// formation is anchored on those target positions instead of the virtual
/// target.
pub fn follower_reference(
    t0: f64,
    leader_plan: &Trajectory,
    leader_ori: &OriPlan,
    spec: &LightingSpec,
    hz: &HorizonConfig,
    raw_target: Option<&[Vec3]>,
) -> Result<Trajectory> {
    spec.validate()?;
    let n = hz.n;
    let dt = hz.dt;
    if let Some(t) = raw_target {
        if t.len() != n + 1 {
            return Err(Error::InvalidArgument("raw target path must have n + 1 samples".into()));
        }
    }
    let end = leader_plan.end_time().min(leader_ori.t0 + leader_ori.dt * leader_ori.inputs.len() as f64);
    if t0 + n as f64 * dt > end + 1e-9 {
        debug!("follower horizon extends {:.2} s past the leader plan", t0 + n as f64 * dt - end);
    }
    let positions: Vec<Vec3> = (0..=n)
        .map(|k| {
            let t = t0 + k as f64 * dt;
            let p_l = leader_plan.sample(t).p;
            let o = leader_ori.sample(t);
            let anchor = match raw_target {
                Some(path) => path[k],
                None => virtual_target(&p_l, o.heading, o.pitch, spec.virtual_distance),
            };
            light_position(&anchor, o.heading, o.pitch, spec)
        })
        .collect();
    Ok(reference_from_positions(t0, &positions, hz))
}

/// Attaches finite-difference velocities and clamped accelerations to a
/// position sequence.
pub fn reference_from_positions(t0: f64, positions: &[Vec3], hz: &HorizonConfig) -> Trajectory {
    let dt = hz.dt;
    let vel = finite_difference(positions, dt);
    let acc = finite_difference(&vel, dt);
    let states = positions.iter().zip(&vel).map(|(p, v)| PosState::new(*p, *v)).collect();
    let inputs = acc[..positions.len() - 1]
        .iter()
        .map(|a| PosInput::new(a.zip_zip_map(&hz.u_min, &hz.u_max, |x, lo, hi| x.clamp(lo, hi))))
        .collect();
    Trajectory { t0, dt, states, inputs }
}

/// Central differences inside, one-sided at the ends.
fn finite_difference(x: &[Vec3], dt: f64) -> Vec<Vec3> {
    let n = x.len();
    if n < 2 {
        return vec![Vec3::zeros(); n];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (x[1] - x[0]) / dt
            } else if k == n - 1 {
                (x[n - 1] - x[n - 2]) / dt
            } else {
                (x[k + 1] - x[k - 1]) / (2.0 * dt)
            }
        })
        .collect()
}
