//! Simplified vehicle and gimbal models.
//!
//! Both the positional model and the orientation model are double
//! integrators with control held constant over each step. The discrete
//! update used here is the exact solution of the linear system for a
//! piecewise-constant input, so rolled-out states and the condensed QP
//! prediction matrices agree to rounding.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Position and linear velocity of a vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosState {
    pub p: Vec3,
    pub v: Vec3,
}

impl PosState {
    pub fn new(p: Vec3, v: Vec3) -> Self {
        Self { p, v }
    }

    pub fn at_rest(p: Vec3) -> Self {
        Self { p, v: Vec3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Linear acceleration command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosInput {
    pub a: Vec3,
}

impl PosInput {
    pub fn new(a: Vec3) -> Self {
        Self { a }
    }

    pub fn zero() -> Self {
        Self { a: Vec3::zeros() }
    }
}

/// Heading and pitch of a camera or light, with their rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriState {
    pub heading: f64,
    pub pitch: f64,
    pub rates: Vec2,
}

impl OriState {
    pub fn new(heading: f64, pitch: f64) -> Self {
        Self {
            heading: normalize_angle(heading),
            pitch,
            rates: Vec2::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.heading.is_finite() && self.pitch.is_finite() && self.rates.iter().all(|x| x.is_finite())
    }
}

/// Angular acceleration command for heading and pitch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriInput {
    pub theta: Vec2,
}

impl OriInput {
    pub fn zero() -> Self {
        Self { theta: Vec2::zeros() }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let two_pi = 2.0 * PI;
    let wrapped = a - two_pi * ((a - PI) / two_pi).ceil();
    // ceil can land one period off for values a hair above an odd multiple of pi
    if wrapped <= -PI {
        wrapped + two_pi
    } else if wrapped > PI {
        wrapped - two_pi
    } else {
        wrapped
    }
}

/// Returns the representative of `a` (mod 2pi) closest to `reference`.
pub fn unwrap_near(a: f64, reference: f64) -> f64 {
    reference + normalize_angle(a - reference)
}

/// Exact discrete update of the positional double integrator.
pub fn step_pos(x: &PosState, u: &PosInput, dt: f64) -> Result<PosState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !x.is_finite() || !u.a.iter().all(|a| a.is_finite()) {
        return Err(Error::InvalidArgument("non-finite state or input".into()));
    }
    Ok(step_pos_unchecked(x, u, dt))
}

#[inline]
pub(crate) fn step_pos_unchecked(x: &PosState, u: &PosInput, dt: f64) -> PosState {
    PosState {
        p: x.p + x.v * dt + u.a * (0.5 * dt * dt),
        v: x.v + u.a * dt,
    }
}

/// Exact discrete update of the heading/pitch double integrator.
///
/// The heading of the result is wrapped into `(-pi, pi]`.
pub fn step_ori(x: &OriState, u: &OriInput, dt: f64) -> Result<OriState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !x.is_finite() || !u.theta.iter().all(|a| a.is_finite()) {
        return Err(Error::InvalidArgument("non-finite state or input".into()));
    }
    let mut next = step_ori_unwrapped(x, u, dt);
    next.heading = normalize_angle(next.heading);
    Ok(next)
}

#[inline]
pub(crate) fn step_ori_unwrapped(x: &OriState, u: &OriInput, dt: f64) -> OriState {
    OriState {
        heading: x.heading + x.rates.x * dt + 0.5 * u.theta.x * dt * dt,
        pitch: x.pitch + x.rates.y * dt + 0.5 * u.theta.y * dt * dt,
        rates: x.rates + u.theta * dt,
    }
}

/// A timed sequence of `N + 1` states produced by `N` constant inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<PosState>,
    pub inputs: Vec<PosInput>,
}

impl Trajectory {
    /// Number of steps (inputs).
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.dt * self.inputs.len() as f64
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.states.iter().map(|s| s.p)
    }

    /// State at absolute time `t`, integrating within the active step.
    ///
    /// Before `t0` the first state is returned; past the end the last state
    /// is propagated at constant velocity.
    pub fn sample(&self, t: f64) -> PosState {
        let rel = t - self.t0;
        if rel <= 0.0 || self.inputs.is_empty() {
            return self.states[0];
        }
        let n = self.inputs.len();
        let k = ((rel / self.dt).floor() as usize).min(n);
        if k >= n {
            let last = self.states[n];
            let tau = rel - self.dt * n as f64;
            return PosState { p: last.p + last.v * tau, v: last.v };
        }
        let tau = rel - self.dt * k as f64;
        if tau <= 0.0 {
            return self.states[k];
        }
        step_pos_unchecked(&self.states[k], &self.inputs[k], tau)
    }

    /// Largest deviation between consecutive states and the dynamics model.
    pub fn dynamics_residual(&self) -> f64 {
        self.states
            .windows(2)
            .zip(&self.inputs)
            .map(|(w, u)| {
                let next = step_pos_unchecked(&w[0], u, self.dt);
                (next.p - w[1].p).amax().max((next.v - w[1].v).amax())
            })
            .fold(0.0, f64::max)
    }
}

/// Rolls the positional model forward from `x0` under `inputs`.
pub fn rollout(x0: &PosState, inputs: &[PosInput], dt: f64) -> Result<Trajectory> {
    rollout_at(0.0, x0, inputs, dt)
}

/// Same as [`rollout`] with an explicit start time.
pub fn rollout_at(t0: f64, x0: &PosState, inputs: &[PosInput], dt: f64) -> Result<Trajectory> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("rollout needs at least one input".into()));
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(*x0);
    for u in inputs {
        let next = step_pos(states.last().unwrap(), u, dt)?;
        states.push(next);
    }
    Ok(Trajectory { t0, dt, states, inputs: inputs.to_vec() })
}

/// Timed orientation plan; `states.len() == inputs.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriPlan {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<OriState>,
    pub inputs: Vec<OriInput>,
}

impl OriPlan {
    /// Holds `x` with zero rates for `n` steps.
    pub fn hold(t0: f64, dt: f64, x: OriState, n: usize) -> Self {
        let held = OriState { rates: Vec2::zeros(), ..x };
        Self { t0, dt, states: vec![held; n + 1], inputs: vec![OriInput::zero(); n] }
    }

    /// Orientation at absolute time `t`; heading wrapped.
    pub fn sample(&self, t: f64) -> OriState {
        let rel = t - self.t0;
        let n = self.inputs.len();
        if rel <= 0.0 || n == 0 {
            return self.states[0];
        }
        let k = ((rel / self.dt).floor() as usize).min(n);
        if k >= n {
            return self.states[n];
        }
        let tau = rel - self.dt * k as f64;
        let mut s = step_ori_unwrapped(&self.states[k], &self.inputs[k], tau);
        s.heading = normalize_angle(s.heading);
        s
    }
}

/// Receding-horizon discretization and actuator limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorizonConfig {
    /// Number of steps.
    pub n: usize,
    pub dt: f64,
    pub v_min: Vec3,
    pub v_max: Vec3,
    pub u_min: Vec3,
    pub u_max: Vec3,
    pub omega_min: Vec2,
    pub omega_max: Vec2,
    pub pitch_min: f64,
    pub pitch_max: f64,
    pub theta_min: Vec2,
    pub theta_max: Vec2,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            n: 40,
            dt: 0.2,
            v_min: Vec3::repeat(-5.0),
            v_max: Vec3::repeat(5.0),
            u_min: Vec3::repeat(-2.0),
            u_max: Vec3::repeat(2.0),
            omega_min: Vec2::repeat(-1.0),
            omega_max: Vec2::repeat(1.0),
            pitch_min: -1.5,
            pitch_max: 0.5,
            theta_min: Vec2::repeat(-2.0),
            theta_max: Vec2::repeat(2.0),
        }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("horizon config: {msg}")));
        if self.n < 1 {
            return bad("n must be at least 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        for i in 0..3 {
            if !(self.v_min[i] < self.v_max[i]) || !(self.u_min[i] < self.u_max[i]) {
                return bad("velocity and input bounds need min < max");
            }
            if !(self.u_min[i] <= 0.0 && self.u_max[i] >= 0.0) {
                return bad("input bounds must contain zero");
            }
        }
        for i in 0..2 {
            if !(self.omega_min[i] < self.omega_max[i]) || !(self.theta_min[i] < self.theta_max[i]) {
                return bad("angular bounds need min < max");
            }
        }
        if !(self.pitch_min < self.pitch_max) {
            return bad("pitch_min must be below pitch_max");
        }
        Ok(())
    }

    pub fn horizon_seconds(&self) -> f64 {
        self.n as f64 * self.dt
    }

    /// Clamps a velocity into the configured box.
    pub fn clamp_velocity(&self, v: &Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| v[i].clamp(self.v_min[i], self.v_max[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn step_pos_examples() {
        let x = PosState::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        let next = step_pos(&x, &PosInput::new(Vec3::new(0.0, 2.0, 0.0)), 0.2).unwrap();
        assert_abs_diff_eq!(next.p, Vec3::new(0.2, 0.04, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(next.v, Vec3::new(1.0, 0.4, 0.0), epsilon = 1e-12);

        let x = PosState::new(Vec3::new(1.0, 1.0, 1.0), Vec3::new(0.0, 0.0, -1.0));
        let next = step_pos(&x, &PosInput::new(Vec3::new(0.0, 0.0, 2.0)), 0.5).unwrap();
        assert_abs_diff_eq!(next.p, Vec3::new(1.0, 1.0, 0.75), epsilon = 1e-12);
        assert_abs_diff_eq!(next.v, Vec3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn step_pos_zero_input_keeps_velocity() {
        let x = PosState::new(Vec3::new(3.0, -2.0, 1.0), Vec3::new(0.5, 1.5, -0.25));
        let next = step_pos(&x, &PosInput::zero(), 0.2).unwrap();
        assert_eq!(next.v, x.v);
        assert_abs_diff_eq!(next.p, x.p + x.v * 0.2, epsilon = 1e-12);
    }

    #[test]
    fn step_pos_rejects_non_finite() {
        let x = PosState::new(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::zeros());
        assert!(matches!(step_pos(&x, &PosInput::zero(), 0.2), Err(Error::InvalidArgument(_))));
        let x = PosState::at_rest(Vec3::zeros());
        let u = PosInput::new(Vec3::new(0.0, f64::INFINITY, 0.0));
        assert!(step_pos(&x, &u, 0.2).is_err());
        assert!(step_pos(&x, &PosInput::zero(), 0.0).is_err());
    }

    #[test]
    fn step_ori_examples() {
        let x = OriState { heading: 0.0, pitch: 0.0, rates: Vec2::new(1.0, 0.0) };
        let next = step_ori(&x, &OriInput::zero(), 0.2).unwrap();
        assert_abs_diff_eq!(next.heading, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(next.pitch, 0.0, epsilon = 1e-12);

        let x = OriState { heading: 3.1, pitch: 0.0, rates: Vec2::new(1.0, 0.0) };
        let next = step_ori(&x, &OriInput::zero(), 0.2).unwrap();
        assert_abs_diff_eq!(next.heading, 3.3 - 2.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(next.heading, -2.983185, epsilon = 1e-6);

        let zero = OriState::new(0.0, 0.0);
        assert_eq!(step_ori(&zero, &OriInput::zero(), 0.2).unwrap(), zero);
    }

    #[test]
    fn normalize_angle_range_and_boundaries() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(-0.5), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(unwrap_near(-3.0, 3.0), 2.0 * PI - 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rollout_basics() {
        let x0 = PosState::at_rest(Vec3::new(1.0, 2.0, 3.0));
        let traj = rollout(&x0, &vec![PosInput::zero(); 10], 0.2).unwrap();
        assert_eq!(traj.states.len(), 11);
        assert!(traj.states.iter().all(|s| *s == x0));

        let u = PosInput::new(Vec3::new(0.3, -0.1, 2.0));
        let single = rollout(&x0, &[u], 0.2).unwrap();
        assert_eq!(single.states[1], step_pos(&x0, &u, 0.2).unwrap());
        assert!(rollout(&x0, &[], 0.2).is_err());
    }

    #[test]
    fn sample_matches_knots_and_interpolates() {
        let x0 = PosState::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        let inputs = vec![PosInput::new(Vec3::new(0.0, 1.0, 0.0)); 5];
        let traj = rollout_at(10.0, &x0, &inputs, 0.2).unwrap();
        for k in 0..=5 {
            let s = traj.sample(10.0 + 0.2 * k as f64);
            assert_abs_diff_eq!(s.p, traj.states[k].p, epsilon = 1e-12);
        }
        let mid = traj.sample(10.1);
        assert_abs_diff_eq!(mid.p, Vec3::new(0.1, 0.005, 0.0), epsilon = 1e-12);
        let past = traj.sample(12.0);
        let last = traj.states[5];
        assert_abs_diff_eq!(past.p, last.p + last.v * 1.0, epsilon = 1e-12);
    }

    #[test]
    fn default_horizon_is_valid() {
        let hz = HorizonConfig::default();
        hz.validate().unwrap();
        assert_eq!(hz.n, 40);
        assert_abs_diff_eq!(hz.horizon_seconds(), 8.0, epsilon = 1e-12);
        let mut bad = hz.clone();
        bad.n = 0;
        assert!(bad.validate().is_err());
    }
}
