//! Shot semantics and the leader's cinematographic reference optimizer.
//!
//! The leader's dynamics are linear, so the reference problem is posed over
//! the stacked inputs only. Box constraints on inputs and velocities are kept
//! feasible by a sequential clamp, the minimum-height constraint is a
//! one-sided quadratic penalty, and the remaining objective is minimized by a
//! spectral projected-gradient method with a monotone Armijo safeguard.

use std::f64::consts::FRAC_PI_2;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout_at, HorizonConfig, PosInput, PosState, Trajectory, Vec2, Vec3};
use crate::error::{Error, Result};

/// Planar distance below which the shooting-angle cost is evaluated at the clamp.
pub const J_PSI_EPS: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotType {
    Lateral,
    FlyOver,
    Chase,
    Orbit,
    StaticFrame,
}

impl ShotType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShotType::Lateral => "lateral",
            ShotType::FlyOver => "fly_over",
            ShotType::Chase => "chase",
            ShotType::Orbit => "orbit",
            ShotType::StaticFrame => "static_frame",
        }
    }
}

impl std::str::FromStr for ShotType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lateral" => Ok(ShotType::Lateral),
            "fly_over" => Ok(ShotType::FlyOver),
            "chase" => Ok(ShotType::Chase),
            "orbit" => Ok(ShotType::Orbit),
            "static_frame" => Ok(ShotType::StaticFrame),
            other => Err(Error::InvalidArgument(format!("unknown shot type '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShotCommand {
    pub shot_type: ShotType,
    /// Desired elevation of the camera-to-target line, radians.
    pub shooting_angle: f64,
    pub lateral_distance: f64,
    pub behind_distance: f64,
    pub overtake_distance: f64,
    /// Arc advanced per replan by an orbit shot, radians.
    pub orbit_step: f64,
    /// Informational; shots end when the next one starts.
    pub duration: Option<f64>,
}

impl Default for ShotCommand {
    fn default() -> Self {
        Self {
            shot_type: ShotType::Lateral,
            shooting_angle: 6f64.to_radians(),
            lateral_distance: 5.0,
            behind_distance: 6.0,
            overtake_distance: 6.0,
            orbit_step: 0.2,
            duration: None,
        }
    }
}

impl ShotCommand {
    pub fn new(shot_type: ShotType) -> Self {
        Self { shot_type, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let psi = self.shooting_angle;
        if !(psi > 0.0 && psi < FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!("shooting angle {psi} outside (0, pi/2)")));
        }
        for (name, d) in [
            ("lateral_distance", self.lateral_distance),
            ("behind_distance", self.behind_distance),
            ("overtake_distance", self.overtake_distance),
        ] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !self.orbit_step.is_finite() {
            return Err(Error::InvalidArgument("orbit_step must be finite".into()));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err(Error::InvalidArgument("duration must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub p: Vec3,
    pub v: Vec3,
    pub timestamp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CineWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Minimum height of the camera above the target.
    pub qz_min: f64,
    /// Penalty weight on violations of `qz_min`.
    pub mu: f64,
}

impl Default for CineWeights {
    fn default() -> Self {
        Self { alpha1: 10.0, alpha2: 1.0, qz_min: 0.5, mu: 100.0 }
    }
}

impl CineWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0 && self.qz_min >= 0.0 && self.mu >= 0.0) {
            return Err(Error::InvalidArgument("cinematography weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Constant-velocity prediction, `n + 1` positions starting at the estimate.
pub fn predict_target(est: &TargetEstimate, n: usize, dt: f64) -> Vec<Vec3> {
    (0..=n).map(|k| est.p + est.v * (k as f64 * dt)).collect()
}

/// Desired terminal planar state of the leader.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalGoal {
    pub p: Vec2,
    pub v: Vec2,
}

/// Planar speed below which the target is treated as stationary.
const STATIONARY_SPEED: f64 = 0.1;

/// Terminal goal for `shot` given the predicted target path (sampled every
/// `dt`) and the leader's current state. For `static_frame` this returns
/// the leader's current planar position; callers that hold the frame across
/// replans keep the first goal.
pub fn terminal_goal(shot: &ShotCommand, target_pred: &[Vec3], dt: f64, leader: &PosState) -> Result<TerminalGoal> {
    let n = target_pred.len();
    if n < 2 {
        return Err(Error::InvalidArgument("target prediction needs at least two samples".into()));
    }
    let end = target_pred[n - 1].xy();
    let v_t = ((target_pred[n - 1] - target_pred[n - 2]) / dt).xy();
    let bearing = {
        let b = target_pred[0].xy() - leader.p.xy();
        if b.norm() > 1e-9 { b.normalize() } else { Vec2::new(1.0, 0.0) }
    };
    // forward: along target motion, or the leader-to-target bearing when still
    let (forward, side) = if v_t.norm() >= STATIONARY_SPEED {
        let f = v_t.normalize();
        (f, Vec2::new(-f.y, f.x))
    } else {
        (bearing, -bearing)
    };
    let goal = match shot.shot_type {
        ShotType::Lateral => TerminalGoal { p: end + side * shot.lateral_distance, v: v_t },
        ShotType::Chase => TerminalGoal { p: end - forward * shot.behind_distance, v: v_t },
        ShotType::FlyOver => TerminalGoal { p: end + forward * shot.overtake_distance, v: v_t },
        ShotType::Orbit => {
            let (s, c) = shot.orbit_step.sin_cos();
            let out = -bearing;
            let rotated = Vec2::new(c * out.x - s * out.y, s * out.x + c * out.y);
            TerminalGoal { p: end + rotated * shot.lateral_distance, v: v_t }
        }
        ShotType::StaticFrame => TerminalGoal { p: leader.p.xy(), v: Vec2::zeros() },
    };
    Ok(goal)
}

/// Shooting-angle cost `(tan psi_d - q_z / rho)^2` with `rho` the planar norm
/// of `q`, clamped below at [`J_PSI_EPS`].
pub fn j_psi(q: &Vec3, psi_d: f64) -> f64 {
    let rho = q.xy().norm().max(J_PSI_EPS);
    let e = psi_d.tan() - q.z / rho;
    e * e
}

/// Gradient of [`j_psi`] with respect to `q`.
pub fn j_psi_grad(q: &Vec3, psi_d: f64) -> Vec3 {
    let raw = q.xy().norm();
    let rho = raw.max(J_PSI_EPS);
    let e = psi_d.tan() - q.z / rho;
    let dz = -2.0 * e / rho;
    if raw > J_PSI_EPS {
        let k = 2.0 * e * q.z / (rho * rho * rho);
        Vec3::new(k * q.x, k * q.y, dz)
    } else {
        Vec3::new(0.0, 0.0, dz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlpOptions {
    pub max_iter: usize,
    /// Stationarity tolerance on the projected-gradient step.
    pub tol: f64,
    pub armijo: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-3, armijo: 1e-4 }
    }
}

/// Objective of the leader reference problem over stacked inputs.
#[derive(Clone, Debug)]
pub struct LeaderObjective<'a> {
    pub x0: PosState,
    pub target_pred: &'a [Vec3],
    pub goal: TerminalGoal,
    pub psi_d: f64,
    pub weights: CineWeights,
    pub dt: f64,
}

impl LeaderObjective<'_> {
    fn n(&self) -> usize {
        self.target_pred.len() - 1
    }

    fn states(&self, u: &[Vec3]) -> Vec<PosState> {
        let dt = self.dt;
        let mut xs = Vec::with_capacity(u.len() + 1);
        let mut x = self.x0;
        xs.push(x);
        for a in u {
            x = PosState { p: x.p + x.v * dt + a * (0.5 * dt * dt), v: x.v + a * dt };
            xs.push(x);
        }
        xs
    }

    pub fn value(&self, u: &[Vec3]) -> f64 {
        self.eval(u, false).0
    }

    pub fn value_and_grad(&self, u: &[Vec3]) -> (f64, Vec<Vec3>) {
        self.eval(u, true)
    }

    /// Shooting-angle cost summed along the rollout of `u`, unweighted.
    pub fn psi_cost(&self, u: &[Vec3]) -> f64 {
        let xs = self.states(u);
        (1..xs.len()).map(|k| j_psi(&(xs[k].p - self.target_pred[k]), self.psi_d)).sum()
    }

    fn eval(&self, u: &[Vec3], want_grad: bool) -> (f64, Vec<Vec3>) {
        let n = self.n();
        debug_assert_eq!(u.len(), n);
        let dt = self.dt;
        let w = &self.weights;
        let xs = self.states(u);
        let mut f = 0.0;
        let mut dp = vec![Vec3::zeros(); n + 1];
        for a in u {
            f += a.norm_squared();
        }
        for k in 1..=n {
            let q = xs[k].p - self.target_pred[k];
            if w.alpha1 > 0.0 {
                f += w.alpha1 * j_psi(&q, self.psi_d);
                if want_grad {
                    dp[k] += j_psi_grad(&q, self.psi_d) * w.alpha1;
                }
            }
            let short = w.qz_min - q.z;
            if short > 0.0 {
                f += w.mu * short * short;
                dp[k].z -= 2.0 * w.mu * short;
            }
        }
        let ep = xs[n].p.xy() - self.goal.p;
        let ev = xs[n].v.xy() - self.goal.v;
        f += w.alpha2 * (ep.norm_squared() + ev.norm_squared());
        if !want_grad {
            return (f, Vec::new());
        }
        dp[n].x += 2.0 * w.alpha2 * ep.x;
        dp[n].y += 2.0 * w.alpha2 * ep.y;
        let mut lam_v = Vec3::new(2.0 * w.alpha2 * ev.x, 2.0 * w.alpha2 * ev.y, 0.0);
        let mut lam_p = dp[n];
        let mut grad = vec![Vec3::zeros(); n];
        for k in (0..n).rev() {
            grad[k] = u[k] * 2.0 + lam_p * (0.5 * dt * dt) + lam_v * dt;
            // propagate the costate to step k
            lam_v += lam_p * dt;
            lam_p += dp[k];
        }
        (f, grad)
    }
}

/// Maps inputs into the feasible set: each input is clamped to the input box
/// and to the range that keeps the next velocity inside the velocity box,
/// given the already-clamped earlier inputs.
pub fn project_inputs(u: &mut [Vec3], v0: &Vec3, hz: &HorizonConfig) {
    let dt = hz.dt;
    let mut v = *v0;
    for a in u.iter_mut() {
        for i in 0..3 {
            let lo = hz.u_min[i].max((hz.v_min[i] - v[i]) / dt);
            let hi = hz.u_max[i].min((hz.v_max[i] - v[i]) / dt);
            a[i] = if lo <= hi { a[i].clamp(lo, hi) } else { 0.5 * (lo + hi) };
        }
        v += *a * dt;
    }
}

#[derive(Clone, Debug)]
pub struct LeaderSolution {
    pub trajectory: Trajectory,
    pub objective: f64,
    /// Objective of the zero-input rollout from the same state.
    pub zero_input_objective: f64,
    pub iterations: usize,
    /// Infinity norm of the projected-gradient step at the returned point.
    pub stationarity: f64,
    pub converged: bool,
    /// Largest shortfall below `qz_min` along the plan.
    pub qz_violation: f64,
    /// Objective after each accepted iteration, starting with the initial point.
    pub history: Vec<f64>,
}

/// Solves the leader reference problem from `x0`, optionally warm-started.
#[allow(clippy::too_many_arguments)]
pub fn plan_leader_reference(
    t0: f64,
    x0: &PosState,
    shot: &ShotCommand,
    goal: TerminalGoal,
    target_pred: &[Vec3],
    weights: &CineWeights,
    hz: &HorizonConfig,
    opts: &NlpOptions,
    warm_start: Option<&[Vec3]>,
) -> Result<LeaderSolution> {
    hz.validate()?;
    weights.validate()?;
    shot.validate()?;
    if !x0.is_finite() {
        return Err(Error::InvalidArgument("leader state must be finite".into()));
    }
    if target_pred.len() != hz.n + 1 {
        return Err(Error::InvalidArgument(format!(
            "target prediction has {} samples, expected {}",
            target_pred.len(),
            hz.n + 1
        )));
    }
    let mut x0 = *x0;
    let clamped = hz.clamp_velocity(&x0.v);
    if clamped != x0.v {
        warn!("leader velocity {:?} outside bounds, clamped", x0.v.as_slice());
        x0.v = clamped;
    }
    let obj = LeaderObjective { x0, target_pred, goal, psi_d: shot.shooting_angle, weights: *weights, dt: hz.dt };
    let n = hz.n;

    let zero = vec![Vec3::zeros(); n];
    let zero_f = obj.value(&zero);
    let mut u = zero.clone();
    let mut f = zero_f;
    if let Some(ws) = warm_start {
        let mut cand: Vec<Vec3> = (0..n).map(|k| ws.get(k).copied().unwrap_or_else(Vec3::zeros)).collect();
        project_inputs(&mut cand, &x0.v, hz);
        let fc = obj.value(&cand);
        if fc.is_finite() && fc < f {
            u = cand;
            f = fc;
        }
    }
    if !f.is_finite() {
        return Err(Error::Diverged { iterations: 0, last_finite: Vec::new() });
    }

    let (_, mut g) = obj.value_and_grad(&u);
    let mut history = vec![f];
    let mut step = 1.0 / g.iter().map(|v| v.amax()).fold(1e-8, f64::max);
    let mut stationarity = pg_step_norm(&u, &g, &x0.v, hz);
    let mut iterations = 0;
    let mut converged = stationarity <= opts.tol;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut alpha = step.clamp(1e-10, 1e4);
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand: Vec<Vec3> = u.iter().zip(&g).map(|(a, gi)| a - gi * alpha).collect();
            project_inputs(&mut cand, &x0.v, hz);
            let dist2: f64 = cand.iter().zip(&u).map(|(a, b)| (a - b).norm_squared()).sum();
            if dist2 == 0.0 {
                break;
            }
            let fc = obj.value(&cand);
            if !fc.is_finite() {
                let last: Vec<f64> = u.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect();
                return Err(Error::Diverged { iterations, last_finite: last });
            }
            if fc <= f - opts.armijo / alpha * dist2 {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            debug!("leader NLP line search stalled after {iterations} iterations");
            break;
        };
        let (_, gc) = obj.value_and_grad(&cand);
        // Barzilai-Borwein step for the next iteration
        let mut sy = 0.0;
        let mut ss = 0.0;
        for k in 0..n {
            let s = cand[k] - u[k];
            let y = gc[k] - g[k];
            sy += s.dot(&y);
            ss += s.dot(&s);
        }
        step = if sy > 1e-16 { ss / sy } else { alpha * 2.0 };
        u = cand;
        f = fc;
        g = gc;
        history.push(f);
        stationarity = pg_step_norm(&u, &g, &x0.v, hz);
        converged = stationarity <= opts.tol;
    }
    if !converged {
        debug!("leader NLP stopped at {iterations} iterations, stationarity {stationarity:.2e}");
    }

    let inputs: Vec<PosInput> = u.iter().map(|a| PosInput::new(*a)).collect();
    let trajectory = rollout_at(t0, &x0, &inputs, hz.dt)?;
    let qz_violation = (1..=n)
        .map(|k| weights.qz_min - (trajectory.states[k].p.z - target_pred[k].z))
        .fold(0.0, f64::max);
    Ok(LeaderSolution {
        trajectory,
        objective: f,
        zero_input_objective: zero_f,
        iterations,
        stationarity,
        converged,
        qz_violation,
        history,
    })
}

fn pg_step_norm(u: &[Vec3], g: &[Vec3], v0: &Vec3, hz: &HorizonConfig) -> f64 {
    let mut p: Vec<Vec3> = u.iter().zip(g).map(|(a, gi)| a - gi).collect();
    project_inputs(&mut p, v0, hz);
    p.iter().zip(u).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max)
}

/// Leader reference planner holding the warm-start buffer between replans.
#[derive(Clone, Debug, Default)]
pub struct LeaderPlanner {
    last: Option<(f64, Vec<Vec3>)>,
}

impl LeaderPlanner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Previous solution shifted to start at `t0`, padded with its last input.
    pub fn shifted_warm_start(&self, t0: f64, dt: f64) -> Option<Vec<Vec3>> {
        let (t_prev, u) = self.last.as_ref()?;
        let shift = ((t0 - t_prev) / dt).round().max(0.0) as usize;
        if shift >= u.len() {
            return None;
        }
        let last = *u.last()?;
        Some(u[shift..].iter().copied().chain(std::iter::repeat(last).take(shift)).collect())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn plan(
        &mut self,
        t0: f64,
        x0: &PosState,
        shot: &ShotCommand,
        goal: TerminalGoal,
        target_pred: &[Vec3],
        weights: &CineWeights,
        hz: &HorizonConfig,
        opts: &NlpOptions,
    ) -> Result<LeaderSolution> {
        let warm = self.shifted_warm_start(t0, hz.dt);
        let sol = plan_leader_reference(t0, x0, shot, goal, target_pred, weights, hz, opts, warm.as_deref())?;
        self.last = Some((t0, sol.trajectory.inputs.iter().map(|u| u.a).collect()));
        Ok(sol)
    }

    pub fn reset(&mut self) {
        self.last = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn predict_target_examples() {
        let est = TargetEstimate { p: Vec3::zeros(), v: Vec3::new(1.0, 0.0, 0.0), timestamp: 0.0 };
        let pred = predict_target(&est, 40, 0.2);
        assert_eq!(pred.len(), 41);
        assert_relative_eq!(pred[5], Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        let still = TargetEstimate { p: Vec3::new(1.0, 2.0, 0.0), v: Vec3::zeros(), timestamp: 3.0 };
        assert!(predict_target(&still, 10, 0.2).iter().all(|p| *p == still.p));
    }

    #[test]
    fn j_psi_examples() {
        let psi = 6f64.to_radians();
        assert!(j_psi(&Vec3::new(3.0, 4.0, 0.525521), psi) < 1e-10);
        assert_relative_eq!(j_psi(&Vec3::new(1.0, 0.0, 0.0), std::f64::consts::FRAC_PI_4), 1.0, epsilon = 1e-12);
        let clamped = j_psi(&Vec3::new(0.0, 0.0, 1.0), psi);
        assert_relative_eq!(clamped, (psi.tan() - 1000.0).powi(2), epsilon = 1e-6);
        assert!((clamped - 9.99790e5).abs() / 9.99790e5 < 1e-4);
    }

    #[test]
    fn j_psi_gradient_matches_finite_differences() {
        let psi = 0.3;
        for q in [Vec3::new(2.0, -1.0, 0.7), Vec3::new(-0.4, 0.3, 2.0), Vec3::new(5.0, 0.1, -1.0)] {
            let g = j_psi_grad(&q, psi);
            for i in 0..3 {
                let h = 1e-6;
                let mut qp = q;
                let mut qm = q;
                qp[i] += h;
                qm[i] -= h;
                let fd = (j_psi(&qp, psi) - j_psi(&qm, psi)) / (2.0 * h);
                assert_relative_eq!(g[i], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    fn moving_target(v: Vec2) -> Vec<Vec3> {
        let est = TargetEstimate { p: Vec3::zeros(), v: Vec3::new(v.x, v.y, 0.0), timestamp: 0.0 };
        predict_target(&est, 40, 0.2)
    }

    #[test]
    fn lateral_goal_is_left_of_motion() {
        // final target position (8, 0) when moving +x at 1 m/s for 8 s
        let pred = moving_target(Vec2::new(1.0, 0.0));
        let leader = PosState::at_rest(Vec3::new(-3.0, 4.0, 2.0));
        let goal = terminal_goal(&ShotCommand::new(ShotType::Lateral), &pred, 0.2, &leader).unwrap();
        assert_relative_eq!(goal.p, Vec2::new(8.0, 5.0), epsilon = 1e-9);
        assert_relative_eq!(goal.v, Vec2::new(1.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn lateral_goal_with_target_ending_at_ten() {
        let est = TargetEstimate { p: Vec3::new(2.0, 0.0, 0.0), v: Vec3::new(1.0, 0.0, 0.0), timestamp: 0.0 };
        let pred = predict_target(&est, 40, 0.2);
        let goal = terminal_goal(&ShotCommand::new(ShotType::Lateral), &pred, 0.2, &PosState::at_rest(Vec3::zeros()))
            .unwrap();
        assert_relative_eq!(goal.p, Vec2::new(10.0, 5.0), epsilon = 1e-9);
    }

    #[test]
    fn chase_goal_is_behind() {
        let est = TargetEstimate { p: Vec3::new(-8.0, 0.0, 0.0), v: Vec3::new(1.0, 0.0, 0.0), timestamp: 0.0 };
        let pred = predict_target(&est, 40, 0.2);
        let goal = terminal_goal(&ShotCommand::new(ShotType::Chase), &pred, 0.2, &PosState::at_rest(Vec3::zeros()))
            .unwrap();
        assert_relative_eq!(goal.p, Vec2::new(-6.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn stationary_target_uses_leader_bearing() {
        let pred = moving_target(Vec2::zeros());
        let leader = PosState::at_rest(Vec3::new(-10.0, 0.0, 3.0));
        let chase = terminal_goal(&ShotCommand::new(ShotType::Chase), &pred, 0.2, &leader).unwrap();
        assert_relative_eq!(chase.p, Vec2::new(-6.0, 0.0), epsilon = 1e-9);
        let lateral = terminal_goal(&ShotCommand::new(ShotType::Lateral), &pred, 0.2, &leader).unwrap();
        assert_relative_eq!(lateral.p, Vec2::new(-5.0, 0.0), epsilon = 1e-9);
        let fly = terminal_goal(&ShotCommand::new(ShotType::FlyOver), &pred, 0.2, &leader).unwrap();
        assert_relative_eq!(fly.p, Vec2::new(6.0, 0.0), epsilon = 1e-9);
        assert_eq!(lateral.v, Vec2::zeros());
    }

    #[test]
    fn orbit_goal_rotates_about_target() {
        let pred = moving_target(Vec2::zeros());
        let leader = PosState::at_rest(Vec3::new(5.0, 0.0, 3.0));
        let mut shot = ShotCommand::new(ShotType::Orbit);
        shot.orbit_step = std::f64::consts::FRAC_PI_2;
        let goal = terminal_goal(&shot, &pred, 0.2, &leader).unwrap();
        assert_relative_eq!(goal.p, Vec2::new(0.0, 5.0), epsilon = 1e-9);
    }

    #[test]
    fn unknown_shot_type_rejected() {
        assert!("dolly_zoom".parse::<ShotType>().is_err());
        assert_eq!("fly_over".parse::<ShotType>().unwrap(), ShotType::FlyOver);
        assert!(serde_json::from_str::<ShotType>("\"dolly_zoom\"").is_err());
    }

    #[test]
    fn shot_validation() {
        let mut s = ShotCommand::default();
        assert!(s.validate().is_ok());
        s.shooting_angle = 1.6;
        assert!(s.validate().is_err());
        s = ShotCommand { lateral_distance: -1.0, ..ShotCommand::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn projection_keeps_boxes() {
        let hz = HorizonConfig::default();
        let mut u: Vec<Vec3> = (0..hz.n).map(|k| Vec3::new(5.0, -5.0, if k % 2 == 0 { 3.0 } else { -0.1 })).collect();
        project_inputs(&mut u, &Vec3::new(4.9, -4.9, 0.0), &hz);
        let mut v = Vec3::new(4.9, -4.9, 0.0);
        for a in &u {
            assert!(a.iter().zip(hz.u_max.iter()).all(|(x, m)| *x <= m + 1e-12));
            assert!(a.iter().zip(hz.u_min.iter()).all(|(x, m)| *x >= m - 1e-12));
            v += a * hz.dt;
            assert!(v.iter().zip(hz.v_max.iter()).all(|(x, m)| *x <= m + 1e-12));
            assert!(v.iter().zip(hz.v_min.iter()).all(|(x, m)| *x >= m - 1e-12));
        }
    }

    #[test]
    fn stationary_optimum_needs_no_input() {
        let hz = HorizonConfig::default();
        let shot = ShotCommand::new(ShotType::Lateral);
        let pred = moving_target(Vec2::zeros());
        // on the goal, at the right elevation
        let rho = 5.0;
        let x0 = PosState::at_rest(Vec3::new(-rho, 0.0, rho * shot.shooting_angle.tan()));
        let goal = terminal_goal(&shot, &pred, hz.dt, &x0).unwrap();
        assert_relative_eq!(goal.p, x0.p.xy(), epsilon = 1e-12);
        let sol = plan_leader_reference(
            0.0,
            &x0,
            &shot,
            goal,
            &pred,
            &CineWeights::default(),
            &hz,
            &NlpOptions::default(),
            None,
        )
        .unwrap();
        assert!(sol.objective < 1e-12);
        assert!(sol.trajectory.inputs.iter().all(|u| u.a.norm() < 1e-9));
    }
}
